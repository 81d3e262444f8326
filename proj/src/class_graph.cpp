#include "cmap/class_graph.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <numeric>
#include <set>

#include "cmap/parallel.hpp"

namespace cmap {

void ClassGraphConfig::validate() const {
    if (top_neurons_per_layer < 1) throw Error("top_neurons_per_layer must be >= 1");
    if (top_edges_per_dst < 1) throw Error("top_edges_per_dst must be >= 1");
    if (max_displayed_members < 1) throw Error("max_displayed_members must be >= 1");
}

namespace {

std::vector<int> class_images(const Manifest& manifest, const std::string& class_label) {
    auto images = manifest.images_of_class(class_label);
    if (images.empty()) throw Error("unknown class '" + class_label + "'");
    return images;
}

}  // namespace

std::vector<int> top_channels(const std::vector<double>& values, int n, bool positive_only) {
    std::vector<int> order;
    for (int c = 0; c < static_cast<int>(values.size()); ++c) {
        if (!positive_only || values[static_cast<std::size_t>(c)] > 0.0) order.push_back(c);
    }
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(n, 0)), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), [&](int a, int b) {
        const double va = values[static_cast<std::size_t>(a)], vb = values[static_cast<std::size_t>(b)];
        if (va != vb) return va > vb;
        return a < b;
    });
    order.resize(take);
    return order;
}

std::vector<int> neuron_importance(const Dataset& dataset, const NeuronIndex& index, const std::string& class_label,
                                   const ClassGraphConfig& config) {
    config.validate();
    const auto& manifest = dataset.manifest();
    const auto images = class_images(manifest, class_label);
    // per image: winners across all layers, as global indices
    std::vector<std::vector<std::size_t>> winners(images.size());
    parallel_for(images.size(), config.threads, [&](std::size_t x) {
        for (std::size_t l = 0; l < manifest.layers.size(); ++l) {
            const auto& layer = manifest.layers[l];
            std::vector<double> maxima(static_cast<std::size_t>(layer.channels));
            for (int c = 0; c < layer.channels; ++c) {
                maxima[static_cast<std::size_t>(c)] = dataset.max_activation({layer.id, c}, images[x]);
            }
            for (int c : top_channels(maxima, config.top_neurons_per_layer, false)) {
                winners[x].push_back(index.layer_offset(l) + static_cast<std::size_t>(c));
            }
        }
    });
    std::vector<int> scores(index.size(), 0);
    for (const auto& w : winners) {
        for (auto n : w) ++scores[n];
    }
    return scores;
}

std::vector<GroupNode> group_importance(const std::vector<NeuronCluster>& clusters, const NeuronIndex& index,
                                        const std::vector<int>& scores, int max_displayed) {
    if (scores.size() != index.size()) throw Error("importance scores do not cover every neuron");
    std::vector<bool> covered(index.size(), false);
    std::vector<GroupNode> nodes;
    auto make = [&](std::string id, const std::string& layer, std::vector<int> members) {
        GroupNode node;
        node.node_id = std::move(id);
        node.layer = layer;
        std::sort(members.begin(), members.end());
        node.members = members;
        const auto offset = index.layer_offset(index.layer_position(layer));
        auto score = [&](int c) { return scores[offset + static_cast<std::size_t>(c)]; };
        std::stable_sort(members.begin(), members.end(), [&](int a, int b) { return score(a) > score(b); });
        members.resize(std::min<std::size_t>(members.size(), static_cast<std::size_t>(max_displayed)));
        double total = 0;
        for (int c : members) total += score(c);
        node.importance = members.empty() ? 0.0 : total / static_cast<double>(members.size());
        node.displayed_members = std::move(members);
        nodes.push_back(std::move(node));
    };
    for (const auto& cluster : clusters) {
        for (int c : cluster.members) covered[index.index_of({cluster.layer, c})] = true;
        make(cluster.cluster_id, cluster.layer, cluster.members);
    }
    for (std::size_t n = 0; n < index.size(); ++n) {
        if (covered[n]) continue;
        const auto ref = index.ref(n);
        make(ref.key(), ref.layer, {ref.channel});
    }
    return nodes;
}

double max_response(std::span<const float> map, int h, int w, const Kernel& kernel, int dst, int src) {
    const int oh = same_output_size(h, kernel.stride), ow = same_output_size(w, kernel.stride);
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    conv2d_same<float>(map, h, w, kernel.slice(dst, src), kernel.kh, kernel.kw, kernel.stride, out);
    return *std::max_element(out.begin(), out.end());
}

InfluenceMap edge_influence(const Dataset& dataset, const KernelBank& kernels, const NeuronIndex& index,
                            const std::string& class_label, const ClassGraphConfig& config) {
    config.validate();
    const auto& manifest = dataset.manifest();
    const auto images = class_images(manifest, class_label);
    for (const auto& c : manifest.connections) kernels.get(c.src_layer, c.dst_layer);

    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> votes(images.size());
    parallel_for(images.size(), config.threads, [&](std::size_t x) {
        for (const auto& conn : manifest.connections) {
            const auto& kernel = kernels.get(conn.src_layer, conn.dst_layer);
            const auto& src = manifest.layer(conn.src_layer);
            const auto src_off = index.layer_offset(index.layer_position(conn.src_layer));
            const auto dst_off = index.layer_offset(index.layer_position(conn.dst_layer));
            std::vector<std::span<const float>> maps;
            for (int i = 0; i < src.channels; ++i) maps.push_back(dataset.map_view({src.id, i}, images[x]));
            std::vector<double> m(static_cast<std::size_t>(src.channels));
            for (int j = 0; j < kernel.dst_channels; ++j) {
                for (int i = 0; i < src.channels; ++i) {
                    m[static_cast<std::size_t>(i)] = max_response(maps[static_cast<std::size_t>(i)], src.height,
                                                                  src.width, kernel, j, i);
                }
                for (int i : top_channels(m, config.top_edges_per_dst, true)) {
                    votes[x].emplace_back(src_off + static_cast<std::size_t>(i), dst_off + static_cast<std::size_t>(j));
                }
            }
        }
    });
    InfluenceMap out;
    for (const auto& v : votes) {
        for (const auto& e : v) ++out[e];
    }
    return out;
}

std::vector<GroupEdge> group_edges(const InfluenceMap& influence, const NeuronIndex& index,
                                   const std::vector<GroupNode>& nodes) {
    std::vector<std::size_t> node_of(index.size(), std::numeric_limits<std::size_t>::max());
    for (std::size_t g = 0; g < nodes.size(); ++g) {
        for (int c : nodes[g].members) node_of[index.index_of({nodes[g].layer, c})] = g;
    }
    std::map<std::pair<std::size_t, std::size_t>, double> sums;
    for (const auto& [edge, weight] : influence) {
        const auto a = node_of.at(edge.first), b = node_of.at(edge.second);
        if (a == std::numeric_limits<std::size_t>::max() || b == std::numeric_limits<std::size_t>::max()) continue;
        sums[{a, b}] += weight;
    }
    std::vector<GroupEdge> out;
    for (const auto& [key, total] : sums) {
        if (total <= 0) continue;
        const auto& a = nodes[key.first];
        const auto& b = nodes[key.second];
        out.push_back({a.node_id, b.node_id, total / static_cast<double>(a.members.size() * b.members.size())});
    }
    return out;
}

bool node_id_less(const std::string& a, const std::string& b) {
    auto numeric = [](const std::string& s) -> long long {
        if (s.size() < 2 || s[0] != 'c') return -1;
        for (std::size_t p = 1; p < s.size(); ++p) {
            if (!std::isdigit(static_cast<unsigned char>(s[p]))) return -1;
        }
        return std::stoll(s.substr(1));
    };
    const auto na = numeric(a), nb = numeric(b);
    if ((na >= 0) != (nb >= 0)) return na >= 0;
    if (na >= 0 && na != nb) return na < nb;
    return a < b;
}

ClassSummary summarize_class(const Dataset& dataset, const KernelBank& kernels,
                             const std::vector<NeuronCluster>& clusters, const std::string& class_label,
                             const ClassGraphConfig& config) {
    const NeuronIndex index(dataset.manifest());
    ClassSummary s;
    s.class_label = class_label;
    s.scores = neuron_importance(dataset, index, class_label, config);
    s.influence = edge_influence(dataset, kernels, index, class_label, config);
    s.nodes = group_importance(clusters, index, s.scores, config.max_displayed_members);
    s.edges = group_edges(s.influence, index, s.nodes);
    return s;
}

bool ClassGraph::has_node(const std::string& node_id) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const GroupNode& n) { return n.node_id == node_id; });
}

ClassGraph build_class_graph(const Manifest& manifest, const ClassSummary& summary, double min_importance) {
    ClassGraph g;
    g.class_label = summary.class_label;
    std::set<std::string> kept;
    for (const auto& n : summary.nodes) {
        if (n.importance >= min_importance) {
            g.nodes.push_back(n);
            kept.insert(n.node_id);
        }
    }
    std::sort(g.nodes.begin(), g.nodes.end(), [&](const GroupNode& a, const GroupNode& b) {
        const auto la = manifest.layer_position(a.layer), lb = manifest.layer_position(b.layer);
        if (la != lb) return la < lb;
        if (a.importance != b.importance) return a.importance > b.importance;
        return node_id_less(a.node_id, b.node_id);
    });
    std::map<std::string, std::size_t> position;
    for (std::size_t p = 0; p < g.nodes.size(); ++p) position[g.nodes[p].node_id] = p;
    for (const auto& e : summary.edges) {
        if (kept.count(e.src_node) && kept.count(e.dst_node)) g.edges.push_back(e);
    }
    std::sort(g.edges.begin(), g.edges.end(), [&](const GroupEdge& a, const GroupEdge& b) {
        return std::make_pair(position[a.src_node], position[a.dst_node]) <
               std::make_pair(position[b.src_node], position[b.dst_node]);
    });
    return g;
}

ClassGraph filter_class_graph(const ClassGraph& graph, double min_importance) {
    ClassGraph out;
    out.class_label = graph.class_label;
    std::set<std::string> kept;
    for (const auto& n : graph.nodes) {
        if (n.importance >= min_importance) {
            out.nodes.push_back(n);
            kept.insert(n.node_id);
        }
    }
    for (const auto& e : graph.edges) {
        if (kept.count(e.src_node) && kept.count(e.dst_node)) out.edges.push_back(e);
    }
    return out;
}

json class_graph_to_json(const ClassGraph& graph) {
    json nodes = json::array(), edges = json::array();
    auto keys = [](const std::string& layer, const std::vector<int>& channels) {
        json out = json::array();
        for (int c : channels) out.push_back(NeuronRef{layer, c}.key());
        return out;
    };
    for (const auto& n : graph.nodes) {
        nodes.push_back({{"node_id", n.node_id},
                         {"layer", n.layer},
                         {"members", keys(n.layer, n.members)},
                         {"displayed_members", keys(n.layer, n.displayed_members)},
                         {"importance", n.importance}});
    }
    for (const auto& e : graph.edges) {
        edges.push_back({{"src_node", e.src_node}, {"dst_node", e.dst_node}, {"weight", e.weight}});
    }
    return {{"class", graph.class_label}, {"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

ClassGraph class_graph_from_json(const json& j) {
    ClassGraph g;
    g.class_label = j.at("class").get<std::string>();
    auto channels = [](const json& list, const std::string& layer) {
        std::vector<int> out;
        for (const auto& k : list) {
            const auto ref = NeuronRef::parse(k.get<std::string>());
            if (ref.layer != layer) throw Error("graph node member " + ref.key() + " is not in layer " + layer);
            out.push_back(ref.channel);
        }
        return out;
    };
    for (const auto& n : j.at("nodes")) {
        GroupNode node;
        node.node_id = n.at("node_id").get<std::string>();
        node.layer = n.at("layer").get<std::string>();
        node.members = channels(n.at("members"), node.layer);
        node.displayed_members = channels(n.at("displayed_members"), node.layer);
        node.importance = n.at("importance").get<double>();
        g.nodes.push_back(std::move(node));
    }
    for (const auto& e : j.at("edges")) {
        g.edges.push_back({e.at("src_node").get<std::string>(), e.at("dst_node").get<std::string>(),
                           e.at("weight").get<double>()});
    }
    return g;
}

std::string class_file_stem(const std::string& class_label) {
    std::string out;
    bool changed = class_label.empty();
    for (char ch : class_label) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isalnum(u) || ch == '-' || ch == '_' || ch == '.') {
            out.push_back(ch);
        } else {
            out.push_back('_');
            changed = true;
        }
    }
    if (out.empty() || out[0] == '.') changed = true;
    if (changed) out += "-" + fnv1a_hex(class_label).substr(0, 8);
    return out;
}

}  // namespace cmap
