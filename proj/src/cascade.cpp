#include "cmap/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace cmap {

void CascadeConfig::validate() const {
    if (trigger_top_n < 1) throw Error("trigger_top_n must be >= 1");
}

namespace {

using Plane = std::vector<double>;

}  // namespace

CascadeResult run_cascade(const Manifest& manifest, const KernelBank& kernels,
                          const std::vector<NeuronCluster>& clusters, const std::string& seed_cluster,
                          const CascadeConfig& config, const ClassGraph* class_context) {
    config.validate();
    auto seed = std::find_if(clusters.begin(), clusters.end(),
                             [&](const NeuronCluster& c) { return c.cluster_id == seed_cluster; });
    if (seed == clusters.end()) throw Error("unknown cluster '" + seed_cluster + "'");
    const auto lookup = cluster_lookup(clusters);

    CascadeResult result;
    result.seed_cluster = seed_cluster;
    if (class_context) result.class_label = class_context->class_label;

    // active maps per layer position, keyed by channel
    std::vector<std::map<int, Plane>> active(manifest.layers.size());
    const auto seed_pos = manifest.layer_position(seed->layer);
    const auto& seed_layer = manifest.layers[seed_pos];
    for (int c : seed->members) active[seed_pos][c] = Plane(static_cast<std::size_t>(seed_layer.cells()), 1.0);

    for (std::size_t pos = seed_pos + 1; pos < manifest.layers.size(); ++pos) {
        const auto& layer = manifest.layers[pos];
        const auto cells = static_cast<std::size_t>(layer.cells());
        std::vector<Plane> maps(static_cast<std::size_t>(layer.channels), Plane(cells, 0.0));
        // raw contributions of each active source, kept for edge strengths
        struct Source {
            NeuronRef ref;
            std::vector<double> peak;  // per dst channel
        };
        std::vector<Source> sources;
        Plane contribution(cells);
        for (const auto& conn : manifest.connections) {
            if (conn.dst_layer != layer.id) continue;
            const auto src_pos = manifest.layer_position(conn.src_layer);
            if (active[src_pos].empty()) continue;
            const auto& kernel = kernels.get(conn.src_layer, conn.dst_layer);
            const auto& src = manifest.layers[src_pos];
            for (const auto& [i, plane] : active[src_pos]) {
                Source s{{src.id, i}, std::vector<double>(static_cast<std::size_t>(layer.channels))};
                for (int j = 0; j < layer.channels; ++j) {
                    conv2d_same<double>(plane, src.height, src.width, kernel.slice(j, i), kernel.kh, kernel.kw,
                                        kernel.stride, contribution);
                    auto& dst = maps[static_cast<std::size_t>(j)];
                    for (std::size_t p = 0; p < cells; ++p) dst[p] += contribution[p];
                    s.peak[static_cast<std::size_t>(j)] = *std::max_element(contribution.begin(), contribution.end());
                }
                sources.push_back(std::move(s));
            }
        }
        if (config.relu) {
            for (auto& m : maps) {
                for (auto& v : m) v = std::max(v, 0.0);
            }
        }
        if (config.normalize) {
            double peak = 0.0;
            for (const auto& m : maps) peak = std::max(peak, *std::max_element(m.begin(), m.end()));
            if (peak > 0.0) {
                for (auto& m : maps) {
                    for (auto& v : m) v /= peak;
                }
            }
        }
        std::vector<double> scores(static_cast<std::size_t>(layer.channels));
        for (int j = 0; j < layer.channels; ++j) {
            const auto& m = maps[static_cast<std::size_t>(j)];
            scores[static_cast<std::size_t>(j)] = *std::max_element(m.begin(), m.end());
            if (!std::isfinite(scores[static_cast<std::size_t>(j)])) {
                throw Error("cascade produced a non-finite activation in layer " + layer.id);
            }
        }

        CascadeLayer out;
        out.layer = layer.id;
        for (int j : top_channels(scores, config.trigger_top_n, true)) {
            TriggeredNeuron t;
            t.neuron = {layer.id, j};
            t.score = scores[static_cast<std::size_t>(j)];
            auto it = lookup.find(t.neuron.key());
            t.cluster_id = it == lookup.end() ? t.neuron.key() : it->second;
            if (class_context) t.in_class_summary = class_context->has_node(t.cluster_id);
            out.triggered.push_back(t);
            active[pos][j] = std::move(maps[static_cast<std::size_t>(j)]);
            for (const auto& s : sources) {
                const double strength = s.peak[static_cast<std::size_t>(j)];
                if (strength > 0.0) out.edges.push_back({s.ref, t.neuron, strength});
            }
        }
        std::sort(out.edges.begin(), out.edges.end(), [&](const CascadeEdge& a, const CascadeEdge& b) {
            const auto ka = std::make_tuple(manifest.layer_position(a.src.layer), a.src.channel, a.dst.channel);
            const auto kb = std::make_tuple(manifest.layer_position(b.src.layer), b.src.channel, b.dst.channel);
            return ka < kb;
        });
        result.layers.push_back(std::move(out));
    }
    return result;
}

json cascade_to_json(const CascadeResult& r) {
    json layers = json::array();
    for (const auto& l : r.layers) {
        json triggered = json::array(), edges = json::array();
        for (const auto& t : l.triggered) {
            triggered.push_back({{"neuron", t.neuron.key()},
                                 {"score", t.score},
                                 {"cluster_id", t.cluster_id},
                                 {"in_class_summary", t.in_class_summary ? json(*t.in_class_summary) : json(nullptr)}});
        }
        for (const auto& e : l.edges) {
            edges.push_back({{"src", e.src.key()}, {"dst", e.dst.key()}, {"strength", e.strength}});
        }
        layers.push_back({{"layer", l.layer}, {"triggered", std::move(triggered)}, {"edges", std::move(edges)}});
    }
    return {{"seed_cluster", r.seed_cluster},
            {"class", r.class_label ? json(*r.class_label) : json(nullptr)},
            {"layers", std::move(layers)}};
}

CascadeResult cascade_from_json(const json& j) {
    CascadeResult r;
    r.seed_cluster = j.at("seed_cluster").get<std::string>();
    if (j.contains("class") && !j.at("class").is_null()) r.class_label = j.at("class").get<std::string>();
    for (const auto& l : j.at("layers")) {
        CascadeLayer layer;
        layer.layer = l.at("layer").get<std::string>();
        for (const auto& t : l.at("triggered")) {
            TriggeredNeuron n;
            n.neuron = NeuronRef::parse(t.at("neuron").get<std::string>());
            n.score = t.at("score").get<double>();
            n.cluster_id = t.at("cluster_id").get<std::string>();
            if (!t.at("in_class_summary").is_null()) n.in_class_summary = t.at("in_class_summary").get<bool>();
            layer.triggered.push_back(std::move(n));
        }
        for (const auto& e : l.at("edges")) {
            layer.edges.push_back({NeuronRef::parse(e.at("src").get<std::string>()),
                                   NeuronRef::parse(e.at("dst").get<std::string>()), e.at("strength").get<double>()});
        }
        r.layers.push_back(std::move(layer));
    }
    return r;
}

}  // namespace cmap
