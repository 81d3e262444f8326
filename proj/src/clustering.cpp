#include "cmap/clustering.hpp"

#include <algorithm>
#include <set>

#include "cmap/parallel.hpp"
#include "cmap/rng.hpp"
#include "cmap/union_find.hpp"

namespace cmap {

void ClusteringConfig::validate() const {
    if (k < 1 || t < 1 || pre_b < 1 || pre_r < 1 || main_b < 1 || main_r < 1 || patches_per_neuron < 0) {
        throw Error("clustering parameters must be positive");
    }
}

std::vector<NeuronRef> NeuronCluster::refs() const {
    std::vector<NeuronRef> out;
    for (int c : members) out.push_back({layer, c});
    return out;
}

double presim(const TopKImages& a, const TopKImages& b) {
    std::vector<int> sa = a.image_ids, sb = b.image_ids;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<int> inter;
    std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(inter));
    const std::size_t uni = sa.size() + sb.size() - inter.size();
    return uni == 0 ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
}

double actsim(const QuantizedMap& a, const QuantizedMap& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw Error("actsim requires maps of the same layer");
    std::size_t both = 0, either = 0;
    for (std::size_t p = 0; p < a.mask.size(); ++p) {
        both += a.mask[p] && b.mask[p];
        either += a.mask[p] || b.mask[p];
    }
    return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

double actsim(const Dataset& dataset, const NeuronRef& i, const NeuronRef& j, int image_id) {
    if (i.layer != j.layer) throw Error("actsim requires neurons of the same layer: " + i.key() + " vs " + j.key());
    return actsim(quantize(dataset.map(i, image_id)), quantize(dataset.map(j, image_id)));
}

std::vector<PreGroup> preprocess(const Manifest& manifest, const TopKIndex& topk, const ClusteringConfig& config) {
    config.validate();
    const BandingParams banding{config.pre_b, config.pre_r};
    const HashFamily family(derive_seed(config.seed, "pre"), banding.hashes());
    std::vector<PreGroup> out;
    for (const auto& layer : manifest.layers) {
        std::vector<MinHashSignature> sigs(layer.channels);
        parallel_for(static_cast<std::size_t>(layer.channels), config.threads, [&](std::size_t c) {
            const auto& ids = topk.at({layer.id, static_cast<int>(c)}).image_ids;
            const std::vector<std::uint64_t> set(ids.begin(), ids.end());
            sigs[c] = signature(set, family);
        });
        std::map<std::size_t, MinHashSignature> keyed;
        for (std::size_t c = 0; c < sigs.size(); ++c) keyed.emplace(c, std::move(sigs[c]));
        const auto groups = components(band_group(keyed, banding));

        for (std::size_t g = 0; g < groups.size(); ++g) {
            PreGroup pg;
            pg.group_id = static_cast<int>(out.size());
            pg.layer = layer.id;
            std::set<int> pooled;
            for (auto c : groups[g]) {
                pg.members.push_back(static_cast<int>(c));
                const auto& ids = topk.at({layer.id, static_cast<int>(c)}).image_ids;
                pooled.insert(ids.begin(), ids.end());
            }
            Rng rng(derive_seed(config.seed, "sample:" + layer.id, g));
            pg.sampled_images = rng.sample(std::vector<int>(pooled.begin(), pooled.end()),
                                           static_cast<std::size_t>(config.t));
            std::sort(pg.sampled_images.begin(), pg.sampled_images.end());
            out.push_back(std::move(pg));
        }
    }
    return out;
}

std::vector<NeuronCluster> main_cluster(const Dataset& dataset, const std::vector<PreGroup>& pregroups,
                                        const ClusteringConfig& config) {
    config.validate();
    const BandingParams banding{config.main_b, config.main_r};
    const HashFamily family(derive_seed(config.seed, "main"), banding.hashes());
    const auto& manifest = dataset.manifest();

    std::vector<NeuronCluster> clusters;
    for (const auto& group : pregroups) {
        const auto& layer = manifest.layer(group.layer);
        const std::size_t cells = static_cast<std::size_t>(layer.cells());
        const auto values = dataset.layer_values(layer.id);
        const std::size_t members = group.members.size();

        // Co-bucket edges found on each sampled image, as local member indices.
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(group.sampled_images.size());
        if (members > 1) {
            parallel_for(group.sampled_images.size(), config.threads, [&](std::size_t s) {
                const int image = group.sampled_images[s];
                std::map<std::size_t, MinHashSignature> sigs;
                for (std::size_t m = 0; m < members; ++m) {
                    const auto offset = (static_cast<std::size_t>(image) * layer.channels + group.members[m]) * cells;
                    const auto mask = quantize(values.subspan(offset, cells), layer.height, layer.width);
                    const auto positions = mask.true_positions();
                    if (positions.empty()) continue;
                    sigs.emplace(m, signature(positions, family));
                }
                if (sigs.size() < 2) return;
                for_each_bucket_edge(band_group(sigs, banding),
                                     [&](std::size_t a, std::size_t b) { edges[s].emplace_back(a, b); });
            });
        }
        UnionFind uf(members);
        for (const auto& list : edges) {
            for (const auto& [a, b] : list) uf.unite(a, b);
        }
        for (const auto& comp : uf.groups()) {
            NeuronCluster c;
            c.layer = group.layer;
            for (auto m : comp) c.members.push_back(group.members[m]);
            std::sort(c.members.begin(), c.members.end());
            clusters.push_back(std::move(c));
        }
    }

    std::sort(clusters.begin(), clusters.end(), [&](const NeuronCluster& a, const NeuronCluster& b) {
        const auto la = manifest.layer(a.layer).order_index, lb = manifest.layer(b.layer).order_index;
        if (la != lb) return la < lb;
        return a.members.front() < b.members.front();
    });
    for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].cluster_id = "c" + std::to_string(i);
    return clusters;
}

void attach_patches(const Dataset& dataset, const TopKIndex& topk, std::vector<NeuronCluster>& clusters,
                    int per_neuron) {
    for (auto& cluster : clusters) {
        cluster.patches.clear();
        for (int channel : cluster.members) {
            const NeuronRef n{cluster.layer, channel};
            auto& list = cluster.patches[channel];
            for (int image : topk.at(n).image_ids) {
                if (static_cast<int>(list.size()) >= per_neuron) break;
                if (dataset.max_activation(n, image) <= 0.0f) continue;
                list.push_back(dataset.extract_patch(n, image));
            }
        }
    }
}

std::vector<ClusterAudit> audit_clusters(const Dataset& dataset, const TopKIndex& topk,
                                         const std::vector<PreGroup>& pregroups,
                                         const std::vector<NeuronCluster>& clusters) {
    std::vector<ClusterAudit> out;
    for (const auto& cluster : clusters) {
        ClusterAudit audit;
        audit.cluster_id = cluster.cluster_id;
        audit.size = cluster.members.size();
        if (cluster.members.size() < 2) {
            out.push_back(audit);
            continue;
        }
        const PreGroup* home = nullptr;
        for (const auto& g : pregroups) {
            if (g.layer == cluster.layer &&
                std::binary_search(g.members.begin(), g.members.end(), cluster.members.front())) {
                home = &g;
                break;
            }
        }
        if (!home) throw Error("cluster " + cluster.cluster_id + " has no pre-group");

        double presim_total = 0;
        std::size_t pairs = 0;
        audit.min_pair_best_actsim = 1.0;
        for (std::size_t a = 0; a < cluster.members.size(); ++a) {
            for (std::size_t b = a + 1; b < cluster.members.size(); ++b) {
                const NeuronRef i{cluster.layer, cluster.members[a]}, j{cluster.layer, cluster.members[b]};
                presim_total += presim(topk.at(i), topk.at(j));
                double best = 0;
                for (int image : home->sampled_images) best = std::max(best, actsim(dataset, i, j, image));
                audit.min_pair_best_actsim = std::min(audit.min_pair_best_actsim, best);
                ++pairs;
            }
        }
        audit.mean_presim = presim_total / static_cast<double>(pairs);
        out.push_back(audit);
    }
    return out;
}

json pregroups_to_json(const std::vector<PreGroup>& groups) {
    json arr = json::array();
    for (const auto& g : groups) {
        arr.push_back({{"group_id", g.group_id},
                       {"layer_id", g.layer},
                       {"members", g.members},
                       {"sampled_images", g.sampled_images}});
    }
    return arr;
}

std::vector<PreGroup> pregroups_from_json(const json& j) {
    std::vector<PreGroup> out;
    for (const auto& e : j) {
        PreGroup g;
        e.at("group_id").get_to(g.group_id);
        e.at("layer_id").get_to(g.layer);
        e.at("members").get_to(g.members);
        e.at("sampled_images").get_to(g.sampled_images);
        out.push_back(std::move(g));
    }
    return out;
}

json clusters_to_json(const std::vector<NeuronCluster>& clusters) {
    json arr = json::array();
    for (const auto& c : clusters) {
        json members = json::array();
        json patches = json::object();
        for (int m : c.members) {
            const auto key = NeuronRef{c.layer, m}.key();
            members.push_back(key);
            if (auto it = c.patches.find(m); it != c.patches.end()) patches[key] = it->second;
        }
        arr.push_back({{"cluster_id", c.cluster_id}, {"layer_id", c.layer}, {"members", members}, {"patches", patches}});
    }
    return arr;
}

std::vector<NeuronCluster> clusters_from_json(const json& j) {
    std::vector<NeuronCluster> out;
    for (const auto& e : j) {
        NeuronCluster c;
        e.at("cluster_id").get_to(c.cluster_id);
        e.at("layer_id").get_to(c.layer);
        for (const auto& key : e.at("members")) {
            const auto ref = NeuronRef::parse(key.get<std::string>());
            if (ref.layer != c.layer) throw Error("cluster " + c.cluster_id + " mixes layers");
            c.members.push_back(ref.channel);
        }
        if (auto it = e.find("patches"); it != e.end()) {
            for (const auto& [key, list] : it->items()) {
                c.patches[NeuronRef::parse(key).channel] = list.get<std::vector<Patch>>();
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::map<std::string, std::string> cluster_lookup(const std::vector<NeuronCluster>& clusters) {
    std::map<std::string, std::string> out;
    for (const auto& c : clusters) {
        for (int m : c.members) out[NeuronRef{c.layer, m}.key()] = c.cluster_id;
    }
    return out;
}

}  // namespace cmap
