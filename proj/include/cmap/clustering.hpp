#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/json_io.hpp"
#include "cmap/minhash.hpp"

namespace cmap {

struct ClusteringConfig {
    int k = 200;
    int t = 100;
    std::size_t pre_b = 2000;
    std::size_t pre_r = 3;
    std::size_t main_b = 20;
    std::size_t main_r = 15;
    int patches_per_neuron = 3;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate() const;
};

/// Output of the top-image stage: same-layer neurons plus the images sampled
/// from the union of their top-k sets.
struct PreGroup {
    int group_id = 0;
    std::string layer;
    std::vector<int> members;         // channels, ascending
    std::vector<int> sampled_images;  // ascending
};

struct NeuronCluster {
    std::string cluster_id;
    std::string layer;
    std::vector<int> members;  // channels, ascending
    std::map<int, std::vector<Patch>> patches;

    std::vector<NeuronRef> refs() const;
};

/// Jaccard similarity of two top-k image sets.
double presim(const TopKImages& a, const TopKImages& b);

/// Jaccard similarity of two quantized maps; 0 when both are empty.
double actsim(const QuantizedMap& a, const QuantizedMap& b);
double actsim(const Dataset& dataset, const NeuronRef& i, const NeuronRef& j, int image_id);

/// Per layer: min-hash the top-k image sets, band with (pre_b, pre_r), take
/// connected components, then sample up to t images per group.
std::vector<PreGroup> preprocess(const Manifest& manifest, const TopKIndex& topk, const ClusteringConfig& config);

/// Splits every pre-group by activation-map overlap on its sampled images.
/// Cluster ids ("c0", "c1", ...) follow (layer order, smallest channel).
std::vector<NeuronCluster> main_cluster(const Dataset& dataset, const std::vector<PreGroup>& pregroups,
                                        const ClusteringConfig& config);

/// Fills representative patches from each member's top images.
void attach_patches(const Dataset& dataset, const TopKIndex& topk, std::vector<NeuronCluster>& clusters,
                    int per_neuron);

/// Exact-similarity audit of LSH output.
struct ClusterAudit {
    std::string cluster_id;
    std::size_t size = 0;
    double mean_presim = 1.0;
    /// Over member pairs, the weakest best-image activation overlap.
    double min_pair_best_actsim = 1.0;
};

std::vector<ClusterAudit> audit_clusters(const Dataset& dataset, const TopKIndex& topk,
                                         const std::vector<PreGroup>& pregroups,
                                         const std::vector<NeuronCluster>& clusters);

json pregroups_to_json(const std::vector<PreGroup>& groups);
std::vector<PreGroup> pregroups_from_json(const json& j);
json clusters_to_json(const std::vector<NeuronCluster>& clusters);
std::vector<NeuronCluster> clusters_from_json(const json& j);

/// Cluster containing each neuron, keyed by "layer:channel".
std::map<std::string, std::string> cluster_lookup(const std::vector<NeuronCluster>& clusters);

}  // namespace cmap
