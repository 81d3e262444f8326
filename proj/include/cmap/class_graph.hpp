#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/clustering.hpp"
#include "cmap/json_io.hpp"
#include "cmap/kernels.hpp"
#include "cmap/types.hpp"

namespace cmap {

struct ClassGraphConfig {
    int top_neurons_per_layer = 5;
    int top_edges_per_dst = 1;
    int max_displayed_members = 10;
    unsigned threads = 1;

    void validate() const;
};

/// Per-neuron importance for one class, indexed by NeuronIndex.
/// For every class image and layer, the top_neurons_per_layer neurons by max
/// activation gain one vote (ties by ascending channel).
std::vector<int> neuron_importance(const Dataset& dataset, const NeuronIndex& index, const std::string& class_label,
                                   const ClassGraphConfig& config = {});

/// Top-n indices by value, ties by ascending index. With positive_only, only
/// values > 0 are eligible.
std::vector<int> top_channels(const std::vector<double>& values, int n, bool positive_only);

struct GroupNode {
    std::string node_id;
    std::string layer;
    std::vector<int> members;            // channels, ascending
    std::vector<int> displayed_members;  // by score descending, ties by channel
    double importance = 0.0;
};

/// One node per cluster; neurons outside every cluster become singleton nodes
/// named by their "layer:channel" key.
std::vector<GroupNode> group_importance(const std::vector<NeuronCluster>& clusters, const NeuronIndex& index,
                                        const std::vector<int>& scores, int max_displayed = 10);

/// Neuron-to-neuron major-path counts keyed by (src, dst) NeuronIndex positions.
using InfluenceMap = std::map<std::pair<std::size_t, std::size_t>, int>;

/// m(i, j) = max over positions of conv2d_same(Z_i, K[j][i]); per class image
/// and connection, each dst j votes for its top_edges_per_dst sources with
/// m > 0 (ties by ascending channel).
InfluenceMap edge_influence(const Dataset& dataset, const KernelBank& kernels, const NeuronIndex& index,
                            const std::string& class_label, const ClassGraphConfig& config = {});

/// max over positions of conv2d_same(map, kernel slice).
double max_response(std::span<const float> map, int h, int w, const Kernel& kernel, int dst, int src);

struct GroupEdge {
    std::string src_node;
    std::string dst_node;
    double weight = 0.0;
};

/// Mean of neuron edge weights over all (i in G1, j in G2); absent pairs count
/// as zero. Only positive weights are returned.
std::vector<GroupEdge> group_edges(const InfluenceMap& influence, const NeuronIndex& index,
                                   const std::vector<GroupNode>& nodes);

/// Orders "c12" after "c3"; other ids compare as strings after cluster ids.
bool node_id_less(const std::string& a, const std::string& b);

/// Everything computed for one class before the importance filter.
struct ClassSummary {
    std::string class_label;
    std::vector<int> scores;
    InfluenceMap influence;
    std::vector<GroupNode> nodes;
    std::vector<GroupEdge> edges;
};

ClassSummary summarize_class(const Dataset& dataset, const KernelBank& kernels,
                             const std::vector<NeuronCluster>& clusters, const std::string& class_label,
                             const ClassGraphConfig& config = {});

struct ClassGraph {
    std::string class_label;
    std::vector<GroupNode> nodes;  // layer order, then importance descending, then node id
    std::vector<GroupEdge> edges;

    bool has_node(const std::string& node_id) const;
};

/// Keeps nodes with importance >= min_importance and the edges between them.
ClassGraph build_class_graph(const Manifest& manifest, const ClassSummary& summary, double min_importance);

/// Same filter applied to an already ordered graph.
ClassGraph filter_class_graph(const ClassGraph& graph, double min_importance);

json class_graph_to_json(const ClassGraph& graph);
ClassGraph class_graph_from_json(const json& j);

/// Filesystem-safe form of a class label for graph_<class>.json.
std::string class_file_stem(const std::string& class_label);

}  // namespace cmap
