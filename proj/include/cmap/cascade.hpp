#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmap/class_graph.hpp"
#include "cmap/clustering.hpp"
#include "cmap/json_io.hpp"
#include "cmap/kernels.hpp"

namespace cmap {

struct CascadeConfig {
    int trigger_top_n = 5;
    bool normalize = true;
    bool relu = true;

    void validate() const;
};

struct TriggeredNeuron {
    NeuronRef neuron;
    double score = 0.0;
    std::string cluster_id;
    std::optional<bool> in_class_summary;  // set only with a class context
};

struct CascadeEdge {
    NeuronRef src;
    NeuronRef dst;
    double strength = 0.0;
};

struct CascadeLayer {
    std::string layer;
    std::vector<TriggeredNeuron> triggered;  // score descending, ties by channel
    std::vector<CascadeEdge> edges;
};

struct CascadeResult {
    std::string seed_cluster;
    std::optional<std::string> class_label;
    std::vector<CascadeLayer> layers;  // every layer after the seed layer
};

/// Seeds the cluster's member maps with ones and feeds them forward through
/// the kernels. Layers are visited in order; a layer receives the sum over
/// incoming connections of conv2d_same from the active neurons of each
/// source layer, then optional ReLU and layer-wide max normalization. The top
/// trigger_top_n neurons with a positive score stay active. Edges hold the
/// max of each active source's raw contribution to each triggered neuron,
/// when positive.
CascadeResult run_cascade(const Manifest& manifest, const KernelBank& kernels,
                          const std::vector<NeuronCluster>& clusters, const std::string& seed_cluster,
                          const CascadeConfig& config = {}, const ClassGraph* class_context = nullptr);

json cascade_to_json(const CascadeResult& result);
CascadeResult cascade_from_json(const json& j);

}  // namespace cmap
