#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/embedding.hpp"
#include "cmap/kernels.hpp"
#include "cmap/pipeline.hpp"

namespace cmap {

/// Unknown id in a query (HTTP 404).
class NotFound : public Error {
  public:
    using Error::Error;
};

/// Malformed query (HTTP 400).
class BadRequest : public Error {
  public:
    using Error::Error;
};

/// Loaded, cross-checked artifacts of one bundle. Immutable after open()
/// except for the per-class graph cache.
class SummaryBundle {
  public:
    /// Needs clusters.json and embedding.json; throws naming the bad file.
    static std::shared_ptr<SummaryBundle> open(const PipelineConfig& config);

    const Manifest& manifest() const { return dataset_.manifest(); }
    const NeuronIndex& index() const { return index_; }
    const std::vector<NeuronCluster>& clusters() const { return clusters_; }
    const EmbeddingArtifact& embedding() const { return embedding_; }
    const PipelineConfig& config() const { return config_; }

    json manifest_json() const;
    json layers_json() const;
    json clusters_json(const std::optional<std::string>& layer) const;
    /// filter: "all", "class:<label>" or "pinned"; `pinned` lists cluster ids
    /// and/or neuron keys separated by commas.
    json embedding_view(const std::string& filter, const std::string& pinned = "") const;
    json neighbors_json(const std::string& neuron, std::optional<long long> k) const;
    json patches_json(const std::string& neuron, std::optional<long long> limit) const;
    json graph_json(const std::string& class_label, std::optional<double> min_importance) const;
    /// Body shaped like the cascade_request schema.
    json cascade_json(const json& request) const;

    /// Full graph of a class, built at most once and cached on disk.
    const ClassGraph& class_graph(const std::string& class_label) const;

  private:
    SummaryBundle(const PipelineConfig& config, Dataset dataset);

    std::size_t neuron_index(const std::string& key) const;
    const NeuronCluster& cluster_of(std::size_t neuron) const;

    struct GraphSlot {
        std::once_flag once;
        std::optional<ClassGraph> graph;
    };

    PipelineConfig config_;
    Dataset dataset_;
    NeuronIndex index_;
    KernelBank kernels_;
    std::vector<NeuronCluster> clusters_;
    std::map<std::string, std::size_t> cluster_pos_;
    std::vector<std::size_t> neuron_cluster_;
    EmbeddingArtifact embedding_;
    std::map<std::string, std::unique_ptr<GraphSlot>> graphs_;  // one per class, fixed at open()
};

}  // namespace cmap
