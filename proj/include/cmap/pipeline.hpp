#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmap/cascade.hpp"
#include "cmap/class_graph.hpp"
#include "cmap/clustering.hpp"
#include "cmap/embedding.hpp"
#include "cmap/json_io.hpp"

namespace cmap {

namespace artifact {
inline constexpr const char* kBundle = "bundle.json";
inline constexpr const char* kTopK = "topk.json";
inline constexpr const char* kPreGroups = "pregroups.json";
inline constexpr const char* kClusters = "clusters.json";
inline constexpr const char* kAudit = "audit.json";
inline constexpr const char* kEmbedding = "embedding.json";
std::string graph_file(const std::string& class_label);
}  // namespace artifact

struct PipelineConfig {
    std::filesystem::path bundle = ".";
    /// NCAF directory; defaults to the one recorded in bundle.json, else the bundle itself.
    std::optional<std::filesystem::path> dataset;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    ClusteringConfig clustering;
    EmbeddingConfig embedding;
    std::string projection = "pca";  // or "external"
    std::optional<std::filesystem::path> layout;
    ClassGraphConfig graph;
    double min_importance = 1.0;
    CascadeConfig cascade;

    /// Pushes seed and threads into the per-stage configs.
    void propagate();
    void validate() const;
};

/// Parses a config document; unknown keys are rejected. Relative paths
/// resolve against `base`.
PipelineConfig pipeline_config_from_json(const json& j, const std::filesystem::path& base = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
json pipeline_config_to_json(const PipelineConfig& config);

/// Dataset directory for a bundle: explicit config, then bundle.json, then the bundle.
std::filesystem::path resolve_dataset(const PipelineConfig& config);

/// Throws naming the stage that produces a missing artifact.
void require_artifact(const std::filesystem::path& bundle, const std::string& file, const std::string& stage);

/// Stages read and write files under config.bundle only. Each returns a short
/// machine-readable summary.
json stage_topk(const PipelineConfig& config);
json stage_cluster(const PipelineConfig& config, bool verify);
json stage_embed(const PipelineConfig& config);
json stage_project(const PipelineConfig& config);
/// Builds (or reuses) graph_<class>.json for one class or, when empty, all classes.
json stage_graph(const PipelineConfig& config, const std::optional<std::string>& class_label);

/// Full-detail class graph for a bundle, cached as graph_<class>.json.
ClassGraph load_or_build_class_graph(const std::filesystem::path& bundle, const Dataset& dataset,
                                     const KernelBank& kernels, const std::vector<NeuronCluster>& clusters,
                                     const std::string& class_label, const ClassGraphConfig& config);

/// Integrity report for a bundle; "ok" is false when any check failed.
json validate_bundle(const PipelineConfig& config);

}  // namespace cmap
