#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cmap/clustering.hpp"
#include "cmap/json_io.hpp"

namespace cmap {

// ---------------------------------------------------------------------------
// Synthetic datasets with planted concepts

struct SyntheticLayer {
    std::string id;
    int channels = 64;
    int height = 8;
    int width = 8;
};

struct SyntheticSpec {
    std::vector<SyntheticLayer> layers{{"conv_a", 64, 16, 16}, {"conv_b", 64, 8, 8}, {"conv_c", 64, 8, 8}};
    int images = 500;
    int classes = 5;
    int groups_per_layer = 8;
    int group_size = 5;
    /// Images on which each concept fires; should be >= the top-k size.
    int pool_size = 240;
    double region_fraction = 0.25;
    /// Expected pairwise overlap of member masks on a shared image.
    double iou_target = 0.8;
    /// Amplitude and per-cell firing rate of off-concept activity.
    double noise = 0.1;
    double noise_density = 0.15;
    int kernel_size = 3;
    double path_weight = 1.0;
    double kernel_noise = 0.02;
    int pixel_size = 224;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(json& j, const SyntheticSpec& s);
void from_json(const json& j, SyntheticSpec& s);

/// Planted group index per channel, per layer; -1 for unplanted neurons.
struct PlantedTruth {
    std::map<std::string, std::vector<int>> labels;
};

/// Writes manifest.json, act_*.bin, kern_*.bin and planted.json under `root`.
PlantedTruth generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);
PlantedTruth read_planted(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Partition agreement

/// Flattens clusters into one label per neuron (neurons ordered by layer
/// order, then channel). Neurons absent from every cluster get unique labels.
std::vector<int> partition_labels(const Manifest& manifest, const std::vector<NeuronCluster>& clusters);
std::vector<int> partition_labels(const Manifest& manifest, const PlantedTruth& truth);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);
/// F1 of "same cluster" pair decisions of `predicted` against `truth`.
double pairwise_f1(const std::vector<int>& predicted, const std::vector<int>& truth);

// ---------------------------------------------------------------------------
// Intruder tasks and scoring

enum class TaskMode { pipeline, reference, random };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);

struct TaskSlot {
    NeuronRef neuron;
    std::vector<Patch> patches;
    bool in_cluster = false;
};

struct IntruderTask {
    int task_id = 0;
    TaskMode mode = TaskMode::random;
    std::string cluster_id;  // empty for random tasks
    std::vector<TaskSlot> slots;
    int intruder_slot = -1;  // -1 for random tasks
};

/// Shares of pipeline-cluster, reference-cluster and random tasks.
struct TaskProportions {
    double pipeline = 0.43;
    double reference = 0.43;
    double random = 0.14;
};

/// Largest-remainder rounding of count * proportions; ties go to the earlier mode.
std::array<int, 3> allocate_task_counts(const TaskProportions& p, int count);

/// Six-slot intruder tasks. Cluster tasks draw 5 members of one cluster with
/// >= 5 members plus one intruder from the rest of the network.
std::vector<IntruderTask> generate_tasks(const Manifest& manifest, const std::vector<NeuronCluster>& pipeline_clusters,
                                         const std::vector<NeuronCluster>& reference_clusters,
                                         const TaskProportions& proportions, int count, std::uint64_t seed);

struct Judgment {
    int task_id = 0;
    std::string respondent;
    std::vector<int> selected;
    std::optional<std::string> label;
};

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
};

struct Metrics {
    std::optional<double> fpr;
    std::vector<RocPoint> roc_points;
    std::optional<double> auc;
    std::size_t cluster_judgments = 0;
    std::size_t qualifying_judgments = 0;
};

/// Minimum selections for a respondent to count as having seen a cluster.
inline constexpr int kClusterPresentSelections = 3;

/// Scores cluster-mode tasks (optionally only one mode). Metrics with no
/// supporting judgments stay empty rather than zero.
Metrics score(const std::vector<IntruderTask>& tasks, const std::vector<Judgment>& judgments,
              std::optional<TaskMode> only = std::nullopt);

/// ROC over score thresholds and its trapezoidal AUC.
std::pair<std::vector<RocPoint>, std::optional<double>> roc_curve(const std::vector<double>& scores,
                                                                  const std::vector<bool>& positive);

json tasks_to_json(const std::vector<IntruderTask>& tasks);
std::vector<IntruderTask> tasks_from_json(const json& j);
json judgments_to_json(const std::vector<Judgment>& judgments);
std::vector<Judgment> judgments_from_json(const json& j);
json metrics_to_json(const Metrics& m);

}  // namespace cmap
