#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/json_io.hpp"
#include "cmap/types.hpp"

namespace cmap {

struct EmbeddingConfig {
    int d = 16;
    int negatives = 10;  // M
    int epochs = 30;
    double gamma = 0.01;
    /// Only V_i and V_j move; sampled negatives keep their vectors.
    bool freeze_negatives = false;
    /// Lock-free sharded SGD across `threads` workers. Not reproducible.
    bool parallel = false;
    unsigned threads = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(json& j, const EmbeddingConfig& c);

/// Co-activated neuron pair; indices refer to a NeuronIndex.
struct NeuronPair {
    std::size_t i = 0;
    std::size_t j = 0;
    int image = 0;
};

struct PairDataset {
    std::vector<NeuronPair> pairs;
};

/// For every image: neurons (all layers) whose top-k holds the image, shuffled,
/// then consecutive pairs from a size-2 sliding window.
PairDataset sample_pairs(const NeuronIndex& index, const TopKIndex& topk, std::size_t num_images, std::uint64_t seed);

/// Logistic function, stable for large |x|.
double sigmoid(double x);
/// -log(sigmoid(x)), stable.
double neg_log_sigmoid(double x);

class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t neurons, std::size_t dim) : n_(neurons), d_(dim), values_(neurons * dim, 0.0) {}

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    std::span<double> row(std::size_t i) { return {values_.data() + i * d_, d_}; }
    std::span<const double> row(std::size_t i) const { return {values_.data() + i * d_, d_}; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool operator==(const EmbeddingTable&) const = default;

  private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<double> values_;
};

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

/// One positive pair with the negatives drawn for each endpoint.
struct PairSample {
    std::size_t i = 0;
    std::size_t j = 0;
    std::vector<std::size_t> neg_i;
    std::vector<std::size_t> neg_j;
};

/// -log s(Vi.Vj) + sum_{m in neg_i} -log(1 - s(Vi.Vm)) + sum_{m in neg_j} -log(1 - s(Vj.Vm))
double pair_loss(const EmbeddingTable& table, const PairSample& sample);
double loss(const EmbeddingTable& table, std::span<const PairSample> batch);

struct PairGradient {
    std::vector<double> gi;
    std::vector<double> gj;
    std::vector<std::vector<double>> g_neg_i;  // parallel to neg_i
    std::vector<std::vector<double>> g_neg_j;  // parallel to neg_j
};

/// Analytic gradient of pair_loss. Assumes i, j and the negatives are distinct.
PairGradient pair_gradient(const EmbeddingTable& table, const PairSample& sample);

struct TrainResult {
    EmbeddingTable table;
    std::vector<double> epoch_loss;  // mean pair loss per epoch
    bool deterministic = true;
};

/// Uniform init in [-0.5/d, 0.5/d] followed by SGD over shuffled pairs.
TrainResult train(const NeuronIndex& index, const PairDataset& pairs, const EmbeddingConfig& config);

using Layout2D = std::vector<std::array<double, 2>>;

/// Centered projection onto the top-2 principal axes. Each axis is signed so
/// that its largest-magnitude loading is positive.
Layout2D project_pca(const EmbeddingTable& table);

/// Reads {"layer:channel": [x, y], ...}; every neuron must be present.
Layout2D load_external_layout(const std::filesystem::path& path, const NeuronIndex& index);

/// Mean fraction of each neuron's top-k cosine neighbours that are also among
/// its top-k Euclidean neighbours in the layout.
double neighbor_overlap(const EmbeddingTable& table, const Layout2D& layout, std::size_t k = 10);

/// Top-k neurons by cosine similarity, excluding `neuron`; ties by index.
std::vector<std::size_t> neighbors(const EmbeddingTable& table, std::size_t neuron, std::size_t k);

struct EmbeddingArtifact {
    EmbeddingConfig config;
    EmbeddingTable table;
    Layout2D layout;
    std::string projection_method = "pca";
    double neighbor_overlap_metric = 0.0;
    bool deterministic = true;
    std::string dataset_digest;
};

json embedding_to_json(const EmbeddingArtifact& artifact, const NeuronIndex& index);
EmbeddingArtifact embedding_from_json(const json& j, const NeuronIndex& index);

}  // namespace cmap
