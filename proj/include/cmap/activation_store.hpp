#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cmap/types.hpp"

namespace cmap {

/// Read-only memory mapping of a whole file.
class MappedFile {
  public:
    explicit MappedFile(const std::filesystem::path& path);
    ~MappedFile();
    MappedFile(const MappedFile&) = delete;
    MappedFile& operator=(const MappedFile&) = delete;

    std::span<const std::byte> bytes() const { return {static_cast<const std::byte*>(data_), size_}; }

  private:
    void* data_ = nullptr;
    std::size_t size_ = 0;
};

struct TopKImages {
    NeuronRef neuron;
    int k = 0;
    std::vector<int> image_ids;          // descending by max activation, ties by ascending id
    std::vector<float> max_activations;  // parallel to image_ids
};

/// Top-k image lists for every neuron, per layer, indexed by channel.
struct TopKIndex {
    int k = 0;
    std::map<std::string, std::vector<TopKImages>> layers;

    const TopKImages& at(const NeuronRef& n) const;
};

struct QuantizedMap {
    int rows = 0;
    int cols = 0;
    std::vector<bool> mask;

    bool at(int r, int c) const { return mask[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t count() const;
    /// Flattened indices (row * cols + col) of every true cell, ascending.
    std::vector<std::uint64_t> true_positions() const;
};

struct BoundingBox {
    int row0 = 0;
    int col0 = 0;
    int row1 = 0;
    int col1 = 0;
    bool operator==(const BoundingBox&) const = default;
};

struct Patch {
    int image_id = 0;
    BoundingBox bbox;
    bool operator==(const Patch&) const = default;
};

/// Strict `> 0` threshold per cell.
QuantizedMap quantize(std::span<const float> values, int rows, int cols);
inline QuantizedMap quantize(const ActivationMap& map) { return quantize(map.data, map.rows, map.cols); }

/// Bounding box of the largest 4-connected true region, scaled to the image's
/// pixel grid. Ties between equally large regions go to the one whose first
/// cell comes first in row-major order.
Patch extract_patch(const QuantizedMap& mask, const ImageRecord& image);

/// An NCAF dataset directory opened for reading. Activation files are
/// memory-mapped; nothing is copied until a map is requested.
class Dataset {
  public:
    static Dataset open(const std::filesystem::path& root);

    const Manifest& manifest() const { return manifest_; }
    const std::filesystem::path& root() const { return root_; }
    /// Digest of manifest.json bytes.
    const std::string& digest() const { return digest_; }
    std::size_t num_images() const { return manifest_.images.size(); }

    /// All values of one layer, [image][channel][row][col].
    std::span<const float> layer_values(std::string_view layer_id) const;
    std::span<const float> map_view(const NeuronRef& neuron, int image_id) const;
    ActivationMap map(const NeuronRef& neuron, int image_id) const;

    float max_activation(const NeuronRef& neuron, int image_id) const;
    TopKImages top_k_images(const NeuronRef& neuron, int k) const;
    Patch extract_patch(const NeuronRef& neuron, int image_id) const;

  private:
    void check(const NeuronRef& neuron, int image_id) const;

    std::filesystem::path root_;
    Manifest manifest_;
    std::string digest_;
    std::map<std::string, std::shared_ptr<MappedFile>> files_;
};

float max_of(std::span<const float> values);

/// Top-k ordering of a vector of per-image maxima.
TopKImages rank_top_k(const NeuronRef& neuron, std::span<const float> maxima, int k);

/// Top-k lists for every neuron, one layer resident at a time.
TopKIndex compute_topk(const Dataset& dataset, int k, unsigned threads = 1);

Manifest read_manifest(const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& root, const Manifest& manifest);

/// Writes act_<layer>.bin. values are [image][channel][row][col].
void write_activations(const std::filesystem::path& root, const LayerSpec& layer, std::size_t num_images,
                       std::span<const float> values);

std::filesystem::path activation_path(const std::filesystem::path& root, std::string_view layer_id);

}  // namespace cmap
