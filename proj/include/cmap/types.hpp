#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cmap {

/// Raised for malformed inputs: corrupt files, unknown ids, shape mismatches.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct LayerSpec {
    std::string id;
    int channels = 0;
    int height = 0;
    int width = 0;
    int order_index = 0;

    int cells() const { return height * width; }
    bool operator==(const LayerSpec&) const = default;
};

/// One channel of one layer. Keys serialize as "layer:channel".
struct NeuronRef {
    std::string layer;
    int channel = 0;

    std::string key() const { return layer + ":" + std::to_string(channel); }
    static NeuronRef parse(std::string_view key);

    auto operator<=>(const NeuronRef&) const = default;
};

struct ImageRecord {
    int image_id = 0;
    std::string class_label;
    std::optional<std::string> source_path;
    int pixel_height = 0;
    int pixel_width = 0;

    bool operator==(const ImageRecord&) const = default;
};

struct Connection {
    std::string src_layer;
    std::string dst_layer;

    bool operator==(const Connection&) const = default;
};

struct Manifest {
    std::vector<LayerSpec> layers;  // sorted by order_index
    std::vector<ImageRecord> images;
    std::vector<Connection> connections;

    const LayerSpec& layer(std::string_view id) const;
    std::size_t layer_position(std::string_view id) const;
    bool has_layer(std::string_view id) const;
    std::vector<std::string> class_labels() const;
    std::vector<int> images_of_class(std::string_view label) const;

    /// Throws Error when any structural invariant is violated.
    void validate() const;
};

/// Dense row-major 2-D grid.
template <typename T>
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int r, int c, T fill = T{}) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool operator==(const Grid&) const = default;
};

using ActivationMap = Grid<float>;

/// Global dense numbering of every neuron, layers in order_index order.
class NeuronIndex {
  public:
    NeuronIndex() = default;
    explicit NeuronIndex(const Manifest& manifest);

    std::size_t size() const { return total_; }
    std::size_t index_of(const NeuronRef& n) const;
    NeuronRef ref(std::size_t index) const;
    std::size_t layer_offset(std::size_t layer_pos) const { return offsets_[layer_pos]; }
    std::size_t layer_of(std::size_t index) const;
    std::size_t layer_size(std::size_t layer_pos) const { return sizes_[layer_pos]; }
    std::size_t layer_count() const { return ids_.size(); }
    const std::string& layer_id(std::size_t layer_pos) const { return ids_[layer_pos]; }
    std::size_t layer_position(std::string_view id) const;

  private:
    std::vector<std::string> ids_;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> sizes_;
    std::size_t total_ = 0;
};

/// 64-bit FNV-1a, hex encoded. Used as the dataset digest.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace cmap
