#pragma once

// Small hand-built inputs shared by unit tests and the acceptance suite.

#include <unistd.h>

#include <atomic>
#include <functional>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/clustering.hpp"
#include "cmap/kernels.hpp"
#include "cmap/rng.hpp"
#include "cmap/types.hpp"

namespace fixture {

inline cmap::Manifest manifest(const std::vector<std::pair<std::string, int>>& layers, int images, int size = 4) {
    cmap::Manifest m;
    int order = 0;
    for (const auto& [id, channels] : layers) m.layers.push_back({id, channels, size, size, order++});
    for (int i = 0; i < images; ++i) m.images.push_back({i, "c" + std::to_string(i % 3), std::nullopt, 32, 32});
    return m;
}

/// Co-activation instance: one layer of `channels` neurons; neurons 10g..10g+9
/// (g < 3) share the images [g*span, (g+1)*span) as their top-k; the rest of
/// the layer has empty top-k lists, so every pair is intra-group.
struct Coactivation {
    cmap::Manifest manifest;
    cmap::TopKIndex topk;
};

inline Coactivation three_groups(int channels = 128, int span = 30) {
    Coactivation out;
    out.manifest = manifest({{"a", channels}}, 3 * span);
    out.topk.k = span;
    for (int c = 0; c < channels; ++c) {
        cmap::TopKImages e;
        e.neuron = {"a", c};
        e.k = span;
        if (c < 30) {
            for (int r = 0; r < span; ++r) {
                e.image_ids.push_back((c / 10) * span + r);
                e.max_activations.push_back(1.0f);
            }
        }
        out.topk.layers["a"].push_back(e);
    }
    return out;
}

/// Unique scratch directory removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cmap_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

  private:
    std::filesystem::path path_;
};

struct LayerShape {
    std::string id;
    int channels;
    int size;
};

/// Chain of layers with random sparse non-negative activations and random
/// kernels between consecutive layers. Writes everything under `root`.
inline cmap::Manifest random_chain(const std::filesystem::path& root, const std::vector<LayerShape>& shapes, int images,
                                   int classes, std::uint64_t seed, int kernel_size = 3, double zero_fraction = 0.5) {
    cmap::Rng rng(seed);
    cmap::Manifest m;
    int order = 0;
    for (const auto& s : shapes) m.layers.push_back({s.id, s.channels, s.size, s.size, order++});
    for (int i = 0; i < images; ++i) m.images.push_back({i, "k" + std::to_string(i % classes), std::nullopt, 64, 64});
    for (std::size_t l = 1; l < shapes.size(); ++l) m.connections.push_back({shapes[l - 1].id, shapes[l].id});
    cmap::write_manifest(root, m);
    for (const auto& layer : m.layers) {
        std::vector<float> values(static_cast<std::size_t>(images) * layer.channels * layer.cells());
        for (auto& v : values) v = rng.uniform() < zero_fraction ? 0.0f : static_cast<float>(rng.uniform(0.0, 2.0));
        cmap::write_activations(root, layer, static_cast<std::size_t>(images), values);
    }
    for (std::size_t l = 1; l < m.layers.size(); ++l) {
        const auto& src = m.layers[l - 1];
        const auto& dst = m.layers[l];
        cmap::Kernel k;
        k.src_layer = src.id;
        k.dst_layer = dst.id;
        k.dst_channels = dst.channels;
        k.src_channels = src.channels;
        k.kh = k.kw = kernel_size;
        k.stride = cmap::implied_stride(src.height, dst.height);
        k.weights.resize(static_cast<std::size_t>(dst.channels) * src.channels * kernel_size * kernel_size);
        for (auto& w : k.weights) w = static_cast<float>(rng.normal() * 0.5);
        cmap::write_kernel(root, k);
    }
    return m;
}

using CellFn = std::function<float(int image, int channel, int row, int col)>;

/// One layer "a" of square maps; activations from `fn`.
inline cmap::Manifest single_layer(const std::filesystem::path& root, int channels, int size, int images,
                                   const CellFn& fn) {
    cmap::Manifest m;
    m.layers = {{"a", channels, size, size, 0}};
    for (int i = 0; i < images; ++i) m.images.push_back({i, "x" + std::to_string(i % 2), std::nullopt, 64, 64});
    cmap::write_manifest(root, m);
    std::vector<float> v;
    for (int i = 0; i < images; ++i)
        for (int c = 0; c < channels; ++c)
            for (int r = 0; r < size; ++r)
                for (int col = 0; col < size; ++col) v.push_back(fn(i, c, r, col));
    cmap::write_activations(root, m.layers[0], static_cast<std::size_t>(images), v);
    return m;
}

/// 32 neurons on 8x8 maps, 60 images. Channels 0-15 fire on images 0-19,
/// 16-31 on 20-39. Inside each half, masks sit in sub-concept regions with a
/// few random extra cells; channels 28-31 each get a private region.
inline cmap::Manifest oracle32(const std::filesystem::path& root, std::uint64_t seed) {
    cmap::Rng rng(seed);
    std::vector<float> noise(60 * 32 * 64);
    for (auto& x : noise) x = rng.uniform() < 0.04 ? 1.0f : 0.0f;
    auto region = [](int c, int r, int col) {
        if (c < 8) return r < 4 && col < 4;
        if (c < 16) return r >= 4 && col >= 4;
        if (c < 24) return r < 3;
        if (c < 28) return r >= 5 && col < 5;
        const int k = c - 28;  // four private 2x2 blocks
        return r >= 3 && r < 5 && col >= 2 * k && col < 2 * k + 2;
    };
    return single_layer(root, 32, 8, 60, [&](int i, int c, int r, int col) {
        const bool pool = c < 16 ? i < 20 : (i >= 20 && i < 40);
        if (!pool) return 0.0f;
        const float extra = noise[((static_cast<std::size_t>(i) * 32 + c) * 8 + r) * 8 + col];
        return region(c, r, col) ? 1.0f + 0.01f * static_cast<float>(i) : extra * 0.5f;
    });
}

inline cmap::Kernel blank_kernel(const cmap::Manifest& m, const std::string& src, const std::string& dst, int size) {
    cmap::Kernel k;
    k.src_layer = src;
    k.dst_layer = dst;
    k.src_channels = m.layer(src).channels;
    k.dst_channels = m.layer(dst).channels;
    k.kh = k.kw = size;
    k.stride = cmap::implied_stride(m.layer(src).height, m.layer(dst).height);
    k.weights.assign(static_cast<std::size_t>(k.src_channels) * k.dst_channels * size * size, 0.0f);
    return k;
}

/// Manifest only: consecutive layers connected, one image.
inline cmap::Manifest chain(const std::vector<LayerShape>& shapes) {
    cmap::Manifest m;
    int order = 0;
    for (const auto& s : shapes) m.layers.push_back({s.id, s.channels, s.size, s.size, order++});
    m.images.push_back({0, "x", std::nullopt, 8, 8});
    for (std::size_t l = 1; l < shapes.size(); ++l) m.connections.push_back({shapes[l - 1].id, shapes[l].id});
    return m;
}

/// Every neuron in its own cluster, named c0, c1, ... in layer order.
inline std::vector<cmap::NeuronCluster> singletons(const cmap::Manifest& m) {
    std::vector<cmap::NeuronCluster> out;
    for (const auto& l : m.layers)
        for (int c = 0; c < l.channels; ++c) out.push_back({"c" + std::to_string(out.size()), l.id, {c}, {}});
    return out;
}

inline cmap::KernelBank random_bank(const cmap::Manifest& m, std::uint64_t seed, int size) {
    cmap::Rng rng(seed);
    cmap::KernelBank bank;
    for (const auto& c : m.connections) {
        auto k = blank_kernel(m, c.src_layer, c.dst_layer, size);
        for (auto& w : k.weights) w = static_cast<float>(rng.normal());
        bank.add(k, m);
    }
    return bank;
}

}  // namespace fixture
