#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cmap/types.hpp"

namespace cmap {

/// Weights between two connected layers, [dst][src][kh][kw].
struct Kernel {
    std::string src_layer;
    std::string dst_layer;
    int dst_channels = 0;
    int src_channels = 0;
    int kh = 1;
    int kw = 1;
    int stride = 1;
    std::vector<float> weights;

    std::span<const float> slice(int dst, int src) const {
        const std::size_t taps = static_cast<std::size_t>(kh) * kw;
        return std::span<const float>(weights).subspan((static_cast<std::size_t>(dst) * src_channels + src) * taps,
                                                       taps);
    }
    float& at(int dst, int src, int u, int v) {
        return weights[((static_cast<std::size_t>(dst) * src_channels + src) * kh + u) * kw + v];
    }
};

/// Output extent of a same-padded strided convolution.
inline int same_output_size(int in, int stride) { return (in + stride - 1) / stride; }

/// Stride implied by two layer extents: round(src / dst).
int implied_stride(int src_extent, int dst_extent);

/// Same-padded strided 2-D cross-correlation of one input plane with one
/// kernel slice. Padding splits as TensorFlow's SAME (extra row/col at the
/// bottom/right). Accumulates in double, taps in row-major order.
template <typename T>
void conv2d_same(std::span<const T> in, int h, int w, std::span<const float> k, int kh, int kw, int stride,
                 std::span<double> out) {
    const int oh = same_output_size(h, stride);
    const int ow = same_output_size(w, stride);
    const int pad_top = std::max((oh - 1) * stride + kh - h, 0) / 2;
    const int pad_left = std::max((ow - 1) * stride + kw - w, 0) / 2;
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int u = 0; u < kh; ++u) {
                const int y = r * stride + u - pad_top;
                if (y < 0 || y >= h) continue;
                for (int v = 0; v < kw; ++v) {
                    const int x = c * stride + v - pad_left;
                    if (x < 0 || x >= w) continue;
                    acc += static_cast<double>(in[static_cast<std::size_t>(y) * w + x]) *
                           static_cast<double>(k[static_cast<std::size_t>(u) * kw + v]);
                }
            }
            out[static_cast<std::size_t>(r) * ow + c] = acc;
        }
    }
}

class KernelBank {
  public:
    /// Loads kern_<src>__<dst>.bin for every declared connection and checks
    /// shapes and strides against the layer specs.
    static KernelBank load(const std::filesystem::path& root, const Manifest& manifest);

    bool has(std::string_view src, std::string_view dst) const;
    const Kernel& get(std::string_view src, std::string_view dst) const;
    const std::map<std::pair<std::string, std::string>, Kernel>& all() const { return kernels_; }

    void add(Kernel kernel, const Manifest& manifest);

  private:
    std::map<std::pair<std::string, std::string>, Kernel> kernels_;
};

void validate_kernel(const Kernel& kernel, const Manifest& manifest);

std::filesystem::path kernel_path(const std::filesystem::path& root, std::string_view src, std::string_view dst);
void write_kernel(const std::filesystem::path& root, const Kernel& kernel);
Kernel read_kernel(const std::filesystem::path& path, std::string src, std::string dst);

}  // namespace cmap
