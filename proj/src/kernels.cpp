#include "cmap/kernels.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "cmap/activation_store.hpp"

namespace cmap {

int implied_stride(int src_extent, int dst_extent) {
    return std::max(1, static_cast<int>(std::lround(static_cast<double>(src_extent) / dst_extent)));
}

void validate_kernel(const Kernel& k, const Manifest& manifest) {
    const std::string name = k.src_layer + " -> " + k.dst_layer;
    const auto& src = manifest.layer(k.src_layer);
    const auto& dst = manifest.layer(k.dst_layer);
    if (k.src_channels != src.channels || k.dst_channels != dst.channels) {
        throw Error("kernel " + name + ": channel shape mismatch (" + std::to_string(k.dst_channels) + "x" +
                    std::to_string(k.src_channels) + " vs layers " + std::to_string(dst.channels) + "x" +
                    std::to_string(src.channels) + ")");
    }
    if (k.kh < 1 || k.kw < 1) throw Error("kernel " + name + ": empty spatial extent");
    const int expected = implied_stride(src.height, dst.height);
    if (k.stride != expected || implied_stride(src.width, dst.width) != expected) {
        throw Error("kernel " + name + ": stride " + std::to_string(k.stride) + " does not match layer sizes");
    }
    if (same_output_size(src.height, k.stride) != dst.height || same_output_size(src.width, k.stride) != dst.width) {
        throw Error("kernel " + name + ": same-padded output does not reproduce destination size");
    }
    if (k.weights.size() != static_cast<std::size_t>(k.dst_channels) * k.src_channels * k.kh * k.kw) {
        throw Error("kernel " + name + ": weight count mismatch");
    }
    for (float w : k.weights) {
        if (!std::isfinite(w)) throw Error("kernel " + name + ": non-finite weight");
    }
}

std::filesystem::path kernel_path(const std::filesystem::path& root, std::string_view src, std::string_view dst) {
    return root / ("kern_" + std::string(src) + "__" + std::string(dst) + ".bin");
}

void write_kernel(const std::filesystem::path& root, const Kernel& k) {
    std::ofstream out(kernel_path(root, k.src_layer, k.dst_layer), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write kernel " + k.src_layer + " -> " + k.dst_layer);
    out.write("NCK1", 4);
    const std::uint32_t header[5] = {static_cast<std::uint32_t>(k.dst_channels), static_cast<std::uint32_t>(k.src_channels),
                                     static_cast<std::uint32_t>(k.kh), static_cast<std::uint32_t>(k.kw),
                                     static_cast<std::uint32_t>(k.stride)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(k.weights.data()),
              static_cast<std::streamsize>(k.weights.size() * sizeof(float)));
    if (!out) throw Error("write failed for kernel " + k.src_layer + " -> " + k.dst_layer);
}

Kernel read_kernel(const std::filesystem::path& path, std::string src, std::string dst) {
    if (!std::filesystem::exists(path)) throw Error("missing kernel file " + path.filename().string());
    MappedFile file(path);
    const auto bytes = file.bytes();
    if (bytes.size() < 24 || std::memcmp(bytes.data(), "NCK1", 4) != 0) {
        throw Error("bad magic in kernel file " + path.filename().string());
    }
    std::uint32_t header[5];
    std::memcpy(header, bytes.data() + 4, sizeof header);
    Kernel k;
    k.src_layer = std::move(src);
    k.dst_layer = std::move(dst);
    k.dst_channels = static_cast<int>(header[0]);
    k.src_channels = static_cast<int>(header[1]);
    k.kh = static_cast<int>(header[2]);
    k.kw = static_cast<int>(header[3]);
    k.stride = static_cast<int>(header[4]);
    const std::size_t count = static_cast<std::size_t>(header[0]) * header[1] * header[2] * header[3];
    if (bytes.size() != 24 + count * sizeof(float)) {
        throw Error("kernel file " + path.filename().string() + ": size does not match header");
    }
    k.weights.resize(count);
    std::memcpy(k.weights.data(), bytes.data() + 24, count * sizeof(float));
    return k;
}

KernelBank KernelBank::load(const std::filesystem::path& root, const Manifest& manifest) {
    KernelBank bank;
    for (const auto& c : manifest.connections) {
        bank.add(read_kernel(kernel_path(root, c.src_layer, c.dst_layer), c.src_layer, c.dst_layer), manifest);
    }
    return bank;
}

void KernelBank::add(Kernel kernel, const Manifest& manifest) {
    validate_kernel(kernel, manifest);
    auto key = std::make_pair(kernel.src_layer, kernel.dst_layer);
    kernels_.insert_or_assign(std::move(key), std::move(kernel));
}

bool KernelBank::has(std::string_view src, std::string_view dst) const {
    return kernels_.count({std::string(src), std::string(dst)}) > 0;
}

const Kernel& KernelBank::get(std::string_view src, std::string_view dst) const {
    auto it = kernels_.find({std::string(src), std::string(dst)});
    if (it == kernels_.end()) throw Error("missing kernel " + std::string(src) + " -> " + std::string(dst));
    return it->second;
}

}  // namespace cmap
