#include "cmap/activation_store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cmap/json_io.hpp"
#include "cmap/parallel.hpp"

static_assert(std::endian::native == std::endian::little, "NCAF readers assume a little-endian host");

namespace cmap {

namespace {

constexpr std::size_t kActivationHeaderBytes = 20;

std::uint32_t read_u32(std::span<const std::byte> bytes, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + offset, sizeof v);
    return v;
}

}  // namespace

MappedFile::MappedFile(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw Error("missing file " + path.string());
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        ::close(fd);
        throw Error("cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
        data_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
        if (data_ == MAP_FAILED) {
            data_ = nullptr;
            ::close(fd);
            throw Error("cannot map " + path.string());
        }
    }
    ::close(fd);
}

MappedFile::~MappedFile() {
    if (data_) ::munmap(data_, size_);
}

const TopKImages& TopKIndex::at(const NeuronRef& n) const {
    auto it = layers.find(n.layer);
    if (it == layers.end() || n.channel < 0 || static_cast<std::size_t>(n.channel) >= it->second.size()) {
        throw Error("no top-k entry for " + n.key());
    }
    return it->second[n.channel];
}

std::size_t QuantizedMap::count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true)); }

std::vector<std::uint64_t> QuantizedMap::true_positions() const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) out.push_back(i);
    }
    return out;
}

QuantizedMap quantize(std::span<const float> values, int rows, int cols) {
    QuantizedMap q{rows, cols, std::vector<bool>(values.size())};
    for (std::size_t i = 0; i < values.size(); ++i) q.mask[i] = values[i] > 0.0f;
    return q;
}

Patch extract_patch(const QuantizedMap& mask, const ImageRecord& image) {
    const int rows = mask.rows;
    const int cols = mask.cols;
    std::vector<int> label(mask.mask.size(), -1);
    std::vector<int> queue;
    int best_size = 0;
    BoundingBox best{};
    for (int start = 0; start < rows * cols; ++start) {
        if (!mask.mask[start] || label[start] >= 0) continue;
        BoundingBox box{rows, cols, -1, -1};
        queue.assign(1, start);
        label[start] = start;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int cell = queue[head];
            const int r = cell / cols;
            const int c = cell % cols;
            box.row0 = std::min(box.row0, r);
            box.col0 = std::min(box.col0, c);
            box.row1 = std::max(box.row1, r + 1);
            box.col1 = std::max(box.col1, c + 1);
            const int nbrs[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& [nr, nc] : nbrs) {
                if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
                const int next = nr * cols + nc;
                if (mask.mask[next] && label[next] < 0) {
                    label[next] = start;
                    queue.push_back(next);
                }
            }
        }
        if (static_cast<int>(queue.size()) > best_size) {
            best_size = static_cast<int>(queue.size());
            best = box;
        }
    }
    if (best_size == 0) throw Error("no activated region for image " + std::to_string(image.image_id));

    const double sy = static_cast<double>(image.pixel_height) / rows;
    const double sx = static_cast<double>(image.pixel_width) / cols;
    Patch p;
    p.image_id = image.image_id;
    p.bbox.row0 = std::clamp(static_cast<int>(std::floor(best.row0 * sy)), 0, image.pixel_height - 1);
    p.bbox.col0 = std::clamp(static_cast<int>(std::floor(best.col0 * sx)), 0, image.pixel_width - 1);
    p.bbox.row1 = std::clamp(static_cast<int>(std::ceil(best.row1 * sy)), p.bbox.row0 + 1, image.pixel_height);
    p.bbox.col1 = std::clamp(static_cast<int>(std::ceil(best.col1 * sx)), p.bbox.col0 + 1, image.pixel_width);
    return p;
}

float max_of(std::span<const float> values) {
    return values.empty() ? 0.0f : *std::max_element(values.begin(), values.end());
}

TopKImages rank_top_k(const NeuronRef& neuron, std::span<const float> maxima, int k) {
    if (k < 1) throw Error("top-k requires k >= 1");
    std::vector<int> order(maxima.size());
    std::iota(order.begin(), order.end(), 0);
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    auto by_activation = [&](int a, int b) {
        if (maxima[a] != maxima[b]) return maxima[a] > maxima[b];
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), by_activation);
    TopKImages out;
    out.neuron = neuron;
    out.k = k;
    out.image_ids.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    for (int id : out.image_ids) out.max_activations.push_back(maxima[id]);
    return out;
}

Manifest read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    if (!std::filesystem::exists(path)) throw Error("manifest not found in " + root.string());
    Manifest m;
    try {
        m = read_json_file(path).get<Manifest>();
    } catch (const json::exception& e) {
        throw Error("invalid manifest " + path.string() + ": " + e.what());
    }
    std::stable_sort(m.layers.begin(), m.layers.end(),
                     [](const LayerSpec& a, const LayerSpec& b) { return a.order_index < b.order_index; });
    m.validate();
    return m;
}

void write_manifest(const std::filesystem::path& root, const Manifest& manifest) {
    std::filesystem::create_directories(root);
    write_json_file(root / "manifest.json", json(manifest));
}

std::filesystem::path activation_path(const std::filesystem::path& root, std::string_view layer_id) {
    return root / ("act_" + std::string(layer_id) + ".bin");
}

void write_activations(const std::filesystem::path& root, const LayerSpec& layer, std::size_t num_images,
                       std::span<const float> values) {
    const std::size_t expected = num_images * layer.channels * layer.height * layer.width;
    if (values.size() != expected) {
        throw Error("activation tensor for layer '" + layer.id + "' has wrong size");
    }
    std::ofstream out(activation_path(root, layer.id), std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write activations for layer '" + layer.id + "'");
    out.write("NCA1", 4);
    const std::uint32_t header[4] = {static_cast<std::uint32_t>(num_images), static_cast<std::uint32_t>(layer.channels),
                                     static_cast<std::uint32_t>(layer.height), static_cast<std::uint32_t>(layer.width)};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (!out) throw Error("write failed for layer '" + layer.id + "'");
}

Dataset Dataset::open(const std::filesystem::path& root) {
    Dataset ds;
    ds.root_ = root;
    ds.manifest_ = read_manifest(root);
    {
        std::ifstream in(root / "manifest.json", std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        ds.digest_ = fnv1a_hex(ss.str());
    }
    const std::size_t n = ds.manifest_.images.size();
    for (const auto& layer : ds.manifest_.layers) {
        const auto path = activation_path(root, layer.id);
        if (!std::filesystem::exists(path)) {
            throw Error("layer '" + layer.id + "': missing activation file " + path.filename().string());
        }
        auto file = std::make_shared<MappedFile>(path);
        const auto bytes = file->bytes();
        if (bytes.size() < kActivationHeaderBytes || std::memcmp(bytes.data(), "NCA1", 4) != 0) {
            throw Error("layer '" + layer.id + "': bad magic in " + path.filename().string());
        }
        const std::uint32_t hdr_images = read_u32(bytes, 4);
        const std::uint32_t hdr_channels = read_u32(bytes, 8);
        const std::uint32_t hdr_height = read_u32(bytes, 12);
        const std::uint32_t hdr_width = read_u32(bytes, 16);
        auto mismatch = [&](const char* field, std::uint64_t manifest_value, std::uint64_t header_value) {
            throw Error("layer '" + layer.id + "': manifest " + field + " " + std::to_string(manifest_value) +
                        " does not match binary header " + std::to_string(header_value));
        };
        if (hdr_images != n) mismatch("image count", n, hdr_images);
        if (hdr_channels != static_cast<std::uint32_t>(layer.channels)) mismatch("channels", layer.channels, hdr_channels);
        if (hdr_height != static_cast<std::uint32_t>(layer.height)) mismatch("height", layer.height, hdr_height);
        if (hdr_width != static_cast<std::uint32_t>(layer.width)) mismatch("width", layer.width, hdr_width);
        const std::size_t count = n * layer.channels * layer.height * layer.width;
        if (bytes.size() != kActivationHeaderBytes + count * sizeof(float)) {
            throw Error("layer '" + layer.id + "': file size does not match header");
        }
        const auto* values = reinterpret_cast<const float*>(bytes.data() + kActivationHeaderBytes);
        for (std::size_t i = 0; i < count; ++i) {
            if (!std::isfinite(values[i])) {
                throw Error("layer '" + layer.id + "': non-finite activation at offset " + std::to_string(i));
            }
        }
        ds.files_.emplace(layer.id, std::move(file));
    }
    return ds;
}

std::span<const float> Dataset::layer_values(std::string_view layer_id) const {
    const auto& layer = manifest_.layer(layer_id);
    const auto& file = files_.at(layer.id);
    const std::size_t count = num_images() * layer.channels * layer.height * layer.width;
    return {reinterpret_cast<const float*>(file->bytes().data() + kActivationHeaderBytes), count};
}

void Dataset::check(const NeuronRef& neuron, int image_id) const {
    const auto& layer = manifest_.layer(neuron.layer);
    if (neuron.channel < 0 || neuron.channel >= layer.channels) throw Error("channel out of range: " + neuron.key());
    if (image_id < 0 || static_cast<std::size_t>(image_id) >= num_images()) {
        throw Error("image id out of range: " + std::to_string(image_id));
    }
}

std::span<const float> Dataset::map_view(const NeuronRef& neuron, int image_id) const {
    check(neuron, image_id);
    const auto& layer = manifest_.layer(neuron.layer);
    const std::size_t cells = static_cast<std::size_t>(layer.cells());
    const std::size_t offset = (static_cast<std::size_t>(image_id) * layer.channels + neuron.channel) * cells;
    return layer_values(neuron.layer).subspan(offset, cells);
}

ActivationMap Dataset::map(const NeuronRef& neuron, int image_id) const {
    const auto view = map_view(neuron, image_id);
    const auto& layer = manifest_.layer(neuron.layer);
    ActivationMap m(layer.height, layer.width);
    std::copy(view.begin(), view.end(), m.data.begin());
    return m;
}

float Dataset::max_activation(const NeuronRef& neuron, int image_id) const {
    return max_of(map_view(neuron, image_id));
}

TopKImages Dataset::top_k_images(const NeuronRef& neuron, int k) const {
    check(neuron, 0);
    std::vector<float> maxima(num_images());
    for (std::size_t x = 0; x < maxima.size(); ++x) maxima[x] = max_activation(neuron, static_cast<int>(x));
    return rank_top_k(neuron, maxima, k);
}

Patch Dataset::extract_patch(const NeuronRef& neuron, int image_id) const {
    const auto& layer = manifest_.layer(neuron.layer);
    return cmap::extract_patch(quantize(map_view(neuron, image_id), layer.height, layer.width),
                               manifest_.images[image_id]);
}

TopKIndex compute_topk(const Dataset& dataset, int k, unsigned threads) {
    TopKIndex index;
    index.k = k;
    const std::size_t n = dataset.num_images();
    for (const auto& layer : dataset.manifest().layers) {
        const auto values = dataset.layer_values(layer.id);
        const std::size_t cells = static_cast<std::size_t>(layer.cells());
        auto& list = index.layers[layer.id];
        list.resize(layer.channels);
        parallel_for(static_cast<std::size_t>(layer.channels), threads, [&](std::size_t c) {
            std::vector<float> maxima(n);
            for (std::size_t x = 0; x < n; ++x) {
                maxima[x] = max_of(values.subspan((x * layer.channels + c) * cells, cells));
            }
            list[c] = rank_top_k({layer.id, static_cast<int>(c)}, maxima, k);
        });
    }
    return index;
}

}  // namespace cmap
