#include "cmap/types.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>

namespace cmap {

NeuronRef NeuronRef::parse(std::string_view key) {
    const auto colon = key.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == key.size()) {
        throw Error("malformed neuron key '" + std::string(key) + "' (expected layer:channel)");
    }
    int channel = 0;
    const auto digits = key.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), channel);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || channel < 0) {
        throw Error("malformed channel in neuron key '" + std::string(key) + "'");
    }
    return {std::string(key.substr(0, colon)), channel};
}

const LayerSpec& Manifest::layer(std::string_view id) const { return layers[layer_position(id)]; }

std::size_t Manifest::layer_position(std::string_view id) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].id == id) return i;
    }
    throw Error("unknown layer '" + std::string(id) + "'");
}

bool Manifest::has_layer(std::string_view id) const {
    return std::any_of(layers.begin(), layers.end(), [&](const LayerSpec& l) { return l.id == id; });
}

std::vector<std::string> Manifest::class_labels() const {
    std::set<std::string> labels;
    for (const auto& img : images) labels.insert(img.class_label);
    return {labels.begin(), labels.end()};
}

std::vector<int> Manifest::images_of_class(std::string_view label) const {
    std::vector<int> ids;
    for (const auto& img : images) {
        if (img.class_label == label) ids.push_back(img.image_id);
    }
    return ids;
}

void Manifest::validate() const {
    if (layers.empty()) throw Error("manifest declares no layers");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.id.empty()) throw Error("layer with empty id");
        if (!ids.insert(l.id).second) throw Error("duplicate layer id '" + l.id + "'");
        if (l.channels < 1 || l.height < 1 || l.width < 1) {
            throw Error("layer '" + l.id + "' has non-positive dimensions");
        }
        if (i > 0 && layers[i - 1].order_index >= l.order_index) {
            throw Error("layer '" + l.id + "' order_index is not strictly increasing");
        }
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& img = images[i];
        if (img.image_id != static_cast<int>(i)) {
            throw Error("image ids must be dense and ordered; expected " + std::to_string(i) + ", got " +
                        std::to_string(img.image_id));
        }
        if (img.class_label.empty()) throw Error("image " + std::to_string(i) + " has empty class_label");
        if (img.pixel_height < 1 || img.pixel_width < 1) {
            throw Error("image " + std::to_string(i) + " has non-positive pixel dimensions");
        }
    }
    for (const auto& c : connections) {
        if (!has_layer(c.src_layer)) throw Error("connection references unknown layer '" + c.src_layer + "'");
        if (!has_layer(c.dst_layer)) throw Error("connection references unknown layer '" + c.dst_layer + "'");
        if (layer(c.src_layer).order_index >= layer(c.dst_layer).order_index) {
            throw Error("connection " + c.src_layer + " -> " + c.dst_layer + " violates layer order");
        }
    }
}

NeuronIndex::NeuronIndex(const Manifest& manifest) {
    for (const auto& l : manifest.layers) {
        ids_.push_back(l.id);
        offsets_.push_back(total_);
        sizes_.push_back(static_cast<std::size_t>(l.channels));
        total_ += static_cast<std::size_t>(l.channels);
    }
}

std::size_t NeuronIndex::layer_position(std::string_view id) const {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i] == id) return i;
    }
    throw Error("unknown layer '" + std::string(id) + "'");
}

std::size_t NeuronIndex::index_of(const NeuronRef& n) const {
    const auto pos = layer_position(n.layer);
    if (n.channel < 0 || static_cast<std::size_t>(n.channel) >= sizes_[pos]) {
        throw Error("channel out of range: " + n.key());
    }
    return offsets_[pos] + static_cast<std::size_t>(n.channel);
}

std::size_t NeuronIndex::layer_of(std::size_t index) const {
    const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), index);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

NeuronRef NeuronIndex::ref(std::size_t index) const {
    const auto pos = layer_of(index);
    return {ids_[pos], static_cast<int>(index - offsets_[pos])};
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace cmap
