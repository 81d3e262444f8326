#include "cmap/json_io.hpp"

#include <fstream>
#include <sstream>

namespace cmap {

void to_json(json& j, const LayerSpec& l) {
    j = json{{"id", l.id},
             {"channels", l.channels},
             {"height", l.height},
             {"width", l.width},
             {"order_index", l.order_index}};
}

void from_json(const json& j, LayerSpec& l) {
    j.at("id").get_to(l.id);
    j.at("channels").get_to(l.channels);
    j.at("height").get_to(l.height);
    j.at("width").get_to(l.width);
    j.at("order_index").get_to(l.order_index);
}

void to_json(json& j, const ImageRecord& r) {
    j = json{{"image_id", r.image_id},
             {"class_label", r.class_label},
             {"pixel_height", r.pixel_height},
             {"pixel_width", r.pixel_width}};
    if (r.source_path) j["source_path"] = *r.source_path;
}

void from_json(const json& j, ImageRecord& r) {
    j.at("image_id").get_to(r.image_id);
    j.at("class_label").get_to(r.class_label);
    j.at("pixel_height").get_to(r.pixel_height);
    j.at("pixel_width").get_to(r.pixel_width);
    if (auto it = j.find("source_path"); it != j.end() && !it->is_null()) {
        r.source_path = it->get<std::string>();
    } else {
        r.source_path.reset();
    }
}

void to_json(json& j, const Connection& c) { j = json{{"src_layer", c.src_layer}, {"dst_layer", c.dst_layer}}; }

void from_json(const json& j, Connection& c) {
    j.at("src_layer").get_to(c.src_layer);
    j.at("dst_layer").get_to(c.dst_layer);
}

void to_json(json& j, const Manifest& m) {
    j = json{{"layers", m.layers}, {"images", m.images}, {"connections", m.connections}};
}

void from_json(const json& j, Manifest& m) {
    j.at("layers").get_to(m.layers);
    j.at("images").get_to(m.images);
    m.connections.clear();
    if (j.contains("connections")) j.at("connections").get_to(m.connections);
}

void to_json(json& j, const Patch& p) {
    j = json{{"image_id", p.image_id}, {"bbox", {p.bbox.row0, p.bbox.col0, p.bbox.row1, p.bbox.col1}}};
}

void from_json(const json& j, Patch& p) {
    j.at("image_id").get_to(p.image_id);
    const auto& b = j.at("bbox");
    p.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
}

json topk_to_json(const TopKIndex& index, const std::string& dataset_digest) {
    json neurons = json::object();
    for (const auto& [layer, list] : index.layers) {
        for (const auto& t : list) {
            neurons[t.neuron.key()] = {{"image_ids", t.image_ids}, {"max_activations", t.max_activations}};
        }
    }
    return {{"k", index.k}, {"dataset_digest", dataset_digest}, {"neurons", std::move(neurons)}};
}

TopKIndex topk_from_json(const json& j) {
    TopKIndex index;
    index.k = j.at("k").get<int>();
    for (const auto& [key, entry] : j.at("neurons").items()) {
        TopKImages t;
        t.neuron = NeuronRef::parse(key);
        t.k = index.k;
        entry.at("image_ids").get_to(t.image_ids);
        entry.at("max_activations").get_to(t.max_activations);
        auto& list = index.layers[t.neuron.layer];
        if (list.size() <= static_cast<std::size_t>(t.neuron.channel)) list.resize(t.neuron.channel + 1);
        list[t.neuron.channel] = std::move(t);
    }
    return index;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace cmap
