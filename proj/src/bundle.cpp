#include "cmap/bundle.hpp"

#include <algorithm>
#include <cmath>

#include "cmap/schema.hpp"

namespace cmap {

namespace fs = std::filesystem;

namespace {

json load_checked(const fs::path& bundle, const char* file, const char* schema_name, const char* stage) {
    require_artifact(bundle, file, stage);
    const auto path = bundle / file;
    json j;
    try {
        j = read_json_file(path);
    } catch (const std::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    require_schema(schema_name, j, path.string());
    return j;
}

}  // namespace

SummaryBundle::SummaryBundle(const PipelineConfig& config, Dataset dataset)
    : config_(config), dataset_(std::move(dataset)), index_(dataset_.manifest()) {}

std::shared_ptr<SummaryBundle> SummaryBundle::open(const PipelineConfig& config) {
    config.validate();
    std::shared_ptr<SummaryBundle> b(new SummaryBundle(config, Dataset::open(resolve_dataset(config))));
    const auto& bundle = config.bundle;
    const auto& m = b->manifest();

    b->kernels_ = KernelBank::load(b->dataset_.root(), m);

    const auto clusters_file = (bundle / artifact::kClusters).string();
    b->clusters_ = clusters_from_json(load_checked(bundle, artifact::kClusters, "clusters", "cluster"));
    b->neuron_cluster_.assign(b->index_.size(), b->clusters_.size());
    for (std::size_t c = 0; c < b->clusters_.size(); ++c) {
        const auto& cl = b->clusters_[c];
        if (!b->cluster_pos_.emplace(cl.cluster_id, c).second) {
            throw Error(clusters_file + ": duplicate cluster id " + cl.cluster_id);
        }
        for (int ch : cl.members) {
            std::size_t n = 0;
            try {
                n = b->index_.index_of({cl.layer, ch});
            } catch (const Error& e) {
                throw Error(clusters_file + ": " + e.what());
            }
            if (b->neuron_cluster_[n] != b->clusters_.size()) {
                throw Error(clusters_file + ": neuron " + NeuronRef{cl.layer, ch}.key() + " is in two clusters");
            }
            b->neuron_cluster_[n] = c;
        }
    }
    for (std::size_t n = 0; n < b->index_.size(); ++n) {
        if (b->neuron_cluster_[n] == b->clusters_.size()) {
            throw Error(clusters_file + ": neuron " + b->index_.ref(n).key() + " belongs to no cluster");
        }
    }

    const auto emb_file = (bundle / artifact::kEmbedding).string();
    const auto ej = load_checked(bundle, artifact::kEmbedding, "embedding", "embed");
    if (ej.at("dataset_digest").get<std::string>() != b->dataset_.digest()) {
        throw Error(emb_file + ": built from a different dataset (digest mismatch)");
    }
    try {
        b->embedding_ = embedding_from_json(ej, b->index_);
    } catch (const std::exception& e) {
        throw Error(emb_file + ": " + e.what());
    }

    for (const auto& label : m.class_labels()) b->graphs_.emplace(label, std::make_unique<GraphSlot>());
    return b;
}

std::size_t SummaryBundle::neuron_index(const std::string& key) const {
    NeuronRef ref;
    try {
        ref = NeuronRef::parse(key);
    } catch (const Error&) {
        throw BadRequest("malformed neuron id '" + key + "'; expected <layer>:<channel>");
    }
    try {
        return index_.index_of(ref);
    } catch (const Error&) {
        throw NotFound("unknown neuron '" + key + "'");
    }
}

const NeuronCluster& SummaryBundle::cluster_of(std::size_t neuron) const { return clusters_[neuron_cluster_[neuron]]; }

json SummaryBundle::manifest_json() const { return json(manifest()); }

json SummaryBundle::layers_json() const { return json(manifest().layers); }

json SummaryBundle::clusters_json(const std::optional<std::string>& layer) const {
    if (!layer) return clusters_to_json(clusters_);
    if (!manifest().has_layer(*layer)) throw NotFound("unknown layer '" + *layer + "'");
    std::vector<NeuronCluster> subset;
    std::copy_if(clusters_.begin(), clusters_.end(), std::back_inserter(subset),
                 [&](const NeuronCluster& c) { return c.layer == *layer; });
    return clusters_to_json(subset);
}

json SummaryBundle::embedding_view(const std::string& filter, const std::string& pinned) const {
    std::vector<bool> keep(index_.size(), false);
    if (filter == "all") {
        keep.assign(index_.size(), true);
    } else if (filter.rfind("class:", 0) == 0) {
        const auto label = filter.substr(6);
        if (!graphs_.count(label)) throw NotFound("unknown class '" + label + "'");
        const auto g = filter_class_graph(class_graph(label), config_.min_importance);
        for (const auto& node : g.nodes) {
            for (int ch : node.members) keep[index_.index_of({node.layer, ch})] = true;
        }
    } else if (filter == "pinned") {
        std::size_t start = 0;
        while (start <= pinned.size() && !pinned.empty()) {
            const auto end = std::min(pinned.find(',', start), pinned.size());
            const auto id = pinned.substr(start, end - start);
            start = end + 1;
            if (id.empty()) continue;
            if (auto it = cluster_pos_.find(id); it != cluster_pos_.end()) {
                for (const auto& r : clusters_[it->second].refs()) keep[index_.index_of(r)] = true;
            } else if (id.find(':') != std::string::npos) {
                keep[neuron_index(id)] = true;
            } else {
                throw NotFound("unknown cluster '" + id + "'");
            }
        }
    } else {
        throw BadRequest("filter must be all, class:<label> or pinned, got '" + filter + "'");
    }
    json neurons = json::array();
    for (std::size_t n = 0; n < index_.size(); ++n) {
        if (!keep[n]) continue;
        const auto ref = index_.ref(n);
        neurons.push_back({{"neuron", ref.key()},
                           {"layer", ref.layer},
                           {"cluster_id", cluster_of(n).cluster_id},
                           {"x", embedding_.layout[n][0]},
                           {"y", embedding_.layout[n][1]}});
    }
    return {{"filter", filter},
            {"neighbor_overlap_metric", embedding_.neighbor_overlap_metric},
            {"neurons", std::move(neurons)}};
}

json SummaryBundle::neighbors_json(const std::string& neuron, std::optional<long long> k) const {
    const auto n = neuron_index(neuron);
    const long long want = k.value_or(10);
    if (want < 0) throw BadRequest("k must be >= 0");
    const auto effective = std::min<std::size_t>(static_cast<std::size_t>(want), index_.size() - 1);
    json out = json::array();
    for (auto m : neighbors(embedding_.table, n, effective)) {
        out.push_back({{"neuron", index_.ref(m).key()},
                       {"cosine", cosine(embedding_.table.row(n), embedding_.table.row(m))},
                       {"cluster_id", cluster_of(m).cluster_id}});
    }
    return {{"neuron", index_.ref(n).key()}, {"k", effective}, {"neighbors", std::move(out)}};
}

json SummaryBundle::patches_json(const std::string& neuron, std::optional<long long> limit) const {
    const auto n = neuron_index(neuron);
    if (limit && *limit < 0) throw BadRequest("limit must be >= 0");
    const auto& cl = cluster_of(n);
    const auto ref = index_.ref(n);
    json out = json::array();
    if (auto it = cl.patches.find(ref.channel); it != cl.patches.end()) {
        for (const auto& p : it->second) {
            if (limit && static_cast<long long>(out.size()) >= *limit) break;
            const auto& img = manifest().images.at(static_cast<std::size_t>(p.image_id));
            json row = p;
            row["class_label"] = img.class_label;
            row["source_path"] = img.source_path ? json(*img.source_path) : json(nullptr);
            row["pixel_height"] = img.pixel_height;
            row["pixel_width"] = img.pixel_width;
            out.push_back(std::move(row));
        }
    }
    return {{"neuron", ref.key()}, {"cluster_id", cl.cluster_id}, {"patches", std::move(out)}};
}

const ClassGraph& SummaryBundle::class_graph(const std::string& class_label) const {
    auto it = graphs_.find(class_label);
    if (it == graphs_.end()) throw NotFound("unknown class '" + class_label + "'");
    auto& slot = *it->second;
    std::call_once(slot.once, [&] {
        slot.graph = load_or_build_class_graph(config_.bundle, dataset_, kernels_, clusters_, class_label,
                                               config_.graph);
    });
    return *slot.graph;
}

json SummaryBundle::graph_json(const std::string& class_label, std::optional<double> min_importance) const {
    const double threshold = min_importance.value_or(config_.min_importance);
    if (!std::isfinite(threshold)) throw BadRequest("min_importance must be finite");
    auto j = class_graph_to_json(filter_class_graph(class_graph(class_label), threshold));
    j["min_importance"] = threshold;
    return j;
}

json SummaryBundle::cascade_json(const json& request) const {
    const auto errors = schema_errors(schema("cascade_request"), request);
    if (!errors.empty()) throw BadRequest("invalid cascade request: " + errors.front());
    CascadeConfig cc = config_.cascade;
    const auto id = request.at("cluster_id").get<std::string>();
    if (!cluster_pos_.count(id)) throw NotFound("unknown cluster '" + id + "'");
    if (auto it = request.find("trigger_top_n"); it != request.end()) cc.trigger_top_n = it->get<int>();
    if (auto it = request.find("normalize"); it != request.end()) cc.normalize = it->get<bool>();
    if (auto it = request.find("relu"); it != request.end()) cc.relu = it->get<bool>();
    double threshold = config_.min_importance;
    if (auto it = request.find("min_importance"); it != request.end()) threshold = it->get<double>();
    std::optional<ClassGraph> context;
    if (auto it = request.find("class_context"); it != request.end() && !it->is_null()) {
        context = filter_class_graph(class_graph(it->get<std::string>()), threshold);
    }
    return cascade_to_json(run_cascade(manifest(), kernels_, clusters_, id, cc, context ? &*context : nullptr));
}

}  // namespace cmap
