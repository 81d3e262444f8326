#include "cmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cmap/activation_store.hpp"
#include "cmap/kernels.hpp"
#include "cmap/schema.hpp"

namespace cmap {

namespace fs = std::filesystem;

std::string artifact::graph_file(const std::string& class_label) {
    return "graph_" + class_file_stem(class_label) + ".json";
}

void PipelineConfig::propagate() {
    clustering.seed = seed;
    clustering.threads = threads;
    embedding.seed = seed;
    embedding.threads = threads;
    graph.threads = threads;
}

void PipelineConfig::validate() const {
    clustering.validate();
    embedding.validate();
    graph.validate();
    cascade.validate();
    if (threads < 1) throw Error("threads must be >= 1");
    if (projection != "pca" && projection != "external") {
        throw Error("projection must be \"pca\" or \"external\", got \"" + projection + "\"");
    }
    if (projection == "external" && !layout) throw Error("external projection needs embedding.layout");
    if (!std::isfinite(min_importance)) throw Error("min_importance must be finite");
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
    if (!obj.is_object()) throw Error(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
            throw Error("unknown config key \"" + (where.empty() ? key : where + "." + key) + "\"");
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        it->get_to(out);
    } catch (const json::exception&) {
        throw Error("config key \"" + (where.empty() ? std::string(key) : where + "." + key) + "\" has the wrong type");
    }
}

fs::path resolve_path(const fs::path& base, const std::string& raw) {
    fs::path p(raw);
    return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base) {
    PipelineConfig c;
    reject_unknown(j, {"bundle", "dataset", "seed", "threads", "clustering", "embedding", "graph", "cascade"}, "");
    if (auto it = j.find("bundle"); it != j.end()) c.bundle = resolve_path(base, it->get<std::string>());
    if (auto it = j.find("dataset"); it != j.end()) c.dataset = resolve_path(base, it->get<std::string>());
    read(j, "seed", c.seed, "");
    read(j, "threads", c.threads, "");
    if (auto it = j.find("clustering"); it != j.end()) {
        const auto& s = *it;
        reject_unknown(s, {"k", "t", "pre_b", "pre_r", "main_b", "main_r", "patches_per_neuron"}, "clustering");
        read(s, "k", c.clustering.k, "clustering");
        read(s, "t", c.clustering.t, "clustering");
        read(s, "pre_b", c.clustering.pre_b, "clustering");
        read(s, "pre_r", c.clustering.pre_r, "clustering");
        read(s, "main_b", c.clustering.main_b, "clustering");
        read(s, "main_r", c.clustering.main_r, "clustering");
        read(s, "patches_per_neuron", c.clustering.patches_per_neuron, "clustering");
    }
    if (auto it = j.find("embedding"); it != j.end()) {
        const auto& s = *it;
        reject_unknown(s, {"d", "negatives", "epochs", "gamma", "freeze_negatives", "parallel", "projection", "layout"},
                       "embedding");
        read(s, "d", c.embedding.d, "embedding");
        read(s, "negatives", c.embedding.negatives, "embedding");
        read(s, "epochs", c.embedding.epochs, "embedding");
        read(s, "gamma", c.embedding.gamma, "embedding");
        read(s, "freeze_negatives", c.embedding.freeze_negatives, "embedding");
        read(s, "parallel", c.embedding.parallel, "embedding");
        read(s, "projection", c.projection, "embedding");
        if (auto l = s.find("layout"); l != s.end()) c.layout = resolve_path(base, l->get<std::string>());
    }
    if (auto it = j.find("graph"); it != j.end()) {
        const auto& s = *it;
        reject_unknown(s, {"top_neurons_per_layer", "top_edges_per_dst", "max_displayed_members", "min_importance"},
                       "graph");
        read(s, "top_neurons_per_layer", c.graph.top_neurons_per_layer, "graph");
        read(s, "top_edges_per_dst", c.graph.top_edges_per_dst, "graph");
        read(s, "max_displayed_members", c.graph.max_displayed_members, "graph");
        read(s, "min_importance", c.min_importance, "graph");
    }
    if (auto it = j.find("cascade"); it != j.end()) {
        const auto& s = *it;
        reject_unknown(s, {"trigger_top_n", "normalize", "relu"}, "cascade");
        read(s, "trigger_top_n", c.cascade.trigger_top_n, "cascade");
        read(s, "normalize", c.cascade.normalize, "cascade");
        read(s, "relu", c.cascade.relu, "cascade");
    }
    c.propagate();
    return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error("config file not found: " + path.string());
    return pipeline_config_from_json(read_json_file(path), path.parent_path());
}

json pipeline_config_to_json(const PipelineConfig& c) {
    json j{{"bundle", c.bundle.string()},
           {"seed", c.seed},
           {"threads", c.threads},
           {"clustering",
            {{"k", c.clustering.k},
             {"t", c.clustering.t},
             {"pre_b", c.clustering.pre_b},
             {"pre_r", c.clustering.pre_r},
             {"main_b", c.clustering.main_b},
             {"main_r", c.clustering.main_r},
             {"patches_per_neuron", c.clustering.patches_per_neuron}}},
           {"embedding",
            {{"d", c.embedding.d},
             {"negatives", c.embedding.negatives},
             {"epochs", c.embedding.epochs},
             {"gamma", c.embedding.gamma},
             {"freeze_negatives", c.embedding.freeze_negatives},
             {"parallel", c.embedding.parallel},
             {"projection", c.projection}}},
           {"graph",
            {{"top_neurons_per_layer", c.graph.top_neurons_per_layer},
             {"top_edges_per_dst", c.graph.top_edges_per_dst},
             {"max_displayed_members", c.graph.max_displayed_members},
             {"min_importance", c.min_importance}}},
           {"cascade",
            {{"trigger_top_n", c.cascade.trigger_top_n},
             {"normalize", c.cascade.normalize},
             {"relu", c.cascade.relu}}}};
    if (c.dataset) j["dataset"] = c.dataset->string();
    if (c.layout) j["embedding"]["layout"] = c.layout->string();
    return j;
}

fs::path resolve_dataset(const PipelineConfig& config) {
    if (config.dataset) return *config.dataset;
    const auto descriptor = config.bundle / artifact::kBundle;
    if (fs::exists(descriptor)) {
        const auto j = read_json_file(descriptor);
        require_schema("bundle", j, descriptor.string());
        return fs::path(j.at("dataset").get<std::string>());
    }
    return config.bundle;
}

void require_artifact(const fs::path& bundle, const std::string& file, const std::string& stage) {
    if (!fs::exists(bundle / file)) {
        throw Error("missing " + file + " in " + bundle.string() + "; run the `" + stage + "` stage first");
    }
}

namespace {

json load_artifact(const fs::path& bundle, const std::string& file, const std::string& schema_name) {
    const auto path = bundle / file;
    auto j = read_json_file(path);
    require_schema(schema_name, j, path.string());
    return j;
}

void check_digest(const json& j, const Dataset& dataset, const std::string& file) {
    if (j.at("dataset_digest").get<std::string>() != dataset.digest()) {
        throw Error(file + " was built from a different dataset (digest mismatch)");
    }
}

TopKIndex load_topk(const fs::path& bundle, const Dataset& dataset) {
    require_artifact(bundle, artifact::kTopK, "topk");
    const auto j = load_artifact(bundle, artifact::kTopK, "topk");
    check_digest(j, dataset, artifact::kTopK);
    auto index = topk_from_json(j);
    for (const auto& layer : dataset.manifest().layers) {
        auto it = index.layers.find(layer.id);
        if (it == index.layers.end() || it->second.size() != static_cast<std::size_t>(layer.channels)) {
            throw Error("topk.json does not cover layer " + layer.id);
        }
        for (const auto& t : it->second) {
            if (t.neuron.layer != layer.id) throw Error("topk.json does not cover every neuron of layer " + layer.id);
        }
    }
    return index;
}

std::vector<NeuronCluster> load_clusters(const fs::path& bundle) {
    require_artifact(bundle, artifact::kClusters, "cluster");
    return clusters_from_json(load_artifact(bundle, artifact::kClusters, "clusters"));
}

}  // namespace

json stage_topk(const PipelineConfig& config) {
    config.validate();
    const auto dataset_dir = resolve_dataset(config);
    const auto dataset = Dataset::open(dataset_dir);
    const int k = std::min<int>(config.clustering.k, static_cast<int>(dataset.num_images()));
    const auto topk = compute_topk(dataset, k, config.threads);
    fs::create_directories(config.bundle);
    write_json_file(config.bundle / artifact::kTopK, topk_to_json(topk, dataset.digest()));
    write_json_file(config.bundle / artifact::kBundle,
                    json{{"dataset", fs::weakly_canonical(fs::absolute(dataset_dir)).string()},
                         {"dataset_digest", dataset.digest()}});
    return {{"stage", "topk"}, {"k", k}, {"neurons", NeuronIndex(dataset.manifest()).size()}};
}

json stage_cluster(const PipelineConfig& config, bool verify) {
    config.validate();
    require_artifact(config.bundle, artifact::kTopK, "topk");
    const auto dataset = Dataset::open(resolve_dataset(config));
    const auto topk = load_topk(config.bundle, dataset);
    auto cc = config.clustering;
    cc.k = topk.k;
    const auto groups = preprocess(dataset.manifest(), topk, cc);
    write_json_file(config.bundle / artifact::kPreGroups, pregroups_to_json(groups));
    auto clusters = main_cluster(dataset, groups, cc);
    attach_patches(dataset, topk, clusters, cc.patches_per_neuron);
    write_json_file(config.bundle / artifact::kClusters, clusters_to_json(clusters));
    json summary{{"stage", "cluster"}, {"pregroups", groups.size()}, {"clusters", clusters.size()}};
    if (verify) {
        const auto audit = audit_clusters(dataset, topk, groups, clusters);
        json rows = json::array();
        double worst_presim = 1.0, worst_actsim = 1.0;
        for (const auto& a : audit) {
            rows.push_back({{"cluster_id", a.cluster_id},
                            {"size", a.size},
                            {"mean_presim", a.mean_presim},
                            {"min_pair_best_actsim", a.min_pair_best_actsim}});
            worst_presim = std::min(worst_presim, a.mean_presim);
            worst_actsim = std::min(worst_actsim, a.min_pair_best_actsim);
        }
        write_json_file(config.bundle / artifact::kAudit, rows);
        summary["audit"] = {{"clusters", audit.size()},
                            {"min_mean_presim", worst_presim},
                            {"min_pair_best_actsim", worst_actsim}};
    }
    return summary;
}

namespace {

void set_layout(EmbeddingArtifact& a, const PipelineConfig& config, const NeuronIndex& index) {
    if (config.projection == "external") {
        a.layout = load_external_layout(*config.layout, index);
        a.projection_method = "external";
    } else {
        a.layout = project_pca(a.table);
        a.projection_method = "pca";
    }
    a.neighbor_overlap_metric = neighbor_overlap(a.table, a.layout, 10);
}

}  // namespace

json stage_embed(const PipelineConfig& config) {
    config.validate();
    require_artifact(config.bundle, artifact::kTopK, "topk");
    const auto dataset = Dataset::open(resolve_dataset(config));
    const auto topk = load_topk(config.bundle, dataset);
    const NeuronIndex index(dataset.manifest());
    const auto pairs = sample_pairs(index, topk, dataset.num_images(), config.seed);
    auto result = train(index, pairs, config.embedding);
    EmbeddingArtifact a;
    a.config = config.embedding;
    a.table = std::move(result.table);
    a.deterministic = result.deterministic;
    a.dataset_digest = dataset.digest();
    set_layout(a, config, index);
    write_json_file(config.bundle / artifact::kEmbedding, embedding_to_json(a, index));
    return {{"stage", "embed"},
            {"pairs", pairs.pairs.size()},
            {"final_loss", result.epoch_loss.back()},
            {"neighbor_overlap_metric", a.neighbor_overlap_metric},
            {"deterministic", a.deterministic}};
}

json stage_project(const PipelineConfig& config) {
    config.validate();
    require_artifact(config.bundle, artifact::kEmbedding, "embed");
    const auto dataset = Dataset::open(resolve_dataset(config));
    const NeuronIndex index(dataset.manifest());
    const auto j = load_artifact(config.bundle, artifact::kEmbedding, "embedding");
    check_digest(j, dataset, artifact::kEmbedding);
    auto a = embedding_from_json(j, index);
    set_layout(a, config, index);
    write_json_file(config.bundle / artifact::kEmbedding, embedding_to_json(a, index));
    return {{"stage", "project"},
            {"projection", a.projection_method},
            {"neighbor_overlap_metric", a.neighbor_overlap_metric}};
}

ClassGraph load_or_build_class_graph(const fs::path& bundle, const Dataset& dataset, const KernelBank& kernels,
                                     const std::vector<NeuronCluster>& clusters, const std::string& class_label,
                                     const ClassGraphConfig& config) {
    const auto path = bundle / artifact::graph_file(class_label);
    if (fs::exists(path)) {
        const auto j = read_json_file(path);
        require_schema("graph", j, path.string());
        auto g = class_graph_from_json(j);
        if (g.class_label != class_label) throw Error(path.string() + " belongs to class '" + g.class_label + "'");
        return g;
    }
    const auto summary = summarize_class(dataset, kernels, clusters, class_label, config);
    auto g = build_class_graph(dataset.manifest(), summary, 0.0);
    const auto tmp = path.string() + ".tmp";
    write_json_file(tmp, class_graph_to_json(g));
    fs::rename(tmp, path);
    return g;
}

json stage_graph(const PipelineConfig& config, const std::optional<std::string>& class_label) {
    config.validate();
    require_artifact(config.bundle, artifact::kClusters, "cluster");
    const auto dataset = Dataset::open(resolve_dataset(config));
    const auto kernels = KernelBank::load(dataset.root(), dataset.manifest());
    const auto clusters = load_clusters(config.bundle);
    std::vector<std::string> labels;
    if (class_label) {
        if (dataset.manifest().images_of_class(*class_label).empty()) throw Error("unknown class '" + *class_label + "'");
        labels.push_back(*class_label);
    } else {
        labels = dataset.manifest().class_labels();
    }
    json out = json::array();
    for (const auto& label : labels) {
        const auto full = load_or_build_class_graph(config.bundle, dataset, kernels, clusters, label, config.graph);
        const auto shown = filter_class_graph(full, config.min_importance);
        out.push_back({{"class", label},
                       {"file", artifact::graph_file(label)},
                       {"nodes", shown.nodes.size()},
                       {"edges", shown.edges.size()}});
    }
    return {{"stage", "graph"}, {"min_importance", config.min_importance}, {"graphs", out}};
}

json validate_bundle(const PipelineConfig& config) {
    json checks = json::array();
    bool ok = true;
    auto record = [&](const std::string& name, bool passed, const std::string& detail) {
        checks.push_back({{"check", name}, {"ok", passed}, {"detail", detail}});
        ok = ok && passed;
    };
    auto attempt = [&](const std::string& name, auto&& fn) {
        try {
            record(name, true, fn());
        } catch (const std::exception& e) {
            record(name, false, e.what());
        }
    };

    std::optional<Dataset> dataset;
    attempt("dataset", [&] {
        dataset.emplace(Dataset::open(resolve_dataset(config)));
        return "manifest and " + std::to_string(dataset->manifest().layers.size()) + " activation files";
    });
    if (!dataset) return {{"ok", false}, {"checks", checks}};
    const auto& manifest = dataset->manifest();
    const NeuronIndex index(manifest);

    attempt("kernels", [&] {
        KernelBank::load(dataset->root(), manifest);
        return std::to_string(manifest.connections.size()) + " kernel files";
    });

    const auto& bundle = config.bundle;
    auto present = [&](const char* file) { return fs::exists(bundle / file); };

    if (present(artifact::kBundle)) {
        attempt(artifact::kBundle, [&] {
            const auto j = load_artifact(bundle, artifact::kBundle, "bundle");
            check_digest(j, *dataset, artifact::kBundle);
            return std::string("digest matches");
        });
    }
    if (present(artifact::kTopK)) {
        attempt(artifact::kTopK, [&] {
            const auto topk = load_topk(bundle, *dataset);
            for (const auto& [layer, list] : topk.layers) {
                if (!manifest.has_layer(layer)) throw Error("unknown layer " + layer);
                for (const auto& t : list) {
                    for (int x : t.image_ids) {
                        if (x < 0 || static_cast<std::size_t>(x) >= dataset->num_images()) {
                            throw Error("image id " + std::to_string(x) + " out of range for " + t.neuron.key());
                        }
                    }
                }
            }
            return "k = " + std::to_string(topk.k);
        });
    }
    if (present(artifact::kPreGroups)) {
        attempt(artifact::kPreGroups, [&] {
            const auto groups = pregroups_from_json(load_artifact(bundle, artifact::kPreGroups, "pregroups"));
            for (const auto& g : groups) {
                for (int c : g.members) index.index_of({g.layer, c});
            }
            return std::to_string(groups.size()) + " groups";
        });
    }
    std::vector<NeuronCluster> clusters;
    if (present(artifact::kClusters)) {
        attempt(artifact::kClusters, [&] {
            clusters = load_clusters(bundle);
            std::vector<int> seen(index.size(), 0);
            std::set<std::string> ids;
            for (const auto& c : clusters) {
                if (!ids.insert(c.cluster_id).second) throw Error("duplicate cluster id " + c.cluster_id);
                for (int m : c.members) ++seen[index.index_of({c.layer, m})];
                for (const auto& [m, patches] : c.patches) {
                    index.index_of({c.layer, m});
                    for (const auto& p : patches) {
                        if (p.image_id < 0 || static_cast<std::size_t>(p.image_id) >= dataset->num_images()) {
                            throw Error("patch image out of range in cluster " + c.cluster_id);
                        }
                    }
                }
            }
            for (std::size_t n = 0; n < index.size(); ++n) {
                if (seen[n] != 1) {
                    throw Error("neuron " + index.ref(n).key() + " appears in " + std::to_string(seen[n]) + " clusters");
                }
            }
            return std::to_string(clusters.size()) + " clusters";
        });
    }
    if (present(artifact::kEmbedding)) {
        attempt(artifact::kEmbedding, [&] {
            const auto j = load_artifact(bundle, artifact::kEmbedding, "embedding");
            check_digest(j, *dataset, artifact::kEmbedding);
            for (const auto& [key, v] : j.at("layout2d").items()) index.index_of(NeuronRef::parse(key));
            const auto a = embedding_from_json(j, index);
            for (double v : a.table.values()) {
                if (!std::isfinite(v)) throw Error("non-finite embedding value");
            }
            return std::to_string(index.size()) + " vectors";
        });
    }
    for (const auto& entry : fs::directory_iterator(bundle)) {
        const auto name = entry.path().filename().string();
        if (name.rfind("graph_", 0) != 0 || entry.path().extension() != ".json") continue;
        attempt(name, [&] {
            const auto j = load_artifact(bundle, name, "graph");
            const auto g = class_graph_from_json(j);
            if (artifact::graph_file(g.class_label) != name) throw Error("file name does not match class");
            if (manifest.images_of_class(g.class_label).empty()) throw Error("unknown class " + g.class_label);
            std::set<std::string> nodes;
            for (const auto& n : g.nodes) {
                nodes.insert(n.node_id);
                for (int c : n.members) index.index_of({n.layer, c});
            }
            for (const auto& e : g.edges) {
                if (!nodes.count(e.src_node) || !nodes.count(e.dst_node)) throw Error("edge endpoint missing");
            }
            return std::to_string(g.nodes.size()) + " nodes";
        });
    }
    return {{"ok", ok}, {"checks", checks}};
}

}  // namespace cmap
