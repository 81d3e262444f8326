#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "cmap/bundle.hpp"
#include "cmap/eval.hpp"
#include "cmap/pipeline.hpp"
#include "cmap/schema.hpp"
#include "cmap/service.hpp"

namespace fs = std::filesystem;
using namespace cmap;

namespace {

struct Options {
    std::string config;
    std::string bundle;
    std::string dataset;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<double> min_importance;
    std::string class_label;
    std::string cluster;
    std::string host = "127.0.0.1";
    int port = 8080;
    bool verify = false;
    bool json_out = false;

    // eval
    std::string out;
    std::string spec;
    std::string tasks;
    std::string judgments;
    std::string reference;
    std::string mode;
    int count = 100;
    double p_pipeline = 0.43, p_reference = 0.43, p_random = 0.14;
};

PipelineConfig build_config(const Options& o) {
    PipelineConfig c;
    bool threads_set = false;
    if (!o.config.empty()) {
        const auto j = read_json_file(o.config);
        c = pipeline_config_from_json(j, fs::path(o.config).parent_path());
        threads_set = j.contains("threads");
    }
    if (!o.bundle.empty()) c.bundle = o.bundle;
    if (!o.dataset.empty()) c.dataset = fs::path(o.dataset);
    if (o.seed) c.seed = *o.seed;
    if (o.threads) c.threads = *o.threads;
    else if (!threads_set) c.threads = std::max(1u, std::thread::hardware_concurrency());
    if (o.min_importance) c.min_importance = *o.min_importance;
    c.propagate();
    c.validate();
    return c;
}

void emit(const Options& o, const json& summary) {
    if (o.json_out) {
        std::cout << summary.dump() << "\n";
    } else {
        std::cout << summary.dump(2) << "\n";
    }
}

std::vector<NeuronCluster> planted_clusters(const Manifest& m, const PlantedTruth& truth) {
    std::vector<NeuronCluster> out;
    for (const auto& layer : m.layers) {
        auto it = truth.labels.find(layer.id);
        if (it == truth.labels.end()) continue;
        std::map<int, std::vector<int>> groups;
        for (std::size_t ch = 0; ch < it->second.size(); ++ch) {
            if (it->second[ch] >= 0) groups[it->second[ch]].push_back(static_cast<int>(ch));
        }
        for (auto& [g, members] : groups) {
            NeuronCluster c;
            c.cluster_id = "r" + std::to_string(out.size());
            c.layer = layer.id;
            c.members = std::move(members);
            out.push_back(std::move(c));
        }
    }
    return out;
}

int cmd_cascade(const Options& o) {
    const auto cfg = build_config(o);
    const auto bundle = SummaryBundle::open(cfg);
    json request{{"cluster_id", o.cluster}};
    if (!o.class_label.empty()) request["class_context"] = o.class_label;
    if (o.min_importance) request["min_importance"] = *o.min_importance;
    json result;
    try {
        result = bundle->cascade_json(request);
    } catch (const NotFound& e) {
        throw Error(e.what());
    }
    if (o.json_out) {
        std::cout << result.dump() << "\n";
        return 0;
    }
    std::cout << "cascade from " << result["seed_cluster"].get<std::string>() << "\n";
    for (const auto& layer : result["layers"]) {
        std::cout << "  " << layer["layer"].get<std::string>() << ":";
        for (const auto& t : layer["triggered"]) {
            std::cout << " " << t["neuron"].get<std::string>() << " (" << t["cluster_id"].get<std::string>() << ", "
                      << t["score"].get<double>() << ")";
        }
        std::cout << "\n";
    }
    return 0;
}

int cmd_serve(const Options& o) {
    const auto cfg = build_config(o);
    std::shared_ptr<const SummaryBundle> bundle = SummaryBundle::open(cfg);
    Service service(bundle);
    const int port = service.bind(o.host, o.port);
    std::cout << "serving " << cfg.bundle.string() << " on http://" << o.host << ":" << port << std::endl;
    service.run();
    return 0;
}

int cmd_validate(const Options& o) {
    const auto report = validate_bundle(build_config(o));
    if (o.json_out) {
        std::cout << report.dump() << "\n";
    } else {
        for (const auto& c : report["checks"]) {
            std::cout << (c["ok"].get<bool>() ? "ok   " : "FAIL ") << c["check"].get<std::string>() << ": "
                      << c["detail"].get<std::string>() << "\n";
        }
    }
    return report["ok"].get<bool>() ? 0 : 1;
}

int cmd_synth(const Options& o) {
    SyntheticSpec spec;
    if (!o.spec.empty()) spec = read_json_file(o.spec).get<SyntheticSpec>();
    if (o.seed) spec.seed = *o.seed;
    if (o.out.empty()) throw Error("eval synth needs --out <dir>");
    const auto truth = generate_synthetic(spec, o.out);
    std::size_t planted = 0;
    for (const auto& [layer, labels] : truth.labels) {
        for (int l : labels) planted += l >= 0;
    }
    emit(o, {{"dataset", o.out}, {"layers", spec.layers.size()}, {"images", spec.images}, {"planted_neurons", planted}});
    return 0;
}

int cmd_tasks(const Options& o) {
    const auto cfg = build_config(o);
    require_artifact(cfg.bundle, artifact::kClusters, "cluster");
    const auto dataset_dir = resolve_dataset(cfg);
    const auto manifest = read_manifest(dataset_dir);
    const auto clusters = clusters_from_json(read_json_file(cfg.bundle / artifact::kClusters));
    std::vector<NeuronCluster> reference;
    if (!o.reference.empty()) {
        reference = clusters_from_json(read_json_file(o.reference));
    } else if (fs::exists(dataset_dir / "planted.json")) {
        reference = planted_clusters(manifest, read_planted(dataset_dir));
    }
    const TaskProportions p{o.p_pipeline, o.p_reference, o.p_random};
    const auto tasks = tasks_to_json(generate_tasks(manifest, clusters, reference, p, o.count, cfg.seed));
    require_schema("tasks", tasks, "generated tasks");
    if (o.out.empty()) {
        std::cout << tasks.dump(2) << "\n";
    } else {
        write_json_file(o.out, tasks);
        emit(o, {{"tasks", tasks.size()}, {"file", o.out}});
    }
    return 0;
}

int cmd_score(const Options& o) {
    if (o.tasks.empty() || o.judgments.empty()) throw Error("eval score needs --tasks and --judgments");
    const auto tj = read_json_file(o.tasks);
    const auto jj = read_json_file(o.judgments);
    require_schema("tasks", tj, o.tasks);
    require_schema("judgments", jj, o.judgments);
    std::optional<TaskMode> only;
    if (!o.mode.empty()) only = task_mode_from_string(o.mode);
    const auto metrics = metrics_to_json(score(tasks_from_json(tj), judgments_from_json(jj), only));
    if (!o.out.empty()) write_json_file(o.out, metrics);
    std::cout << (o.json_out ? metrics.dump() : metrics.dump(2)) << "\n";
    return 0;
}

int cmd_recovery(const Options& o) {
    const auto cfg = build_config(o);
    require_artifact(cfg.bundle, artifact::kClusters, "cluster");
    const auto dataset_dir = resolve_dataset(cfg);
    if (!fs::exists(dataset_dir / "planted.json")) throw Error("no planted.json in " + dataset_dir.string());
    const auto manifest = read_manifest(dataset_dir);
    const auto clusters = clusters_from_json(read_json_file(cfg.bundle / artifact::kClusters));
    const auto predicted = partition_labels(manifest, clusters);
    const auto truth = partition_labels(manifest, read_planted(dataset_dir));
    emit(o, {{"ari", adjusted_rand_index(predicted, truth)},
             {"pairwise_f1", pairwise_f1(predicted, truth)},
             {"clusters", clusters.size()}});
    return 0;
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--bundle", o.bundle, "Bundle directory for artifacts");
    cmd->add_option("--dataset", o.dataset, "NCAF dataset directory");
    cmd->add_option("--seed", o.seed, "Seed for every random stream");
    cmd->add_option("--threads", o.threads, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
    cmd->add_flag("--json", o.json_out, "Machine-readable output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept summaries for convolutional networks"};
    app.require_subcommand(1);
    Options o;

    auto simple_stage = [&](const char* name, const char* help) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, o);
        return cmd;
    };
    auto* topk = simple_stage("topk", "Rank the top images of every neuron");
    auto* cluster = simple_stage("cluster", "Group neurons into concept clusters");
    cluster->add_flag("--verify", o.verify, "Audit clusters with exact similarities (audit.json)");
    auto* embed = simple_stage("embed", "Train the neuron embedding and 2-D layout");
    auto* project = simple_stage("project", "Recompute the 2-D layout of an existing embedding");
    auto* graph = simple_stage("graph", "Build class graphs (all classes unless --class)");
    graph->add_option("--class", o.class_label, "Class label");
    graph->add_option("--min-importance", o.min_importance, "Node importance threshold for the summary");
    auto* cascade = simple_stage("cascade", "Run an activation cascade from a cluster");
    cascade->add_option("--cluster", o.cluster, "Seed cluster id")->required();
    cascade->add_option("--class", o.class_label, "Class graph used as context");
    cascade->add_option("--min-importance", o.min_importance, "Threshold for the class context");
    auto* serve = simple_stage("serve", "Serve a bundle over HTTP");
    serve->add_option("--port", o.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    serve->add_option("--host", o.host, "Listen address");
    serve->add_option("--min-importance", o.min_importance, "Default graph threshold");
    auto* validate = simple_stage("validate", "Check bundle integrity");

    auto* eval = app.add_subcommand("eval", "Synthetic data, intruder tasks and scoring");
    eval->require_subcommand(1);
    auto* synth = eval->add_subcommand("synth", "Write a synthetic dataset with planted concepts");
    synth->add_option("--out", o.out, "Output dataset directory")->required();
    synth->add_option("--spec", o.spec, "SyntheticSpec JSON")->check(CLI::ExistingFile);
    synth->add_option("--seed", o.seed, "Seed");
    synth->add_flag("--json", o.json_out, "Machine-readable output");
    auto* tasks = eval->add_subcommand("tasks", "Generate intruder tasks from a bundle");
    add_common(tasks, o);
    tasks->add_option("--count", o.count, "Number of tasks")->check(CLI::NonNegativeNumber);
    tasks->add_option("--reference", o.reference, "Reference clusters.json (default: planted groups)");
    tasks->add_option("--pipeline-share", o.p_pipeline, "Share of pipeline-cluster tasks");
    tasks->add_option("--reference-share", o.p_reference, "Share of reference-cluster tasks");
    tasks->add_option("--random-share", o.p_random, "Share of random tasks");
    tasks->add_option("--out", o.out, "Output tasks.json");
    auto* scoring = eval->add_subcommand("score", "Score judgments against tasks");
    scoring->add_option("--tasks", o.tasks, "tasks.json")->required()->check(CLI::ExistingFile);
    scoring->add_option("--judgments", o.judgments, "judgments.json")->required()->check(CLI::ExistingFile);
    scoring->add_option("--mode", o.mode, "Only score one task mode")
        ->check(CLI::IsMember({"pipeline", "reference", "random"}));
    scoring->add_option("--out", o.out, "Also write metrics here");
    scoring->add_flag("--json", o.json_out, "Compact output");
    auto* recovery = eval->add_subcommand("recovery", "ARI and pairwise F1 against planted groups");
    add_common(recovery, o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*topk) emit(o, stage_topk(build_config(o)));
        else if (*cluster) emit(o, stage_cluster(build_config(o), o.verify));
        else if (*embed) emit(o, stage_embed(build_config(o)));
        else if (*project) emit(o, stage_project(build_config(o)));
        else if (*graph) emit(o, stage_graph(build_config(o), o.class_label.empty() ? std::nullopt : std::optional(o.class_label)));
        else if (*cascade) return cmd_cascade(o);
        else if (*serve) return cmd_serve(o);
        else if (*validate) return cmd_validate(o);
        else if (*synth) return cmd_synth(o);
        else if (*tasks) return cmd_tasks(o);
        else if (*scoring) return cmd_score(o);
        else if (*recovery) return cmd_recovery(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
