// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "httplib.h"

#include "cmap/bundle.hpp"
#include "cmap/cascade.hpp"
#include "cmap/class_graph.hpp"
#include "cmap/clustering.hpp"
#include "cmap/embedding.hpp"
#include "cmap/eval.hpp"
#include "cmap/minhash.hpp"
#include "cmap/pipeline.hpp"
#include "cmap/schema.hpp"
#include "cmap/service.hpp"
#include "bundle_fixture.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cmap;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool ok = false;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// Default synthetic dataset and two full default-config pipeline runs over it.
struct DefaultRuns {
    fixture::TempDir dir{"acceptance"};
    PlantedTruth planted;
    PipelineConfig a, b;
    double cluster_seconds = 0;
    double full_seconds = 0;

    DefaultRuns() {
        planted = generate_synthetic(SyntheticSpec{}, dir.path() / "data");
        a.dataset = b.dataset = dir.path() / "data";
        a.bundle = dir.path() / "run_a";
        b.bundle = dir.path() / "run_b";
        a.propagate();
        b.propagate();
        const auto t0 = Clock::now();
        stage_topk(a);
        stage_cluster(a, false);
        cluster_seconds = seconds_since(t0);
        stage_embed(a);
        stage_graph(a, std::nullopt);
        full_seconds = seconds_since(t0);
        fixture::run_all_stages(b, false);
    }
};

DefaultRuns& runs() {
    static DefaultRuns r;
    return r;
}

Outcome minhash_fidelity() {
    const auto t0 = Clock::now();
    Rng rng(11);
    double total = 0;
    for (int t = 0; t < 100; ++t) {
        std::set<std::uint64_t> sa, sb;
        const auto na = 5 + rng.index(200), nb = 5 + rng.index(200);
        while (sa.size() < na) sa.insert(rng.index(400));
        while (sb.size() < nb) sb.insert(rng.index(400));
        const std::vector<std::uint64_t> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
        HashFamily f(derive_seed(5, "pair", t), 1000);
        total += std::abs(estimate_jaccard(signature(a, f), signature(b, f)) - oracle::jaccard(a, b));
    }
    const double mean = total / 100, secs = seconds_since(t0);
    return {mean <= 0.05 && secs < 10, fmt("mean |error| %.4f, %.2f s", mean, secs)};
}

Outcome lsh_curve() {
    const BandingParams params{20, 15};
    bool ok = true;
    std::ostringstream detail;
    for (double s : {0.1, 0.3, 0.5, 0.8}) {
        const int trials = 500;
        int hits = 0;
        for (int t = 0; t < trials; ++t) {
            const auto [a, b] = oracle::planted_pair(s, 200, derive_seed(91, "pair", t));
            HashFamily f(derive_seed(92, "family", t), params.hashes());
            std::map<std::size_t, MinHashSignature> sigs{{0, signature(a, f)}, {1, signature(b, f)}};
            hits += components(band_group(sigs, params)).size() == 1;
        }
        const double expected = 1 - std::pow(1 - std::pow(s, 15), 20);
        const double got = static_cast<double>(hits) / trials;
        ok = ok && std::abs(got - expected) <= 0.05;
        detail << fmt("s=%.1f: %.3f vs %.3f; ", s, got, expected);
    }
    return {ok, detail.str()};
}

Outcome planted_recovery() {
    auto& r = runs();
    const auto d = Dataset::open(*r.a.dataset);
    const auto clusters = clusters_from_json(read_json_file(r.a.bundle / "clusters.json"));
    const double ari = adjusted_rand_index(partition_labels(d.manifest(), clusters), partition_labels(d.manifest(), r.planted));
    return {ari >= 0.95 && r.full_seconds < 300,
            fmt("ARI %.4f, topk+cluster %.1f s, full pipeline %.1f s", ari, r.cluster_seconds, r.full_seconds)};
}

Outcome clustering_oracle() {
    double worst = 1;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        fixture::TempDir dir("acc_oracle32");
        fixture::oracle32(dir.path(), seed);
        const auto d = Dataset::open(dir.path());
        ClusteringConfig cfg;
        cfg.k = 20;
        cfg.seed = seed;
        const auto topk = compute_topk(d, cfg.k);
        const auto clusters = main_cluster(d, preprocess(d.manifest(), topk, cfg), cfg);
        const auto truth = oracle::threshold_components(d, topk, "a", 0.5, 0.5);
        worst = std::min(worst, pairwise_f1(partition_labels(d.manifest(), clusters), truth));
    }
    return {worst >= 0.9, fmt("min pairwise F1 over 5 seeds %.4f", worst)};
}

Outcome gradient_check() {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        EmbeddingTable table(12, 8);
        Rng rng(1000 + trial);
        for (auto& v : table.values()) v = rng.normal() * 0.5;
        const PairSample s{0, 1, {2, 3, 4}, {5, 6, 7}};
        const auto g = pair_gradient(table, s);
        auto fd = [&](std::size_t row, std::size_t k) {
            const double h = 1e-5, keep = table.row(row)[k];
            table.row(row)[k] = keep + h;
            const double up = pair_loss(table, s);
            table.row(row)[k] = keep - h;
            const double down = pair_loss(table, s);
            table.row(row)[k] = keep;
            return (up - down) / (2 * h);
        };
        auto rel = [](double x, double y) { return std::abs(x - y) / std::max(1e-8, std::abs(x) + std::abs(y)); };
        for (std::size_t k = 0; k < 8; ++k) {
            worst = std::max(worst, rel(g.gi[k], fd(0, k)));
            worst = std::max(worst, rel(g.gj[k], fd(1, k)));
            for (std::size_t m = 0; m < 3; ++m) {
                worst = std::max(worst, rel(g.g_neg_i[m][k], fd(s.neg_i[m], k)));
                worst = std::max(worst, rel(g.g_neg_j[m][k], fd(s.neg_j[m], k)));
            }
        }
    }
    return {worst <= 1e-4, fmt("max relative error %.2e", worst)};
}

Outcome embedding_separation() {
    const auto inst = fixture::three_groups();
    const NeuronIndex index(inst.manifest);
    const auto pairs = sample_pairs(index, inst.topk, inst.manifest.images.size(), 1);
    EmbeddingConfig config;
    config.seed = 11;
    if (config.epochs != 30 || config.gamma != 0.01 || config.negatives != 10) return {false, "defaults changed"};
    const auto result = train(index, pairs, config);
    double intra = 0, inter = 0;
    int ni = 0, nx = 0;
    for (std::size_t a = 0; a < 30; ++a) {
        for (std::size_t b = a + 1; b < 30; ++b) {
            const double c = cosine(result.table.row(a), result.table.row(b));
            (a / 10 == b / 10 ? intra : inter) += c;
            ++(a / 10 == b / 10 ? ni : nx);
        }
    }
    const double gap = intra / ni - inter / nx;
    return {gap >= 0.3, fmt("intra %.3f, inter %.3f, gap %.3f", intra / ni, inter / nx, gap)};
}

Outcome importance_conservation() {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        fixture::TempDir dir("acc_importance");
        const auto m = fixture::random_chain(dir.path(), {{"a", 16, 8}, {"b", 12, 4}, {"c", 5, 4}}, 30, 3, seed);
        const auto d = Dataset::open(dir.path());
        const NeuronIndex index(m);
        for (const auto& label : m.class_labels()) {
            const auto scores = neuron_importance(d, index, label);
            const int class_size = static_cast<int>(m.images_of_class(label).size());
            for (std::size_t l = 0; l < index.layer_count(); ++l) {
                int total = 0;
                for (std::size_t c = 0; c < index.layer_size(l); ++c) total += scores[index.layer_offset(l) + c];
                if (total != 5 * class_size)
                    return {false, "seed " + std::to_string(seed) + " layer " + std::to_string(l) + ": sum " +
                                       std::to_string(total) + " != " + std::to_string(5 * class_size)};
                ++checked;
            }
        }
    }
    return {true, std::to_string(checked) + " (instance, class, layer) sums exact"};
}

Outcome oracle_equivalence() {
    int graphs = 0, cascades = 0;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        fixture::TempDir dir("acc_equiv");
        const int ks = seed % 3 == 0 ? 1 : 3;
        const auto m = fixture::random_chain(dir.path(), {{"a", 16, 8}, {"b", 12, 4}, {"c", 10, 4}}, 16, 2, seed, ks);
        const auto d = Dataset::open(dir.path());
        const auto bank = KernelBank::load(dir.path(), m);
        const NeuronIndex index(m);
        for (const auto& label : m.class_labels()) {
            ClassGraphConfig cfg;
            cfg.threads = 2;
            std::map<std::string, int> got;
            for (const auto& [e, w] : edge_influence(d, bank, index, label, cfg))
                got[index.ref(e.first).key() + ">" + index.ref(e.second).key()] = w;
            if (got != oracle::influence(d, bank, label)) return {false, "influence differs, seed " + std::to_string(seed)};
            ++graphs;
        }
        const std::vector<int> members{1, 5, 9, static_cast<int>(seed)};
        const int top = 2 + static_cast<int>(seed % 4);
        CascadeConfig cc;
        cc.trigger_top_n = top;
        const auto r = run_cascade(m, bank, {{"c0", "a", members, {}}}, "c0", cc);
        const auto expected = oracle::cascade(m, bank, 0, members, top);
        if (r.layers.size() != expected.size()) return {false, "cascade depth differs, seed " + std::to_string(seed)};
        for (std::size_t l = 0; l < expected.size(); ++l) {
            std::vector<int> chans;
            for (const auto& t : r.layers[l].triggered) chans.push_back(t.neuron.channel);
            if (chans != expected[l]) return {false, "cascade differs, seed " + std::to_string(seed)};
        }
        ++cascades;
    }
    return {true, std::to_string(graphs) + " influence maps, " + std::to_string(cascades) + " cascades identical"};
}

Outcome determinism() {
    auto& r = runs();
    std::vector<std::string> fa, fb;
    for (const auto& e : fs::directory_iterator(r.a.bundle)) fa.push_back(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(r.b.bundle)) fb.push_back(e.path().filename().string());
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return {false, "different artifact sets"};
    std::size_t differ = 0;
    for (const auto& f : fa) differ += fixture::file_bytes(r.a.bundle / f) != fixture::file_bytes(r.b.bundle / f);
    return {differ == 0, std::to_string(fa.size()) + " artifacts, " + std::to_string(differ) + " differ"};
}

std::vector<NeuronCluster> blocks(int channels, int size) {
    std::vector<NeuronCluster> out;
    for (int start = 0; start < channels; start += size) {
        NeuronCluster c;
        c.cluster_id = "c" + std::to_string(out.size());
        c.layer = "a";
        for (int m = start; m < std::min(channels, start + size); ++m) c.members.push_back(m);
        out.push_back(c);
    }
    return out;
}

Outcome eval_sanity() {
    const auto m = fixture::manifest({{"a", 60}}, 3);
    const auto tasks = generate_tasks(m, blocks(60, 6), {}, {1, 0, 0}, 20, 5);
    std::vector<Judgment> perfect, random;
    Rng rng(17);
    for (const auto& t : tasks) {
        std::vector<int> truth;
        for (std::size_t s = 0; s < t.slots.size(); ++s)
            if (t.slots[s].in_cluster) truth.push_back(static_cast<int>(s));
        perfect.push_back({t.task_id, "p", truth, std::nullopt});
    }
    for (int r = 0; r < 200; ++r) {
        for (const auto& t : tasks) {
            Judgment j{t.task_id, "r" + std::to_string(r), {}, std::nullopt};
            for (int s = 0; s < static_cast<int>(t.slots.size()); ++s)
                if (rng.uniform() < 0.5) j.selected.push_back(s);
            random.push_back(std::move(j));
        }
    }
    const auto p = score(tasks, perfect);
    const auto q = score(tasks, random);
    if (!p.auc || !p.fpr || !q.auc) return {false, "metrics missing"};
    const bool ok = *p.auc == 1.0 && *p.fpr == 0.0 && *q.auc >= 0.4 && *q.auc <= 0.6;
    return {ok, fmt("perfect AUC %.3f FPR %.3f; random AUC %.3f", *p.auc, *p.fpr, *q.auc)};
}

// Every endpoint over HTTP on the default bundle, checked against schemas and
// against results assembled from library calls.
Outcome service_contract() {
    auto& r = runs();
    const auto bundle = SummaryBundle::open(r.a);
    Service service(bundle);
    const int port = service.bind("127.0.0.1", 0);
    service.start();

    const auto dataset = Dataset::open(*r.a.dataset);
    const auto& manifest = dataset.manifest();
    const auto kernels = KernelBank::load(dataset.root(), manifest);
    const auto clusters = clusters_from_json(read_json_file(r.a.bundle / "clusters.json"));
    const NeuronIndex index(manifest);
    const auto embedding = embedding_from_json(read_json_file(r.a.bundle / "embedding.json"), index);
    const auto lookup = cluster_lookup(clusters);
    auto graph = [&](const std::string& label, double min) {
        return build_class_graph(manifest, summarize_class(dataset, kernels, clusters, label, {}), min);
    };

    std::vector<std::string> failures;
    int calls = 0;
    httplib::Client cli("127.0.0.1", port);
    auto call = [&](const std::string& path, const std::string& schema_name, const json& expected,
                    const std::optional<std::string>& post = std::nullopt) {
        ++calls;
        auto res = post ? cli.Post(path, *post, "application/json") : cli.Get(path);
        if (!res || res->status != 200) {
            failures.push_back(path + ": status " + (res ? std::to_string(res->status) : "none"));
            return json();
        }
        const auto body = json::parse(res->body);
        const auto errors = schema_errors(schema(schema_name), body);
        if (!errors.empty()) failures.push_back(path + ": " + errors.front());
        if (!expected.is_null() && body != expected) failures.push_back(path + ": differs from library");
        return body;
    };
    auto expect_error = [&](const std::string& path, int status) {
        ++calls;
        auto res = cli.Get(path);
        if (!res || res->status != status || !schema_errors(schema("error"), json::parse(res->body)).empty())
            failures.push_back(path + ": expected error " + std::to_string(status));
    };

    call("/api/manifest", "manifest", json(manifest));
    call("/api/layers", "layers", json(manifest.layers));
    call("/api/clusters", "clusters", clusters_to_json(clusters));
    for (const auto& layer : manifest.layers) {
        std::vector<NeuronCluster> only;
        for (const auto& c : clusters)
            if (c.layer == layer.id) only.push_back(c);
        call("/api/clusters?layer=" + layer.id, "clusters", clusters_to_json(only));
    }

    const auto view = call("/api/embedding?filter=all", "embedding_view", json());
    if (view.is_object()) {
        bool same = view["neurons"].size() == index.size();
        for (std::size_t n = 0; same && n < index.size(); ++n) {
            const auto& row = view["neurons"][n];
            const auto ref = index.ref(n);
            same = row["neuron"] == ref.key() && row["cluster_id"] == lookup.at(ref.key()) &&
                   row["x"] == embedding.layout[n][0] && row["y"] == embedding.layout[n][1];
        }
        if (!same) failures.push_back("/api/embedding: differs from library");
    }

    const auto labels = manifest.class_labels();
    for (const auto& label : labels) {
        const auto g = graph(label, r.a.min_importance);
        auto expected = class_graph_to_json(g);
        expected["min_importance"] = r.a.min_importance;
        call("/api/graph/" + label, "graph", expected);
        auto strict = class_graph_to_json(graph(label, 3.0));
        strict["min_importance"] = 3.0;
        call("/api/graph/" + label + "?min_importance=3", "graph", strict);

        const auto cls = call("/api/embedding?filter=class:" + label, "embedding_view", json());
        std::set<std::string> drawn, want;
        if (cls.is_object())
            for (const auto& row : cls["neurons"]) drawn.insert(row["neuron"].get<std::string>());
        for (const auto& node : g.nodes)
            for (int c : node.members) want.insert(NeuronRef{node.layer, c}.key());
        if (drawn != want) failures.push_back("/api/embedding class:" + label + ": differs from graph members");
    }

    const auto& first = clusters.front();
    const auto pinned = call("/api/embedding?filter=pinned&pinned=" + first.cluster_id, "embedding_view", json());
    std::set<std::string> pins, want_pins;
    if (pinned.is_object())
        for (const auto& row : pinned["neurons"]) pins.insert(row["neuron"].get<std::string>());
    for (const auto& ref : first.refs()) want_pins.insert(ref.key());
    if (pins != want_pins) failures.push_back("/api/embedding pinned: differs");

    for (std::size_t n = 0; n < index.size(); n += 37) {
        const auto ref = index.ref(n);
        const auto expected_nb = neighbors(embedding.table, n, 10);
        const auto got = call("/api/neighbors/" + ref.key(), "neighbors", json());
        bool same_nb = got.is_object() && got["neighbors"].size() == expected_nb.size();
        for (std::size_t i = 0; same_nb && i < expected_nb.size(); ++i) {
            const auto other = index.ref(expected_nb[i]);
            const auto& row = got["neighbors"][i];
            same_nb = row["neuron"] == other.key() && row["cluster_id"] == lookup.at(other.key()) &&
                      row["cosine"] == cosine(embedding.table.row(n), embedding.table.row(expected_nb[i]));
        }
        if (!same_nb) failures.push_back("/api/neighbors/" + ref.key() + ": differs");

        const auto patches = call("/api/patches/" + ref.key(), "patches", json());
        const auto& cl = *std::find_if(clusters.begin(), clusters.end(),
                                       [&](const auto& c) { return c.cluster_id == lookup.at(ref.key()); });
        const auto& expected = cl.patches.at(ref.channel);
        bool same = patches.is_object() && patches["cluster_id"] == cl.cluster_id &&
                    patches["patches"].size() == expected.size();
        for (std::size_t i = 0; same && i < expected.size(); ++i) {
            const auto& row = patches["patches"][i];
            const auto& img = manifest.images[expected[i].image_id];
            same = row["image_id"] == expected[i].image_id && row["bbox"] == json(expected[i])["bbox"] &&
                   row["class_label"] == img.class_label;
        }
        if (!same) failures.push_back("/api/patches/" + ref.key() + ": differs");
    }

    for (std::size_t i = 0; i < clusters.size(); i += 11) {
        const auto& id = clusters[i].cluster_id;
        call("/api/cascade", "cascade", cascade_to_json(run_cascade(manifest, kernels, clusters, id)),
             json{{"cluster_id", id}}.dump());
        CascadeConfig cc;
        cc.trigger_top_n = 3;
        const auto g = graph(labels.front(), 2.0);
        call("/api/cascade", "cascade", cascade_to_json(run_cascade(manifest, kernels, clusters, id, cc, &g)),
             json{{"cluster_id", id}, {"trigger_top_n", 3}, {"class_context", labels.front()}, {"min_importance", 2.0}}
                 .dump());
    }

    ++calls;
    if (auto res = cli.Get("/api/schemas"); !res || json::parse(res->body) != json(schema_names()))
        failures.push_back("/api/schemas: differs");
    for (const auto& name : schema_names()) {
        ++calls;
        auto res = cli.Get("/api/schemas/" + name);
        if (!res || res->status != 200 || json::parse(res->body) != schema(name)) failures.push_back("/api/schemas/" + name);
    }

    expect_error("/api/neighbors/conv_a:99999", 404);
    expect_error("/api/neighbors/conv_a", 400);
    expect_error("/api/graph/zebra", 404);
    expect_error("/api/nothing", 404);

    service.stop();
    if (!failures.empty()) return {false, failures.front() + " (" + std::to_string(failures.size()) + " failures)"};
    return {true, std::to_string(calls) + " requests"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"minhash-fidelity", minhash_fidelity},
        {"lsh-curve", lsh_curve},
        {"planted-cluster-recovery", planted_recovery},
        {"clustering-oracle-agreement", clustering_oracle},
        {"embedding-gradient-check", gradient_check},
        {"embedding-separation", embedding_separation},
        {"importance-conservation", importance_conservation},
        {"influence-cascade-oracle-equivalence", oracle_equivalence},
        {"determinism", determinism},
        {"eval-harness-sanity", eval_sanity},
        {"service-contract", service_contract},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.ok;
        std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
