#include "cmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cmap/kernels.hpp"
#include "cmap/rng.hpp"

namespace cmap {

void SyntheticSpec::validate() const {
    if (layers.empty()) throw Error("synthetic spec needs at least one layer");
    if (images < 1 || classes < 1 || pixel_size < 1) throw Error("synthetic spec counts must be positive");
    if (groups_per_layer < 0 || group_size < 1) throw Error("synthetic spec group counts must be positive");
    if (pool_size < 1 || pool_size > images) throw Error("pool_size must lie in [1, images]");
    if (!(region_fraction > 0.0 && region_fraction <= 1.0)) throw Error("region_fraction must lie in (0, 1]");
    if (noise < 0.0 || kernel_noise < 0.0) throw Error("noise levels must be non-negative");
    if (!(noise_density >= 0.0 && noise_density <= 1.0)) throw Error("noise_density must lie in [0, 1]");
    if (kernel_size < 1) throw Error("kernel_size must be positive");
    if (!(iou_target > 0.0 && iou_target <= 1.0)) {
        throw Error("infeasible IoU target " + std::to_string(iou_target) + " (must lie in (0, 1])");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.channels < 1 || layer.height < 1 || layer.width < 1) {
            throw Error("synthetic layer '" + layer.id + "' has non-positive dimensions");
        }
        if (groups_per_layer * group_size > layer.channels) {
            throw Error("synthetic layer '" + layer.id + "' cannot hold the planted groups");
        }
        const int region = std::max(1, static_cast<int>(std::lround(region_fraction * layer.height * layer.width)));
        if (iou_target < 1.0 && region < 2) {
            throw Error("infeasible IoU target: layer '" + layer.id + "' regions are a single cell");
        }
        if (l > 0) {
            const auto& prev = layers[l - 1];
            const int stride = implied_stride(prev.height, layer.height);
            if (same_output_size(prev.height, stride) != layer.height ||
                same_output_size(prev.width, stride) != layer.width || implied_stride(prev.width, layer.width) != stride) {
                throw Error("synthetic layer '" + layer.id + "' size is not reachable by a strided convolution");
            }
        }
    }
}

void to_json(json& j, const SyntheticSpec& s) {
    json layers = json::array();
    for (const auto& l : s.layers) {
        layers.push_back({{"id", l.id}, {"channels", l.channels}, {"height", l.height}, {"width", l.width}});
    }
    j = json{{"layers", layers},
             {"images", s.images},
             {"classes", s.classes},
             {"groups_per_layer", s.groups_per_layer},
             {"group_size", s.group_size},
             {"pool_size", s.pool_size},
             {"region_fraction", s.region_fraction},
             {"iou_target", s.iou_target},
             {"noise", s.noise},
             {"noise_density", s.noise_density},
             {"kernel_size", s.kernel_size},
             {"path_weight", s.path_weight},
             {"kernel_noise", s.kernel_noise},
             {"pixel_size", s.pixel_size},
             {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
    static const std::set<std::string> known{"layers",    "images",       "classes",     "groups_per_layer",
                                             "group_size", "pool_size",    "region_fraction", "iou_target",
                                             "noise",     "noise_density", "kernel_size",  "path_weight", "kernel_noise",
                                             "pixel_size", "seed"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw Error("unknown synthetic spec key '" + key + "'");
    }
    if (j.contains("layers")) {
        s.layers.clear();
        for (const auto& l : j.at("layers")) {
            s.layers.push_back({l.at("id").get<std::string>(), l.at("channels").get<int>(), l.at("height").get<int>(),
                                l.at("width").get<int>()});
        }
    }
    auto opt = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    opt("images", s.images);
    opt("classes", s.classes);
    opt("groups_per_layer", s.groups_per_layer);
    opt("group_size", s.group_size);
    opt("pool_size", s.pool_size);
    opt("region_fraction", s.region_fraction);
    opt("iou_target", s.iou_target);
    opt("noise", s.noise);
    opt("noise_density", s.noise_density);
    opt("kernel_size", s.kernel_size);
    opt("path_weight", s.path_weight);
    opt("kernel_noise", s.kernel_noise);
    opt("pixel_size", s.pixel_size);
    opt("seed", s.seed);
}

namespace {

/// Concept pool: class-`cls` images first, then random fill.
std::vector<int> draw_pool(Rng& rng, const SyntheticSpec& spec, int cls) {
    std::vector<int> own, other;
    for (int x = 0; x < spec.images; ++x) (cls >= 0 && x % spec.classes == cls ? own : other).push_back(x);
    rng.shuffle(own);
    rng.shuffle(other);
    std::vector<int> pool;
    for (int x : own) {
        if (static_cast<int>(pool.size()) >= spec.pool_size) break;
        pool.push_back(x);
    }
    for (int x : other) {
        if (static_cast<int>(pool.size()) >= spec.pool_size) break;
        pool.push_back(x);
    }
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

PlantedTruth generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root) {
    spec.validate();
    std::filesystem::create_directories(root);
    Rng rng(derive_seed(spec.seed, "synthetic"));

    Manifest manifest;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& sl = spec.layers[l];
        manifest.layers.push_back({sl.id, sl.channels, sl.height, sl.width, static_cast<int>(l)});
        if (l > 0) manifest.connections.push_back({spec.layers[l - 1].id, sl.id});
    }
    for (int x = 0; x < spec.images; ++x) {
        manifest.images.push_back({x, "class_" + std::to_string(x % spec.classes),
                                   "images/" + std::to_string(x) + ".png", spec.pixel_size, spec.pixel_size});
    }
    manifest.validate();

    std::vector<std::vector<int>> group_pools;
    for (int g = 0; g < spec.groups_per_layer; ++g) group_pools.push_back(draw_pool(rng, spec, g % spec.classes));

    const double keep = 2.0 * spec.iou_target / (1.0 + spec.iou_target);
    PlantedTruth truth;
    std::vector<std::vector<std::vector<int>>> members_by_layer;  // [layer][group] -> channels

    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = manifest.layers[l];
        const int cells = layer.cells();
        const int region_cells = std::max(1, static_cast<int>(std::lround(spec.region_fraction * cells)));
        Rng lrng(derive_seed(spec.seed, "layer", l));

        std::vector<int> perm(layer.channels);
        std::iota(perm.begin(), perm.end(), 0);
        lrng.shuffle(perm);
        auto& labels = truth.labels[layer.id];
        labels.assign(layer.channels, -1);
        std::vector<std::vector<int>> groups(spec.groups_per_layer);
        for (int g = 0; g < spec.groups_per_layer; ++g) {
            for (int m = 0; m < spec.group_size; ++m) {
                const int c = perm[g * spec.group_size + m];
                labels[c] = g;
                groups[g].push_back(c);
            }
            std::sort(groups[g].begin(), groups[g].end());
        }
        members_by_layer.push_back(groups);

        // Concepts: planted groups first, then one per unplanted channel.
        struct Concept {
            std::vector<int> members;
            std::vector<int> pool;
        };
        std::vector<Concept> concepts;
        for (int g = 0; g < spec.groups_per_layer; ++g) concepts.push_back({groups[g], group_pools[g]});
        for (int c = 0; c < layer.channels; ++c) {
            if (labels[c] < 0) concepts.push_back({{c}, draw_pool(lrng, spec, -1)});
        }

        const std::size_t plane = static_cast<std::size_t>(cells);
        std::vector<float> values(static_cast<std::size_t>(spec.images) * layer.channels * plane, 0.0f);
        auto cell_ptr = [&](int image, int channel) {
            return values.data() + (static_cast<std::size_t>(image) * layer.channels + channel) * plane;
        };
        std::vector<char> in_pool(spec.images);
        std::vector<int> order(cells);
        for (const auto& motif : concepts) {
            std::fill(in_pool.begin(), in_pool.end(), 0);
            for (int x : motif.pool) in_pool[x] = 1;
            for (int x : motif.pool) {
                std::iota(order.begin(), order.end(), 0);
                for (int i = 0; i < region_cells; ++i) {
                    std::swap(order[i], order[i + lrng.index(static_cast<std::uint64_t>(cells - i))]);
                }
                for (int c : motif.members) {
                    float* out = cell_ptr(x, c);
                    const double amplitude = lrng.uniform(0.5, 1.5);
                    int kept = 0;
                    for (int i = 0; i < region_cells; ++i) {
                        if (keep >= 1.0 || lrng.bernoulli(keep)) {
                            out[order[i]] = static_cast<float>(amplitude * lrng.uniform(0.6, 1.0));
                            ++kept;
                        }
                    }
                    if (kept == 0) out[order[0]] = static_cast<float>(amplitude);
                }
            }
            if (spec.noise > 0.0) {
                for (int c : motif.members) {
                    for (int x = 0; x < spec.images; ++x) {
                        if (in_pool[x]) continue;
                        float* out = cell_ptr(x, c);
                        for (int p = 0; p < cells; ++p) {
                            if (lrng.bernoulli(spec.noise_density)) out[p] = static_cast<float>(spec.noise * lrng.uniform(0.05, 1.0));
                        }
                    }
                }
            }
        }
        write_activations(root, layer, static_cast<std::size_t>(spec.images), values);
    }

    for (std::size_t l = 1; l < spec.layers.size(); ++l) {
        const auto& src = manifest.layers[l - 1];
        const auto& dst = manifest.layers[l];
        Rng krng(derive_seed(spec.seed, "kernel", l));
        Kernel k;
        k.src_layer = src.id;
        k.dst_layer = dst.id;
        k.src_channels = src.channels;
        k.dst_channels = dst.channels;
        k.kh = k.kw = spec.kernel_size;
        k.stride = implied_stride(src.height, dst.height);
        k.weights.resize(static_cast<std::size_t>(dst.channels) * src.channels * k.kh * k.kw);
        for (auto& w : k.weights) w = static_cast<float>(spec.kernel_noise * krng.normal());
        const int center = spec.kernel_size / 2;
        for (int g = 0; g < spec.groups_per_layer; ++g) {
            for (int j : members_by_layer[l][g]) {
                for (int i : members_by_layer[l - 1][g]) {
                    k.at(j, i, center, center) += static_cast<float>(spec.path_weight / spec.group_size);
                }
            }
        }
        write_kernel(root, k);
    }

    write_manifest(root, manifest);
    json planted = json::object();
    for (const auto& [layer, labels] : truth.labels) planted[layer] = labels;
    write_json_file(root / "planted.json", {{"labels", planted}, {"spec", spec}});
    return truth;
}

PlantedTruth read_planted(const std::filesystem::path& root) {
    const auto j = read_json_file(root / "planted.json");
    PlantedTruth truth;
    for (const auto& [layer, labels] : j.at("labels").items()) truth.labels[layer] = labels.get<std::vector<int>>();
    return truth;
}

std::vector<int> partition_labels(const Manifest& manifest, const std::vector<NeuronCluster>& clusters) {
    const NeuronIndex index(manifest);
    std::vector<int> labels(index.size(), -1);
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        for (int m : clusters[c].members) labels[index.index_of({clusters[c].layer, m})] = static_cast<int>(c);
    }
    int next = static_cast<int>(clusters.size());
    for (auto& l : labels) {
        if (l < 0) l = next++;
    }
    return labels;
}

std::vector<int> partition_labels(const Manifest& manifest, const PlantedTruth& truth) {
    const NeuronIndex index(manifest);
    std::vector<int> labels(index.size(), -1);
    std::map<std::pair<std::string, int>, int> ids;
    for (const auto& layer : manifest.layers) {
        const auto& planted = truth.labels.at(layer.id);
        for (int c = 0; c < layer.channels; ++c) {
            if (planted[c] < 0) continue;
            auto [it, fresh] = ids.emplace(std::make_pair(layer.id, planted[c]), static_cast<int>(ids.size()));
            labels[index.index_of({layer.id, c})] = it->second;
        }
    }
    int next = static_cast<int>(ids.size());
    for (auto& l : labels) {
        if (l < 0) l = next++;
    }
    return labels;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw Error("partitions differ in size");
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> table;
    std::map<int, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        table[{a[i], b[i]}] += 1;
        rows[a[i]] += 1;
        cols[b[i]] += 1;
    }
    auto choose2 = [](double x) { return x * (x - 1) / 2; };
    double index = 0, sum_rows = 0, sum_cols = 0;
    for (const auto& [k, v] : table) index += choose2(v);
    for (const auto& [k, v] : rows) sum_rows += choose2(v);
    for (const auto& [k, v] : cols) sum_cols += choose2(v);
    const double expected = sum_rows * sum_cols / choose2(n);
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;  // both partitions trivial and identical in structure
    return (index - expected) / (max_index - expected);
}

double pairwise_f1(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw Error("partitions differ in size");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        for (std::size_t j = i + 1; j < predicted.size(); ++j) {
            const bool p = predicted[i] == predicted[j];
            const bool t = truth[i] == truth[j];
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2 * tp / (2 * tp + fp + fn);
}

std::string to_string(TaskMode mode) {
    switch (mode) {
        case TaskMode::pipeline: return "pipeline";
        case TaskMode::reference: return "reference";
        case TaskMode::random: return "random";
    }
    return "random";
}

TaskMode task_mode_from_string(const std::string& s) {
    if (s == "pipeline") return TaskMode::pipeline;
    if (s == "reference") return TaskMode::reference;
    if (s == "random") return TaskMode::random;
    throw Error("unknown task mode '" + s + "'");
}

std::array<int, 3> allocate_task_counts(const TaskProportions& p, int count) {
    const std::array<double, 3> shares{p.pipeline, p.reference, p.random};
    const double total = shares[0] + shares[1] + shares[2];
    if (count < 0 || total <= 0 || shares[0] < 0 || shares[1] < 0 || shares[2] < 0) {
        throw Error("task proportions must be non-negative with a positive sum");
    }
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int m = 0; m < 3; ++m) {
        const double exact = count * shares[m] / total;
        counts[m] = static_cast<int>(std::floor(exact));
        remainder[m] = exact - counts[m];
        assigned += counts[m];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < count; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

namespace {

std::vector<Patch> patches_for(const std::map<std::string, std::vector<Patch>>& patches, const NeuronRef& n) {
    auto it = patches.find(n.key());
    return it == patches.end() ? std::vector<Patch>{} : it->second;
}

}  // namespace

std::vector<IntruderTask> generate_tasks(const Manifest& manifest, const std::vector<NeuronCluster>& pipeline_clusters,
                                         const std::vector<NeuronCluster>& reference_clusters,
                                         const TaskProportions& proportions, int count, std::uint64_t seed) {
    const auto counts = allocate_task_counts(proportions, count);
    const NeuronIndex index(manifest);
    if (index.size() < 6) throw Error("intruder tasks need at least 6 neurons");

    std::map<std::string, std::vector<Patch>> patches;
    for (const auto* list : {&pipeline_clusters, &reference_clusters}) {
        for (const auto& c : *list) {
            for (const auto& [channel, ps] : c.patches) patches.emplace(NeuronRef{c.layer, channel}.key(), ps);
        }
    }

    auto eligible = [](const std::vector<NeuronCluster>& clusters) {
        std::vector<const NeuronCluster*> out;
        for (const auto& c : clusters) {
            if (c.members.size() >= 5) out.push_back(&c);
        }
        return out;
    };
    const auto pipeline_ok = eligible(pipeline_clusters);
    const auto reference_ok = eligible(reference_clusters);
    if (counts[0] > 0 && pipeline_ok.empty()) throw Error("no eligible pipeline clusters (need >= 5 members)");
    if (counts[1] > 0 && reference_ok.empty()) throw Error("no eligible reference clusters (need >= 5 members)");

    Rng rng(derive_seed(seed, "tasks"));
    std::vector<IntruderTask> tasks;
    auto cluster_task = [&](TaskMode mode, const std::vector<const NeuronCluster*>& pool) {
        const auto& cluster = *pool[rng.index(pool.size())];
        IntruderTask task;
        task.mode = mode;
        task.cluster_id = cluster.cluster_id;
        for (int c : rng.sample(cluster.members, 5)) {
            const NeuronRef n{cluster.layer, c};
            task.slots.push_back({n, patches_for(patches, n), true});
        }
        std::size_t intruder;
        NeuronRef n;
        do {
            intruder = rng.index(index.size());
            n = index.ref(intruder);
        } while (n.layer == cluster.layer &&
                 std::binary_search(cluster.members.begin(), cluster.members.end(), n.channel));
        task.slots.push_back({n, patches_for(patches, n), false});
        rng.shuffle(task.slots);
        for (std::size_t s = 0; s < task.slots.size(); ++s) {
            if (!task.slots[s].in_cluster) task.intruder_slot = static_cast<int>(s);
        }
        return task;
    };
    for (int i = 0; i < counts[0]; ++i) tasks.push_back(cluster_task(TaskMode::pipeline, pipeline_ok));
    for (int i = 0; i < counts[1]; ++i) tasks.push_back(cluster_task(TaskMode::reference, reference_ok));
    for (int i = 0; i < counts[2]; ++i) {
        IntruderTask task;
        task.mode = TaskMode::random;
        std::vector<std::size_t> all(index.size());
        std::iota(all.begin(), all.end(), 0);
        for (auto id : rng.sample(all, 6)) {
            const auto n = index.ref(id);
            task.slots.push_back({n, patches_for(patches, n), false});
        }
        tasks.push_back(std::move(task));
    }
    rng.shuffle(tasks);
    for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].task_id = static_cast<int>(i);
    return tasks;
}

std::pair<std::vector<RocPoint>, std::optional<double>> roc_curve(const std::vector<double>& scores,
                                                                  const std::vector<bool>& positive) {
    const double pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
    const double neg = static_cast<double>(positive.size()) - pos;
    if (pos == 0 || neg == 0) return {{}, std::nullopt};
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<RocPoint> points{{0.0, 0.0}};
    double tp = 0, fp = 0, auc = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == threshold; ++i) (positive[order[i]] ? tp : fp) += 1;
        const RocPoint next{fp / neg, tp / pos};
        auc += (next.fpr - points.back().fpr) * (next.tpr + points.back().tpr) / 2;
        points.push_back(next);
    }
    return {points, auc};
}

Metrics score(const std::vector<IntruderTask>& tasks, const std::vector<Judgment>& judgments,
              std::optional<TaskMode> only) {
    std::map<int, const IntruderTask*> by_id;
    for (const auto& t : tasks) by_id[t.task_id] = &t;
    std::map<int, std::vector<const Judgment*>> per_task;
    for (const auto& j : judgments) {
        auto it = by_id.find(j.task_id);
        if (it == by_id.end()) throw Error("judgment references unknown task " + std::to_string(j.task_id));
        std::set<int> distinct;
        for (int s : j.selected) {
            if (s < 0 || s >= static_cast<int>(it->second->slots.size())) {
                throw Error("judgment selects invalid slot " + std::to_string(s) + " of task " +
                            std::to_string(j.task_id));
            }
            if (!distinct.insert(s).second) {
                throw Error("judgment selects slot " + std::to_string(s) + " twice");
            }
        }
        per_task[j.task_id].push_back(&j);
    }

    Metrics m;
    std::size_t intruder_picks = 0;
    std::vector<double> scores;
    std::vector<bool> positive;
    for (const auto& task : tasks) {
        if (task.mode == TaskMode::random) continue;
        if (only && task.mode != *only) continue;
        const auto& list = per_task[task.task_id];
        std::vector<int> slot_votes(task.slots.size(), 0);
        int qualifying = 0;
        for (const auto* j : list) {
            ++m.cluster_judgments;
            if (std::find(j->selected.begin(), j->selected.end(), task.intruder_slot) != j->selected.end()) {
                ++intruder_picks;
            }
            if (static_cast<int>(j->selected.size()) < kClusterPresentSelections) continue;
            ++qualifying;
            for (int s : j->selected) ++slot_votes[s];
        }
        m.qualifying_judgments += static_cast<std::size_t>(qualifying);
        if (qualifying == 0) continue;
        for (std::size_t s = 0; s < task.slots.size(); ++s) {
            scores.push_back(static_cast<double>(slot_votes[s]) / qualifying);
            positive.push_back(task.slots[s].in_cluster);
        }
    }
    if (m.cluster_judgments > 0) m.fpr = static_cast<double>(intruder_picks) / static_cast<double>(m.cluster_judgments);
    std::tie(m.roc_points, m.auc) = roc_curve(scores, positive);
    return m;
}

json tasks_to_json(const std::vector<IntruderTask>& tasks) {
    json arr = json::array();
    for (const auto& t : tasks) {
        json slots = json::array();
        for (const auto& s : t.slots) {
            slots.push_back({{"neuron", s.neuron.key()}, {"patches", s.patches}, {"in_cluster", s.in_cluster}});
        }
        arr.push_back({{"task_id", t.task_id},
                       {"mode", to_string(t.mode)},
                       {"cluster_id", t.cluster_id.empty() ? json(nullptr) : json(t.cluster_id)},
                       {"intruder_slot", t.intruder_slot < 0 ? json(nullptr) : json(t.intruder_slot)},
                       {"slots", slots}});
    }
    return arr;
}

std::vector<IntruderTask> tasks_from_json(const json& j) {
    std::vector<IntruderTask> out;
    for (const auto& e : j) {
        IntruderTask t;
        e.at("task_id").get_to(t.task_id);
        t.mode = task_mode_from_string(e.at("mode").get<std::string>());
        if (!e.at("cluster_id").is_null()) e.at("cluster_id").get_to(t.cluster_id);
        t.intruder_slot = e.at("intruder_slot").is_null() ? -1 : e.at("intruder_slot").get<int>();
        for (const auto& s : e.at("slots")) {
            t.slots.push_back({NeuronRef::parse(s.at("neuron").get<std::string>()), s.at("patches").get<std::vector<Patch>>(),
                               s.at("in_cluster").get<bool>()});
        }
        out.push_back(std::move(t));
    }
    return out;
}

json judgments_to_json(const std::vector<Judgment>& judgments) {
    json arr = json::array();
    for (const auto& j : judgments) {
        json e{{"task_id", j.task_id}, {"respondent", j.respondent}, {"selected", j.selected}};
        e["label"] = j.label ? json(*j.label) : json(nullptr);
        arr.push_back(std::move(e));
    }
    return arr;
}

std::vector<Judgment> judgments_from_json(const json& j) {
    std::vector<Judgment> out;
    for (const auto& e : j) {
        Judgment jd;
        e.at("task_id").get_to(jd.task_id);
        e.at("respondent").get_to(jd.respondent);
        e.at("selected").get_to(jd.selected);
        if (auto it = e.find("label"); it != e.end() && !it->is_null()) jd.label = it->get<std::string>();
        out.push_back(std::move(jd));
    }
    return out;
}

json metrics_to_json(const Metrics& m) {
    json points = json::array();
    for (const auto& p : m.roc_points) points.push_back({p.fpr, p.tpr});
    return {{"fpr", m.fpr ? json(*m.fpr) : json(nullptr)},
            {"roc_points", points},
            {"auc", m.auc ? json(*m.auc) : json(nullptr)},
            {"cluster_judgments", m.cluster_judgments},
            {"qualifying_judgments", m.qualifying_judgments}};
}

}  // namespace cmap
