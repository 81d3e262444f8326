#include "cmap/embedding.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "cmap/rng.hpp"

namespace cmap {

void EmbeddingConfig::validate() const {
    if (d < 2) throw Error("embedding dimension must be >= 2");
    if (negatives < 0) throw Error("negative sample count must be >= 0");
    if (epochs < 1) throw Error("epochs must be >= 1");
    if (!(gamma > 0.0)) throw Error("learning rate must be positive");
}

void to_json(json& j, const EmbeddingConfig& c) {
    j = json{{"d", c.d},
             {"negatives", c.negatives},
             {"epochs", c.epochs},
             {"gamma", c.gamma},
             {"freeze_negatives", c.freeze_negatives},
             {"parallel", c.parallel},
             {"seed", c.seed}};
}

PairDataset sample_pairs(const NeuronIndex& index, const TopKIndex& topk, std::size_t num_images, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> per_image(num_images);
    for (std::size_t n = 0; n < index.size(); ++n) {
        for (int image : topk.at(index.ref(n)).image_ids) per_image.at(static_cast<std::size_t>(image)).push_back(n);
    }
    Rng rng(derive_seed(seed, "pairs"));
    PairDataset out;
    for (std::size_t x = 0; x < num_images; ++x) {
        auto& list = per_image[x];
        rng.shuffle(list);
        for (std::size_t p = 1; p < list.size(); ++p) out.pairs.push_back({list[p - 1], list[p], static_cast<int>(x)});
    }
    return out;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double neg_log_sigmoid(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(-x, 0.0); }

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

double pair_loss(const EmbeddingTable& table, const PairSample& s) {
    const auto vi = table.row(s.i), vj = table.row(s.j);
    double total = neg_log_sigmoid(dot(vi, vj));
    for (auto m : s.neg_i) total += neg_log_sigmoid(-dot(vi, table.row(m)));
    for (auto m : s.neg_j) total += neg_log_sigmoid(-dot(vj, table.row(m)));
    return total;
}

double loss(const EmbeddingTable& table, std::span<const PairSample> batch) {
    double total = 0;
    for (const auto& s : batch) total += pair_loss(table, s);
    return total;
}

PairGradient pair_gradient(const EmbeddingTable& table, const PairSample& s) {
    const std::size_t d = table.dim();
    const auto vi = table.row(s.i), vj = table.row(s.j);
    PairGradient g;
    g.gi.assign(d, 0.0);
    g.gj.assign(d, 0.0);
    const double pull = 1.0 - sigmoid(dot(vi, vj));
    for (std::size_t k = 0; k < d; ++k) {
        g.gi[k] = -pull * vj[k];
        g.gj[k] = -pull * vi[k];
    }
    auto push = [&](std::span<const double> anchor, std::vector<double>& g_anchor, const std::vector<std::size_t>& negs,
                    std::vector<std::vector<double>>& g_negs) {
        for (auto m : negs) {
            const auto vm = table.row(m);
            const double sm = sigmoid(dot(anchor, vm));
            std::vector<double> gm(d);
            for (std::size_t k = 0; k < d; ++k) {
                g_anchor[k] += sm * vm[k];
                gm[k] = sm * anchor[k];
            }
            g_negs.push_back(std::move(gm));
        }
    };
    push(vi, g.gi, s.neg_i, g.g_neg_i);
    push(vj, g.gj, s.neg_j, g.g_neg_j);
    return g;
}

namespace {

constexpr int kNegativeRedraws = 8;

void draw_negatives(Rng& rng, const NeuronIndex& index, std::size_t anchor, std::size_t i, std::size_t j, int count,
                    std::vector<std::size_t>& out) {
    out.clear();
    const auto layer = index.layer_of(anchor);
    const auto offset = index.layer_offset(layer);
    const auto size = index.layer_size(layer);
    for (int m = 0; m < count; ++m) {
        for (int attempt = 0; attempt <= kNegativeRedraws; ++attempt) {
            const std::size_t candidate = offset + rng.index(size);
            if (candidate != i && candidate != j) {
                out.push_back(candidate);
                break;
            }
        }
    }
}

void check_finite(std::span<const double> v, std::size_t neuron, int epoch) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw Error("embedding diverged: non-finite vector for neuron " + std::to_string(neuron) + " in epoch " +
                        std::to_string(epoch) + "; lower gamma");
        }
    }
}

void apply_update(EmbeddingTable& table, const PairSample& s, const PairGradient& g, double gamma, bool freeze,
                  int epoch) {
    auto step = [&](std::size_t n, const std::vector<double>& grad) {
        auto v = table.row(n);
        for (std::size_t k = 0; k < v.size(); ++k) v[k] -= gamma * grad[k];
        check_finite(v, n, epoch);
    };
    step(s.i, g.gi);
    step(s.j, g.gj);
    if (freeze) return;
    for (std::size_t m = 0; m < s.neg_i.size(); ++m) step(s.neg_i[m], g.g_neg_i[m]);
    for (std::size_t m = 0; m < s.neg_j.size(); ++m) step(s.neg_j[m], g.g_neg_j[m]);
}

EmbeddingTable initial_table(std::size_t n, const EmbeddingConfig& config) {
    EmbeddingTable table(n, static_cast<std::size_t>(config.d));
    Rng rng(derive_seed(config.seed, "init"));
    const double half = 0.5 / config.d;
    for (auto& v : table.values()) v = rng.uniform(-half, half);
    return table;
}

/// Lock-free sharded training. Rows are read and written through relaxed
/// atomic_ref accesses, so concurrent updates may be lost but never tear.
void train_parallel(const NeuronIndex& index, const PairDataset& data, const EmbeddingConfig& config,
                    TrainResult& result) {
    auto& table = result.table;
    const std::size_t d = table.dim();
    const unsigned workers = std::max(1u, config.threads);
    std::vector<std::size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler(derive_seed(config.seed, "order"));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffler.shuffle(order);
        std::atomic<double> epoch_loss{0.0};
        std::mutex failure_mutex;
        std::string failure;
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    Rng rng(derive_seed(config.seed, "worker", epoch * 1000003ULL + w));
                    EmbeddingTable local(0, d);
                    double sum = 0;
                    PairSample s, ls;
                    std::vector<std::size_t> rows;
                    for (std::size_t p = w; p < order.size(); p += workers) {
                        const auto& pair = data.pairs[order[p]];
                        s.i = pair.i;
                        s.j = pair.j;
                        draw_negatives(rng, index, s.i, s.i, s.j, config.negatives, s.neg_i);
                        draw_negatives(rng, index, s.j, s.i, s.j, config.negatives, s.neg_j);
                        rows.assign({s.i, s.j});
                        rows.insert(rows.end(), s.neg_i.begin(), s.neg_i.end());
                        rows.insert(rows.end(), s.neg_j.begin(), s.neg_j.end());
                        local = EmbeddingTable(rows.size(), d);
                        for (std::size_t r = 0; r < rows.size(); ++r) {
                            auto dst = local.row(r);
                            for (std::size_t k = 0; k < d; ++k) {
                                dst[k] = std::atomic_ref<double>(table.row(rows[r])[k]).load(std::memory_order_relaxed);
                            }
                        }
                        ls.i = 0;
                        ls.j = 1;
                        ls.neg_i.resize(s.neg_i.size());
                        ls.neg_j.resize(s.neg_j.size());
                        std::iota(ls.neg_i.begin(), ls.neg_i.end(), 2);
                        std::iota(ls.neg_j.begin(), ls.neg_j.end(), 2 + s.neg_i.size());
                        sum += pair_loss(local, ls);
                        const auto g = pair_gradient(local, ls);
                        try {
                            apply_update(local, ls, g, config.gamma, config.freeze_negatives, epoch);
                        } catch (const Error& e) {
                            std::lock_guard lock(failure_mutex);
                            failure = e.what();
                            return;
                        }
                        const std::size_t touched = config.freeze_negatives ? 2 : rows.size();
                        for (std::size_t r = 0; r < touched; ++r) {
                            auto src = local.row(r);
                            for (std::size_t k = 0; k < d; ++k) {
                                std::atomic_ref<double>(table.row(rows[r])[k]).store(src[k], std::memory_order_relaxed);
                            }
                        }
                    }
                    double expected = epoch_loss.load();
                    while (!epoch_loss.compare_exchange_weak(expected, expected + sum)) {
                    }
                });
            }
        }
        if (!failure.empty()) throw Error(failure);
        result.epoch_loss.push_back(epoch_loss.load() / static_cast<double>(data.pairs.size()));
    }
}

}  // namespace

TrainResult train(const NeuronIndex& index, const PairDataset& data, const EmbeddingConfig& config) {
    config.validate();
    if (data.pairs.empty()) throw Error("cannot train an embedding without pairs");
    TrainResult result;
    result.table = initial_table(index.size(), config);

    if (config.parallel && config.threads > 1) {
        result.deterministic = false;
        train_parallel(index, data, config, result);
        return result;
    }

    Rng rng(derive_seed(config.seed, "train"));
    std::vector<std::size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    PairSample s;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0;
        for (auto p : order) {
            s.i = data.pairs[p].i;
            s.j = data.pairs[p].j;
            draw_negatives(rng, index, s.i, s.i, s.j, config.negatives, s.neg_i);
            draw_negatives(rng, index, s.j, s.i, s.j, config.negatives, s.neg_j);
            total += pair_loss(result.table, s);
            apply_update(result.table, s, pair_gradient(result.table, s), config.gamma, config.freeze_negatives, epoch);
        }
        result.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    return result;
}

Layout2D project_pca(const EmbeddingTable& table) {
    const auto n = static_cast<Eigen::Index>(table.size());
    const auto d = static_cast<Eigen::Index>(table.dim());
    if (d < 2) throw Error("PCA needs at least 2 dimensions");
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) x(r, c) = table.row(static_cast<std::size_t>(r))[static_cast<std::size_t>(c)];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / std::max<Eigen::Index>(1, n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::MatrixXd axes(d, 2);
    axes.col(0) = solver.eigenvectors().col(d - 1);
    axes.col(1) = solver.eigenvectors().col(d - 2);
    for (int a = 0; a < 2; ++a) {
        Eigen::Index arg = 0;
        for (Eigen::Index k = 1; k < d; ++k) {
            if (std::abs(axes(k, a)) > std::abs(axes(arg, a))) arg = k;
        }
        if (axes(arg, a) < 0) axes.col(a) *= -1.0;
    }
    const Eigen::MatrixXd projected = x * axes;
    Layout2D out(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) out[static_cast<std::size_t>(r)] = {projected(r, 0), projected(r, 1)};
    return out;
}

Layout2D load_external_layout(const std::filesystem::path& path, const NeuronIndex& index) {
    if (!std::filesystem::exists(path)) throw Error("external layout file not found: " + path.string());
    const auto j = read_json_file(path);
    Layout2D out(index.size());
    std::string missing;
    std::size_t missing_count = 0;
    for (std::size_t n = 0; n < index.size(); ++n) {
        const auto key = index.ref(n).key();
        auto it = j.find(key);
        if (it == j.end()) {
            if (missing_count++ < 20) missing += (missing.empty() ? "" : ", ") + key;
            continue;
        }
        const double x = it->at(0).get<double>(), y = it->at(1).get<double>();
        if (!std::isfinite(x) || !std::isfinite(y)) throw Error("external layout has non-finite position for " + key);
        out[n] = {x, y};
    }
    if (missing_count > 0) {
        throw Error("external layout is missing " + std::to_string(missing_count) + " neurons: " + missing +
                    (missing_count > 20 ? ", ..." : ""));
    }
    return out;
}

namespace {

template <typename Score>
std::vector<std::size_t> top_by(std::size_t n, std::size_t self, std::size_t k, Score score) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(n);
    for (std::size_t m = 0; m < n; ++m) {
        if (m != self) scored.emplace_back(score(m), m);
    }
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < k; ++r) out.push_back(scored[r].second);
    return out;
}

}  // namespace

std::vector<std::size_t> neighbors(const EmbeddingTable& table, std::size_t neuron, std::size_t k) {
    if (neuron >= table.size()) throw Error("neuron index out of range");
    const auto v = table.row(neuron);
    return top_by(table.size(), neuron, k, [&](std::size_t m) { return cosine(v, table.row(m)); });
}

double neighbor_overlap(const EmbeddingTable& table, const Layout2D& layout, std::size_t k) {
    if (layout.size() != table.size()) throw Error("layout does not cover the embedding table");
    const std::size_t n = table.size();
    if (n < 2) return 1.0;
    k = std::min(k, n - 1);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto high = neighbors(table, i, k);
        auto low = top_by(n, i, k, [&](std::size_t m) {
            const double dx = layout[i][0] - layout[m][0], dy = layout[i][1] - layout[m][1];
            return -(dx * dx + dy * dy);
        });
        std::sort(high.begin(), high.end());
        std::sort(low.begin(), low.end());
        std::vector<std::size_t> both;
        std::set_intersection(high.begin(), high.end(), low.begin(), low.end(), std::back_inserter(both));
        total += static_cast<double>(both.size()) / static_cast<double>(k);
    }
    return total / static_cast<double>(n);
}

json embedding_to_json(const EmbeddingArtifact& a, const NeuronIndex& index) {
    json vectors = json::object(), layout = json::object();
    for (std::size_t n = 0; n < index.size(); ++n) {
        const auto key = index.ref(n).key();
        const auto row = a.table.row(n);
        vectors[key] = std::vector<double>(row.begin(), row.end());
        if (n < a.layout.size()) layout[key] = {a.layout[n][0], a.layout[n][1]};
    }
    return {{"config", a.config},
            {"dataset_digest", a.dataset_digest},
            {"deterministic", a.deterministic},
            {"projection", a.projection_method},
            {"vectors", std::move(vectors)},
            {"layout2d", std::move(layout)},
            {"neighbor_overlap_metric", a.neighbor_overlap_metric}};
}

EmbeddingArtifact embedding_from_json(const json& j, const NeuronIndex& index) {
    EmbeddingArtifact a;
    const auto& c = j.at("config");
    c.at("d").get_to(a.config.d);
    c.at("negatives").get_to(a.config.negatives);
    c.at("epochs").get_to(a.config.epochs);
    c.at("gamma").get_to(a.config.gamma);
    c.at("freeze_negatives").get_to(a.config.freeze_negatives);
    c.at("parallel").get_to(a.config.parallel);
    c.at("seed").get_to(a.config.seed);
    a.dataset_digest = j.value("dataset_digest", "");
    a.deterministic = j.value("deterministic", true);
    a.projection_method = j.value("projection", "pca");
    a.neighbor_overlap_metric = j.at("neighbor_overlap_metric").get<double>();

    const auto& vectors = j.at("vectors");
    const auto& layout = j.at("layout2d");
    for (const auto& [key, value] : vectors.items()) {
        index.index_of(NeuronRef::parse(key));  // rejects unknown neurons
    }
    for (const auto& [key, value] : layout.items()) index.index_of(NeuronRef::parse(key));
    a.table = EmbeddingTable(index.size(), static_cast<std::size_t>(a.config.d));
    a.layout.assign(index.size(), {0.0, 0.0});
    for (std::size_t n = 0; n < index.size(); ++n) {
        const auto key = index.ref(n).key();
        auto v = vectors.find(key);
        if (v == vectors.end()) throw Error("embedding has no vector for " + key);
        const auto values = v->get<std::vector<double>>();
        if (values.size() != static_cast<std::size_t>(a.config.d)) throw Error("embedding vector size mismatch for " + key);
        std::copy(values.begin(), values.end(), a.table.row(n).begin());
        auto p = layout.find(key);
        if (p == layout.end()) throw Error("layout has no position for " + key);
        a.layout[n] = {p->at(0).get<double>(), p->at(1).get<double>()};
    }
    return a;
}

}  // namespace cmap
