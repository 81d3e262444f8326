#pragma once

// Independent brute-force reference implementations used only by tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <set>
#include <utility>
#include <vector>

#include "cmap/activation_store.hpp"
#include "cmap/kernels.hpp"
#include "cmap/rng.hpp"

namespace oracle {

inline double jaccard(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    std::set<std::uint64_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (auto v : sa) inter += sb.count(v);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Two random sets over a large universe whose exact Jaccard similarity is
/// round(s * union) / union.
inline std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> planted_pair(double s, std::size_t union_size,
                                                                                      std::uint64_t seed) {
    cmap::Rng rng(seed);
    std::set<std::uint64_t> pool;
    while (pool.size() < union_size) pool.insert(rng.index(1ULL << 40));
    std::vector<std::uint64_t> items(pool.begin(), pool.end());
    rng.shuffle(items);
    const auto shared = static_cast<std::size_t>(std::llround(s * static_cast<double>(union_size)));
    const std::size_t only_a = (union_size - shared) / 2;
    std::vector<std::uint64_t> a(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(shared + only_a));
    std::vector<std::uint64_t> b(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(shared));
    b.insert(b.end(), items.begin() + static_cast<std::ptrdiff_t>(shared + only_a), items.end());
    return {a, b};
}

inline std::vector<std::vector<std::size_t>> bfs_components(const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<bool> seen(adj.size(), false);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < adj.size(); ++s) {
        if (seen[s]) continue;
        std::vector<std::size_t> comp;
        std::queue<std::size_t> q;
        q.push(s);
        seen[s] = true;
        while (!q.empty()) {
            auto u = q.front();
            q.pop();
            comp.push_back(u);
            for (auto v : adj[u]) {
                if (!seen[v]) {
                    seen[v] = true;
                    q.push(v);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.push_back(comp);
    }
    return out;
}

/// Same-padded strided cross-correlation on an explicitly zero-padded copy.
inline std::vector<double> conv_same(const std::vector<double>& in, int h, int w, const std::vector<double>& k, int kh,
                                     int kw, int stride) {
    const int oh = (h + stride - 1) / stride, ow = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (oh - 1) * stride + kh - h), pad_w = std::max(0, (ow - 1) * stride + kw - w);
    const int top = pad_h / 2, left = pad_w / 2;
    const int ph = h + pad_h, pw = w + pad_w;
    std::vector<double> padded(static_cast<std::size_t>(ph * pw), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) padded[static_cast<std::size_t>((y + top) * pw + x + left)] = in[static_cast<std::size_t>(y * w + x)];
    std::vector<double> out(static_cast<std::size_t>(oh * ow), 0.0);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0;
            for (int u = 0; u < kh; ++u)
                for (int v = 0; v < kw; ++v)
                    acc += padded[static_cast<std::size_t>((r * stride + u) * pw + c * stride + v)] *
                           k[static_cast<std::size_t>(u * kw + v)];
            out[static_cast<std::size_t>(r * ow + c)] = acc;
        }
    return out;
}

inline std::vector<double> kernel_slice(const cmap::Kernel& k, int dst, int src) {
    std::vector<double> out;
    for (int u = 0; u < k.kh; ++u)
        for (int v = 0; v < k.kw; ++v)
            out.push_back(k.weights[static_cast<std::size_t>(((dst * k.src_channels + src) * k.kh + u) * k.kw + v)]);
    return out;
}

inline std::vector<double> plane(const cmap::Dataset& d, const std::string& layer, int channel, int image) {
    const auto view = d.map_view({layer, channel}, image);
    return {view.begin(), view.end()};
}

/// Indices sorted by value descending then index ascending (full sort).
inline std::vector<int> ranked(const std::vector<double>& values) {
    std::vector<int> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)] ||
               (values[static_cast<std::size_t>(a)] == values[static_cast<std::size_t>(b)] && a < b);
    });
    return idx;
}

/// Importance recount: map from "layer:channel" to votes.
inline std::map<std::string, int> importance(const cmap::Dataset& d, const std::string& label, int top) {
    std::map<std::string, int> out;
    for (const auto& img : d.manifest().images) {
        if (img.class_label != label) continue;
        for (const auto& layer : d.manifest().layers) {
            std::vector<double> maxima;
            for (int c = 0; c < layer.channels; ++c) {
                const auto p = plane(d, layer.id, c, img.image_id);
                maxima.push_back(*std::max_element(p.begin(), p.end()));
            }
            const auto order = ranked(maxima);
            for (int r = 0; r < std::min<int>(top, layer.channels); ++r)
                ++out[layer.id + ":" + std::to_string(order[static_cast<std::size_t>(r)])];
        }
    }
    return out;
}

/// Major-path recount with dense convolutions: "src>dst" -> votes.
inline std::map<std::string, int> influence(const cmap::Dataset& d, const cmap::KernelBank& bank,
                                            const std::string& label) {
    std::map<std::string, int> out;
    for (const auto& img : d.manifest().images) {
        if (img.class_label != label) continue;
        for (const auto& conn : d.manifest().connections) {
            const auto& k = bank.get(conn.src_layer, conn.dst_layer);
            const auto& src = d.manifest().layer(conn.src_layer);
            for (int j = 0; j < k.dst_channels; ++j) {
                std::vector<double> m;
                for (int i = 0; i < k.src_channels; ++i) {
                    const auto o = conv_same(plane(d, src.id, i, img.image_id), src.height, src.width,
                                             kernel_slice(k, j, i), k.kh, k.kw, k.stride);
                    m.push_back(*std::max_element(o.begin(), o.end()));
                }
                const int best = ranked(m)[0];
                if (m[static_cast<std::size_t>(best)] > 0)
                    ++out[src.id + ":" + std::to_string(best) + ">" + conn.dst_layer + ":" + std::to_string(j)];
            }
        }
    }
    return out;
}

/// Dense forward propagation along a chain of layers. Returns, per layer after
/// the seed, the triggered channels in rank order.
inline std::vector<std::vector<int>> cascade(const cmap::Manifest& m, const cmap::KernelBank& bank,
                                             std::size_t seed_layer, const std::vector<int>& seed_members, int top) {
    std::map<int, std::vector<double>> active;
    for (int c : seed_members)
        active[c] = std::vector<double>(static_cast<std::size_t>(m.layers[seed_layer].cells()), 1.0);
    std::vector<std::vector<int>> out;
    for (std::size_t l = seed_layer + 1; l < m.layers.size(); ++l) {
        const auto& src = m.layers[l - 1];
        const auto& dst = m.layers[l];
        const auto& k = bank.get(src.id, dst.id);
        std::vector<std::vector<double>> maps(static_cast<std::size_t>(dst.channels),
                                              std::vector<double>(static_cast<std::size_t>(dst.cells()), 0.0));
        for (const auto& [i, p] : active)
            for (int j = 0; j < dst.channels; ++j) {
                const auto o = conv_same(p, src.height, src.width, kernel_slice(k, j, i), k.kh, k.kw, k.stride);
                for (std::size_t q = 0; q < o.size(); ++q) maps[static_cast<std::size_t>(j)][q] += o[q];
            }
        double peak = 0;
        for (auto& mp : maps)
            for (auto& v : mp) {
                v = std::max(v, 0.0);
                peak = std::max(peak, v);
            }
        std::vector<double> score;
        for (auto& mp : maps) {
            if (peak > 0)
                for (auto& v : mp) v /= peak;
            score.push_back(*std::max_element(mp.begin(), mp.end()));
        }
        std::vector<int> fired;
        for (int c : ranked(score))
            if (static_cast<int>(fired.size()) < top && score[static_cast<std::size_t>(c)] > 0) fired.push_back(c);
        std::map<int, std::vector<double>> next;
        for (int c : fired) next[c] = maps[static_cast<std::size_t>(c)];
        active = std::move(next);
        out.push_back(fired);
    }
    return out;
}

/// Exact threshold-graph components over single layer "a": presim >= p and
/// actsim >= q on a shared top image.
inline std::vector<int> threshold_components(const cmap::Dataset& d, const cmap::TopKIndex& topk,
                                             const std::string& layer, double p, double q) {
    const int n = d.manifest().layer(layer).channels;
    std::vector<std::vector<std::size_t>> adj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const auto& ti = topk.at({layer, i});
            const auto& tj = topk.at({layer, j});
            std::vector<std::uint64_t> a(ti.image_ids.begin(), ti.image_ids.end());
            std::vector<std::uint64_t> b(tj.image_ids.begin(), tj.image_ids.end());
            if (jaccard(a, b) < p) continue;
            double best = 0;
            for (int x : ti.image_ids) {
                const auto qi = cmap::quantize(d.map({layer, i}, x));
                const auto qj = cmap::quantize(d.map({layer, j}, x));
                std::size_t inter = 0, uni = 0;
                for (std::size_t c = 0; c < qi.mask.size(); ++c) {
                    inter += qi.mask[c] && qj.mask[c];
                    uni += qi.mask[c] || qj.mask[c];
                }
                if (uni) best = std::max(best, static_cast<double>(inter) / uni);
            }
            if (best >= q) {
                adj[i].push_back(j);
                adj[j].push_back(i);
            }
        }
    }
    std::vector<int> labels(static_cast<std::size_t>(n));
    const auto comps = bfs_components(adj);
    for (std::size_t g = 0; g < comps.size(); ++g)
        for (auto v : comps[g]) labels[v] = static_cast<int>(g);
    return labels;
}

}  // namespace oracle
