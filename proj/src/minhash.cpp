#include "cmap/minhash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cmap/rng.hpp"
#include "cmap/types.hpp"
#include "cmap/union_find.hpp"

namespace cmap {

HashFamily::HashFamily(std::uint64_t seed, std::size_t n) : seed_(seed) {
    if (n == 0) throw Error("hash family needs at least one function");
    a_.reserve(n);
    b_.reserve(n);
    std::uint64_t state = seed;
    for (std::size_t i = 0; i < n; ++i) {
        // odd, nonzero and below p
        std::uint64_t a = (splitmix64(state) % (kMinHashPrime - 2)) | 1ULL;
        a_.push_back(a);
        b_.push_back(splitmix64(state) % kMinHashPrime);
    }
}

MinHashSignature signature(std::span<const std::uint64_t> set, const HashFamily& family) {
    if (set.empty()) throw Error("undefined min-hash: empty set");
    MinHashSignature values(family.size(), std::numeric_limits<std::uint64_t>::max());
    std::vector<std::uint64_t> keys;
    keys.reserve(set.size());
    for (std::uint64_t x : set) {
        if (x >= kMinHashPrime) throw Error("min-hash element exceeds hash universe");
        keys.push_back(HashFamily::scramble(x));
    }
    for (std::size_t i = 0; i < family.size(); ++i) {
        const std::uint64_t a = family.multiplier(i);
        const std::uint64_t b = family.offset(i);
        std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
        for (std::uint64_t x : keys) best = std::min(best, HashFamily::apply(a, b, x));
        values[i] = best;
    }
    return values;
}

double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.size() != b.size() || a.empty()) throw Error("signature length mismatch");
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

std::size_t BandKeyHash::operator()(const std::vector<std::uint64_t>& key) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (std::uint64_t v : key) {
        h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
}

BucketIndex band_group(const std::map<std::size_t, MinHashSignature>& signatures, const BandingParams& params) {
    if (params.bands == 0 || params.rows == 0) throw Error("banding needs b >= 1 and r >= 1");
    BucketIndex index;
    index.bands.resize(params.bands);
    for (const auto& [item, sig] : signatures) {
        if (sig.size() != params.hashes()) {
            throw Error("signature length " + std::to_string(sig.size()) + " does not equal b*r = " +
                        std::to_string(params.hashes()));
        }
        index.items.push_back(item);
        for (std::size_t band = 0; band < params.bands; ++band) {
            const auto first = sig.begin() + static_cast<std::ptrdiff_t>(band * params.rows);
            std::vector<std::uint64_t> key(first, first + static_cast<std::ptrdiff_t>(params.rows));
            index.bands[band][std::move(key)].push_back(item);
        }
    }
    return index;
}

std::vector<std::vector<std::size_t>> components(const BucketIndex& index) {
    std::vector<std::size_t> items = index.items;
    for (const auto& band : index.bands) {
        for (const auto& [key, members] : band) items.insert(items.end(), members.begin(), members.end());
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());

    auto local = [&](std::size_t item) {
        return static_cast<std::size_t>(std::lower_bound(items.begin(), items.end(), item) - items.begin());
    };
    UnionFind uf(items.size());
    for_each_bucket_edge(index, [&](std::size_t a, std::size_t b) { uf.unite(local(a), local(b)); });

    auto groups = uf.groups();
    for (auto& g : groups) {
        for (auto& m : g) m = items[m];
    }
    return groups;
}

double cobucket_probability(double similarity, const BandingParams& params) {
    return 1.0 - std::pow(1.0 - std::pow(similarity, static_cast<double>(params.rows)),
                          static_cast<double>(params.bands));
}

}  // namespace cmap
