#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <vector>

namespace cmap {

/// Mersenne prime 2^61 - 1; every hashed element must be smaller.
inline constexpr std::uint64_t kMinHashPrime = (1ULL << 61) - 1;

/// n universal hash functions h_i(x) = (a_i * scramble(x) + b_i) mod p, derived
/// from a seed.
class HashFamily {
  public:
    HashFamily(std::uint64_t seed, std::size_t n);

    std::size_t size() const { return a_.size(); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t multiplier(std::size_t i) const { return a_[i]; }
    std::uint64_t offset(std::size_t i) const { return b_[i]; }

    std::uint64_t operator()(std::size_t i, std::uint64_t x) const { return apply(a_[i], b_[i], scramble(x)); }

    /// Fixed bijective 64-bit mix, folded into [0, p). Linear hashes of
    /// consecutive integers have strongly correlated minima; scrambling the
    /// element first restores near min-wise behaviour.
    static std::uint64_t scramble(std::uint64_t x) {
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        x = (x & kMinHashPrime) + (x >> 61);
        return x >= kMinHashPrime ? x - kMinHashPrime : x;
    }

    static std::uint64_t apply(std::uint64_t a, std::uint64_t b, std::uint64_t x) {
        const unsigned __int128 v = static_cast<unsigned __int128>(a) * x + b;
        std::uint64_t r = static_cast<std::uint64_t>(v & kMinHashPrime) + static_cast<std::uint64_t>(v >> 61);
        r = (r & kMinHashPrime) + (r >> 61);
        return r >= kMinHashPrime ? r - kMinHashPrime : r;
    }

  private:
    std::uint64_t seed_;
    std::vector<std::uint64_t> a_;
    std::vector<std::uint64_t> b_;
};

using MinHashSignature = std::vector<std::uint64_t>;

/// values[i] = min over the set of h_i(element). Throws on an empty set.
MinHashSignature signature(std::span<const std::uint64_t> set, const HashFamily& family);

/// Fraction of positions where two signatures agree.
double estimate_jaccard(const MinHashSignature& a, const MinHashSignature& b);

struct BandingParams {
    std::size_t bands = 1;
    std::size_t rows = 1;
    std::size_t hashes() const { return bands * rows; }
};

struct BandKeyHash {
    std::size_t operator()(const std::vector<std::uint64_t>& key) const noexcept;
};

/// Per band, the exact r-value tuple maps to the items that share it.
struct BucketIndex {
    using Band = std::unordered_map<std::vector<std::uint64_t>, std::vector<std::size_t>, BandKeyHash>;
    std::vector<Band> bands;
    std::vector<std::size_t> items;  // every item id that was inserted, ascending
};

/// Signatures keyed by item id. Throws when a signature length is not b*r.
BucketIndex band_group(const std::map<std::size_t, MinHashSignature>& signatures, const BandingParams& params);

/// Calls fn(a, b) for each item pair sharing a bucket, one representative
/// edge per bucket member (a star around the bucket's first item).
template <typename Fn>
void for_each_bucket_edge(const BucketIndex& index, Fn&& fn) {
    for (const auto& band : index.bands) {
        for (const auto& [key, members] : band) {
            for (std::size_t m = 1; m < members.size(); ++m) fn(members.front(), members[m]);
        }
    }
}

/// Connected components of the co-bucket graph. Groups are sorted lists of
/// item ids, ordered by smallest member; singletons are included.
std::vector<std::vector<std::size_t>> components(const BucketIndex& index);

/// 1 - (1 - s^r)^b
double cobucket_probability(double similarity, const BandingParams& params);

}  // namespace cmap
