#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace cmap {

/// Disjoint sets with path compression and union by rank.
class UnionFind {
  public:
    explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }

    bool connected(std::size_t a, std::size_t b) { return find(a) == find(b); }
    std::size_t size() const { return parent_.size(); }

    /// Components as sorted member lists, ordered by smallest member.
    std::vector<std::vector<std::size_t>> groups() {
        constexpr std::size_t unseen = static_cast<std::size_t>(-1);
        std::vector<std::size_t> slot(parent_.size(), unseen);
        std::vector<std::vector<std::size_t>> out;
        for (std::size_t i = 0; i < parent_.size(); ++i) {
            const std::size_t root = find(i);
            if (slot[root] == unseen) {
                slot[root] = out.size();
                out.emplace_back();
            }
            out[slot[root]].push_back(i);
        }
        return out;
    }

  private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned char> rank_;
};

}  // namespace cmap
