#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

namespace fkfield {

/// Disjoint sets with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n = 0) { reset(n); }

  void reset(std::size_t n) {
    parent_.resize(n);
    std::iota(parent_.begin(), parent_.end(), 0u);
    size_.assign(n, 1);
  }

  std::size_t size() const { return parent_.size(); }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

  bool connected(std::uint32_t a, std::uint32_t b) { return find(a) == find(b); }

  /// Dense component ids 0..k-1 assigned in order of first appearance.
  std::uint32_t compact(std::vector<std::int32_t>& label) {
    const std::size_t n = parent_.size();
    label.assign(n, -1);
    std::vector<std::int32_t> root_label(n, -1);
    std::uint32_t k = 0;
    for (std::uint32_t x = 0; x < n; ++x) {
      const std::uint32_t r = find(x);
      if (root_label[r] < 0) root_label[r] = static_cast<std::int32_t>(k++);
      label[x] = root_label[r];
    }
    return k;
  }

 private:
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> size_;
};

}  // namespace fkfield
