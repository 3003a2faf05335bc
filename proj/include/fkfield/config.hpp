#pragma once
// Bond and colour states shared by the sampler, the cluster code and the
// field pipeline.

#include <cstdint>
#include <vector>

namespace fkfield {

/// FK bond occupations n_b in {0,1}; `ghost` holds the site-to-ghost bonds
/// when an external field is present and is empty otherwise.
struct BondConfig {
  std::vector<std::uint8_t> open;
  std::vector<std::uint8_t> ghost;

  std::size_t open_count() const {
    std::size_t k = 0;
    for (auto b : open) k += b;
    return k;
  }
  friend bool operator==(const BondConfig&, const BondConfig&) = default;
};

/// Per-site colour in 0..q-1. For q = 2, colour 0 is spin +1 and colour 1 is
/// spin -1; colour 0 is the colour favoured by a positive field.
struct SpinConfig {
  int q = 2;
  std::vector<std::uint8_t> color;

  int spin(std::size_t site) const { return color[site] == 0 ? 1 : -1; }
  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;
};

}  // namespace fkfield
