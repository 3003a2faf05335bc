#pragma once
// Cluster identification and cluster geometry.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "fkfield/config.hpp"
#include "fkfield/error.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/rng.hpp"
#include "fkfield/union_find.hpp"

namespace fkfield {

struct ClusterLabeling {
  std::vector<std::int32_t> cluster;  // per site, dense ids 0..count-1
  std::uint32_t count = 0;
  std::int64_t ghost_cluster = -1;    // id of the cluster joined to the ghost
  std::int64_t dual_count = -1;       // k*, -1 when not computed
  std::vector<std::uint32_t> sizes;

  /// Sites grouped by cluster (CSR): members of c are sites[offsets[c]..offsets[c+1]).
  struct Members {
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> sites;
    std::span<const std::uint32_t> of(std::uint32_t c) const {
      return {sites.data() + offsets[c], sites.data() + offsets[c + 1]};
    }
  };

  Members members() const {
    Members m;
    m.offsets.assign(count + 1, 0);
    for (auto c : cluster) ++m.offsets[static_cast<std::size_t>(c) + 1];
    for (std::uint32_t c = 0; c < count; ++c) m.offsets[c + 1] += m.offsets[c];
    m.sites.resize(cluster.size());
    std::vector<std::uint32_t> fill(m.offsets.begin(), m.offsets.end() - 1);
    for (std::uint32_t s = 0; s < cluster.size(); ++s) m.sites[fill[cluster[s]]++] = s;
    return m;
  }
};

namespace detail {

inline void finish_labeling(UnionFind& uf, std::size_t sites, bool ghost, ClusterLabeling& out) {
  std::vector<std::int32_t> label;
  const std::uint32_t k = uf.compact(label);
  out.count = k;
  out.ghost_cluster = ghost ? label[sites] : -1;
  label.resize(sites);
  out.cluster = std::move(label);
  out.sizes.assign(k, 0);
  for (auto c : out.cluster) ++out.sizes[static_cast<std::size_t>(c)];
}

}  // namespace detail

/// Number of connected components of the dual graph whose open dual bonds
/// cross closed primal bonds (outer face = one super-site on free lattices).
inline std::int64_t dual_cluster_count(const LatticeGraph& g, const BondConfig& config) {
  if (g.dual.empty()) return -1;
  UnionFind uf(g.dual.site_count);
  std::uint32_t k = g.dual.site_count;
  for (std::uint32_t e = 0; e < g.bond_count(); ++e) {
    if (config.open[e]) continue;
    const auto& db = g.dual.bonds[g.dual.of_primal[e]];
    if (uf.unite(db[0], db[1])) --k;
  }
  return k;
}

/// FK clusters of a bond configuration. Wired boundary sites are pre-merged;
/// ghost bonds (if present) join sites to a ghost vertex, whose cluster id is
/// reported in ghost_cluster (the ghost itself is not a site).
inline ClusterLabeling label_clusters(const LatticeGraph& g, const BondConfig& config, bool with_dual = true) {
  if (config.open.size() != g.bond_count()) throw Error(ErrorCode::invalid_argument, "bond config does not match graph");
  const std::size_t n = g.site_count();
  const bool ghost = !config.ghost.empty();
  UnionFind uf(n + (ghost ? 1 : 0));
  if (g.has_wired()) {
    std::int64_t first = -1;
    for (std::uint32_t s = 0; s < n; ++s) {
      if (!g.wired[s]) continue;
      if (first < 0) first = s;
      else uf.unite(static_cast<std::uint32_t>(first), s);
    }
  }
  for (std::uint32_t e = 0; e < g.bond_count(); ++e)
    if (config.open[e]) uf.unite(g.bonds[e].u, g.bonds[e].v);
  if (ghost)
    for (std::uint32_t s = 0; s < n; ++s)
      if (config.ghost[s]) uf.unite(s, static_cast<std::uint32_t>(n));
  ClusterLabeling out;
  detail::finish_labeling(uf, n, ghost, out);
  if (with_dual && !g.has_wired() && !ghost) out.dual_count = dual_cluster_count(g, config);
  return out;
}

/// Same-colour clusters of a site configuration (site percolation when the
/// colours are the two site states).
inline ClusterLabeling label_site_clusters(const LatticeGraph& g, std::span<const std::uint8_t> colors) {
  if (colors.size() != g.site_count()) throw Error(ErrorCode::invalid_argument, "site config does not match graph");
  UnionFind uf(g.site_count());
  for (const Bond& b : g.bonds)
    if (colors[b.u] == colors[b.v]) uf.unite(b.u, b.v);
  ClusterLabeling out;
  detail::finish_labeling(uf, g.site_count(), false, out);
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

struct ClusterStat {
  std::uint32_t id = 0;
  std::uint32_t total = 0;       // |C|
  std::uint32_t restricted = 0;  // |C^| (sites inside the window)
  double diameter = 0.0;         // Euclidean diameter of the restricted set
  double min_dist = std::numeric_limits<double>::quiet_NaN();  // over all of C
  double max_dist = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// (y, x)-lexicographic cross product; hull orientation is irrelevant for the
// diameter.
inline double cross(Point o, Point a, Point b) { return (a.y - o.y) * (b.x - o.x) - (a.x - o.x) * (b.y - o.y); }

/// Diameter of a point set given in (y, x)-sorted order.
inline double sorted_set_diameter(std::span<const Point> pts, std::vector<Point>& hull) {
  if (pts.size() < 2) return 0.0;
  hull.clear();
  // Andrew's monotone chain; duplicates are skipped.
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t start = hull.size();
    auto visit = [&](Point p) {
      if (!hull.empty() && hull.back() == p) return;
      while (hull.size() >= start + 2 && cross(hull[hull.size() - 2], hull.back(), p) <= 0) hull.pop_back();
      hull.push_back(p);
    };
    if (pass == 0)
      for (const Point& p : pts) visit(p);
    else
      for (auto it = pts.rbegin(); it != pts.rend(); ++it) visit(*it);
  }
  double best = 0.0;
  for (std::size_t a = 0; a < hull.size(); ++a)
    for (std::size_t b = a + 1; b < hull.size(); ++b) best = std::max(best, norm(hull[a] - hull[b]));
  return best;
}

}  // namespace detail

/// Per-cluster statistics for every cluster meeting the window.
///
/// `window` must come from sites_in_window (sorted by (y, x)). Radial extents
/// from `ref` are computed over whole clusters with minimal-image distances.
inline std::vector<ClusterStat> cluster_stats(const ClusterLabeling& lab, const LatticeGraph& g,
                                              std::span<const WindowSite> window, std::optional<Point> ref = {}) {
  const std::uint32_t k = lab.count;
  std::vector<std::int64_t> slot(k, -1);
  std::vector<ClusterStat> out;
  for (const WindowSite& ws : window) {
    const auto c = static_cast<std::uint32_t>(lab.cluster[ws.site]);
    if (slot[c] < 0) {
      slot[c] = static_cast<std::int64_t>(out.size());
      out.push_back({c, lab.sizes[c], 0, 0.0});
    }
    ++out[static_cast<std::size_t>(slot[c])].restricted;
  }

  // Diameter: per cluster and per row only the extreme sites can be hull
  // vertices. Candidates are bucketed by cluster, keeping (y, x) order.
  struct Cand {
    std::uint32_t slot;
    Point p;
  };
  std::vector<Cand> cand;
  cand.reserve(window.size() / 2 + 16);
  std::vector<double> row_y(out.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::int64_t> last(out.size(), -1);
  for (const WindowSite& ws : window) {
    const auto sl = static_cast<std::uint32_t>(slot[static_cast<std::uint32_t>(lab.cluster[ws.site])]);
    if (row_y[sl] == ws.at.y && last[sl] >= 0) {
      cand[static_cast<std::size_t>(last[sl])].p = ws.at;
      continue;
    }
    row_y[sl] = ws.at.y;
    cand.push_back({sl, ws.at});  // row minimum
    cand.push_back({sl, ws.at});  // row maximum, updated as the row proceeds
    last[sl] = static_cast<std::int64_t>(cand.size()) - 1;
  }
  std::vector<std::uint32_t> off(out.size() + 1, 0);
  for (const Cand& c : cand) ++off[c.slot + 1];
  for (std::size_t s = 0; s < out.size(); ++s) off[s + 1] += off[s];
  std::vector<Point> pts(cand.size());
  {
    std::vector<std::uint32_t> fill(off.begin(), off.end() - 1);
    for (const Cand& c : cand) pts[fill[c.slot]++] = c.p;
  }
  std::vector<Point> hull;
  for (std::size_t s = 0; s < out.size(); ++s)
    out[s].diameter = detail::sorted_set_diameter({pts.data() + off[s], pts.data() + off[s + 1]}, hull);

  if (ref) {
    std::vector<double> lo(k, std::numeric_limits<double>::infinity());
    std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
    for (std::uint32_t site = 0; site < g.site_count(); ++site) {
      const auto c = static_cast<std::uint32_t>(lab.cluster[site]);
      if (slot[c] < 0) continue;
      const double d = g.distance(site, *ref);
      lo[c] = std::min(lo[c], d);
      hi[c] = std::max(hi[c], d);
    }
    for (auto& st : out) {
      st.min_dist = lo[st.id];
      st.max_dist = hi[st.id];
    }
  }
  return out;
}

inline std::vector<ClusterStat> cluster_stats(const ClusterLabeling& lab, const LatticeGraph& g, const Window& window,
                                              std::optional<Point> ref = {}) {
  const auto sites = sites_in_window(g, window);
  return cluster_stats(lab, g, sites, ref);
}

/// Radial extents (min, max distance from z) of every cluster, over all sites.
inline std::vector<std::pair<double, double>> radial_extents(const ClusterLabeling& lab, const LatticeGraph& g, Point z) {
  std::vector<std::pair<double, double>> out(lab.count, {std::numeric_limits<double>::infinity(),
                                                         -std::numeric_limits<double>::infinity()});
  for (std::uint32_t site = 0; site < g.site_count(); ++site) {
    auto& e = out[static_cast<std::size_t>(lab.cluster[site])];
    const double d = g.distance(site, z);
    e.first = std::min(e.first, d);
    e.second = std::max(e.second, d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Colouring

enum class ColorScheme { ising_sign, potts_q, divide_and_color };

/// One independent colour per cluster, drawn in cluster-id order. A ghost
/// cluster keeps colour 0 and consumes no draw.
inline SpinConfig color_clusters(const ClusterLabeling& lab, ColorScheme scheme, RandomStream& rng, int q = 2) {
  if (scheme != ColorScheme::potts_q) q = 2;
  if (q < 1 || q > 255) throw Error(ErrorCode::invalid_argument, "q must be in [1, 255]");
  std::vector<std::uint8_t> cc(lab.count);
  for (std::uint32_t c = 0; c < lab.count; ++c)
    cc[c] = static_cast<std::int64_t>(c) == lab.ghost_cluster ? 0 : static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(q)));
  SpinConfig out{q, std::vector<std::uint8_t>(lab.cluster.size())};
  for (std::size_t s = 0; s < lab.cluster.size(); ++s) out.color[s] = cc[static_cast<std::size_t>(lab.cluster[s])];
  return out;
}

}  // namespace fkfield
