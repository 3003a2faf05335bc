#pragma once
// Medial-lattice loops separating FK clusters from dual FK clusters.
//
// A medial edge is a corner (site s, sector between two CCW-consecutive
// incident bonds). Leaving a corner through its second bond e, the loop
// continues on the far endpoint of e when e is open and turns back around s
// when e is closed; either way it enters the corner that follows e at the
// new site. Every corner therefore has exactly one successor, and loops are
// the cycles of that permutation, traversed with the primal site on the left.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "fkfield/clusters.hpp"
#include "fkfield/config.hpp"
#include "fkfield/lattice.hpp"

namespace fkfield {

struct MedialLoop {
  std::vector<Point> path;       // medial vertices (bond midpoints) in traversal order
  std::uint32_t corners = 0;     // number of medial edges on the loop
  std::uint32_t cluster = 0;     // primal cluster the loop bounds
  bool counter_clockwise = true;
  bool primal_inside = true;     // primal sites immediately inside (outer boundary of its cluster)
};

struct LoopSet {
  std::vector<MedialLoop> loops;
  std::size_t outer_boundaries() const {
    std::size_t k = 0;
    for (const auto& l : loops) k += l.primal_inside;
    return k;
  }
};

namespace detail {

struct MedialIndex {
  std::vector<std::uint32_t> offset;      // corner ids of site s: offset[s]..offset[s]+deg(s)
  std::vector<std::uint32_t> corner_site;
  std::vector<std::uint32_t> corner_slot;
  std::vector<std::uint32_t> pos_u, pos_v;  // slot of bond e in the incidence lists of its ends
};

inline MedialIndex medial_index(const LatticeGraph& g) {
  MedialIndex m;
  const auto n = static_cast<std::uint32_t>(g.site_count());
  m.offset.resize(n + 1, 0);
  for (std::uint32_t s = 0; s < n; ++s) m.offset[s + 1] = m.offset[s] + static_cast<std::uint32_t>(g.degree(s));
  m.corner_site.resize(m.offset[n]);
  m.corner_slot.resize(m.offset[n]);
  m.pos_u.resize(g.bond_count());
  m.pos_v.resize(g.bond_count());
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto inc = g.incident(s);
    for (std::uint32_t t = 0; t < inc.size(); ++t) {
      m.corner_site[m.offset[s] + t] = s;
      m.corner_slot[m.offset[s] + t] = t;
      if (g.bonds[inc[t]].u == s) m.pos_u[inc[t]] = t;
      else m.pos_v[inc[t]] = t;
    }
  }
  return m;
}

inline Point corner_point(const LatticeGraph& g, std::uint32_t s, std::uint32_t t) {
  const auto inc = g.incident(s);
  const Point d1 = g.direction(inc[t], s);
  const Point d2 = g.direction(inc[(t + 1) % inc.size()], s);
  const double a1 = std::atan2(d1.y, d1.x);
  double sweep = std::atan2(d2.y, d2.x) - a1;
  while (sweep <= 0) sweep += 2 * std::numbers::pi;
  if (inc.size() == 1) sweep = 2 * std::numbers::pi;
  const double mid = a1 + 0.5 * sweep;
  const double r = 0.25 * g.spec.spacing;
  return g.pos[s] + Point{r * std::cos(mid), r * std::sin(mid)};
}

}  // namespace detail

/// Trace all medial loops of a bond configuration on a free-boundary square
/// lattice (or a free subgraph of Z^2). Isolated sites contribute one loop
/// each. The loop count equals k + k* - 1 with the outer dual super-site.
inline LoopSet trace_medial_loops(const LatticeGraph& g, const BondConfig& config) {
  if (g.spec.kind != LatticeKind::square || g.spec.boundary != Boundary::free || g.periodic || g.has_wired())
    throw Error(ErrorCode::unsupported_lattice, "medial loops are traced on free square lattices only");
  if (config.open.size() != g.bond_count()) throw Error(ErrorCode::invalid_argument, "bond config does not match graph");
  const auto m = detail::medial_index(g);
  const ClusterLabeling lab = label_clusters(g, config, false);
  const std::uint32_t corners = m.offset.back();
  std::vector<std::uint8_t> seen(corners, 0);
  LoopSet out;

  for (std::uint32_t s = 0; s < g.site_count(); ++s) {
    if (g.degree(s) == 0) {
      out.loops.push_back({{g.pos[s]}, 0, static_cast<std::uint32_t>(lab.cluster[s]), true, true});
    }
  }
  for (std::uint32_t start = 0; start < corners; ++start) {
    if (seen[start]) continue;
    MedialLoop loop;
    loop.cluster = static_cast<std::uint32_t>(lab.cluster[m.corner_site[start]]);
    // Orientation from the polygon through corner points and bond midpoints.
    double area2 = 0.0;
    Point prev_pt = detail::corner_point(g, m.corner_site[start], m.corner_slot[start]);
    auto edge = [&](Point pt) {
      area2 += prev_pt.x * pt.y - pt.x * prev_pt.y;
      prev_pt = pt;
    };
    std::uint32_t c = start;
    do {
      seen[c] = 1;
      ++loop.corners;
      const std::uint32_t s = m.corner_site[c];
      const auto inc = g.incident(s);
      const std::uint32_t exit_bond = inc[(m.corner_slot[c] + 1) % inc.size()];
      const Bond& b = g.bonds[exit_bond];
      const Point mid = g.pos[s] + 0.5 * g.direction(exit_bond, s);
      loop.path.push_back(mid);
      edge(mid);
      const std::uint32_t next_site = config.open[exit_bond] ? g.other(exit_bond, s) : s;
      const std::uint32_t slot = next_site == b.u ? m.pos_u[exit_bond] : m.pos_v[exit_bond];
      c = m.offset[next_site] + slot;
      edge(detail::corner_point(g, m.corner_site[c], m.corner_slot[c]));
    } while (c != start);
    loop.counter_clockwise = area2 > 0;
    loop.primal_inside = loop.counter_clockwise;
    out.loops.push_back(std::move(loop));
  }
  return out;
}

}  // namespace fkfield
