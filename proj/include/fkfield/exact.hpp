#pragma once
// Exhaustive enumeration of the FK measure on tiny graphs.

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "fkfield/clusters.hpp"
#include "fkfield/config.hpp"
#include "fkfield/error.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/medial.hpp"
#include "fkfield/sampler.hpp"
#include "fkfield/union_find.hpp"

namespace fkfield {

struct ExactObservables {
  std::size_t sites = 0;
  std::vector<double> connectivity;        // sites x sites, P(x <-> y)
  std::vector<double> bond_open;           // P(bond e open)
  double cluster_moment = 0.0;             // E sum_i |C_i|^2
  std::map<std::uint32_t, double> cluster_count;  // P(k clusters)
  std::map<std::uint32_t, double> loop_count;     // P(l medial loops); empty when not traceable
  double ghost_fraction = 0.0;             // E |ghost cluster| / sites
  double partition_function = 0.0;

  double p(std::size_t x, std::size_t y) const { return connectivity[x * sites + y]; }
  double connectivity_sum() const {
    double s = 0.0;
    for (double v : connectivity) s += v;
    return s;
  }
};

constexpr std::size_t max_enumerated_bonds = 20;

/// Exact FK observables by summing over all 2^(bonds) configurations with
/// weight p^open (1-p)^closed q^clusters (ghost bonds weighted by the ghost
/// probability, the ghost cluster not counted). Independent site percolation
/// enumerates the 2^(sites) site configurations instead.
inline ExactObservables exact_enumerate(const LatticeGraph& g, const CouplingSpec& coupling) {
  coupling.validate();
  const std::size_t n = g.site_count();
  const bool ghost = coupling.h > 0.0;
  const bool site_model = coupling.model == Model::independent_site;
  const std::size_t nb = g.bond_count();
  const std::size_t vars = site_model ? n : nb + (ghost ? n : 0);
  if (vars > max_enumerated_bonds)
    throw Error(ErrorCode::too_many_bonds, std::to_string(vars) + " binary variables exceed the limit of " +
                                               std::to_string(max_enumerated_bonds));
  const double q = coupling.model == Model::fk_potts ? coupling.q : 1.0;
  const double p = coupling.p;
  const double ph = coupling.ghost_probability();
  const bool loops = !site_model && !ghost && g.spec.kind == LatticeKind::square && g.spec.boundary == Boundary::free &&
                     !g.periodic && !g.has_wired();

  ExactObservables out;
  out.sites = n;
  out.connectivity.assign(n * n, 0.0);
  out.bond_open.assign(nb, 0.0);
  UnionFind uf;
  BondConfig cfg;
  cfg.open.assign(nb, 0);
  std::vector<std::int32_t> label;
  std::vector<std::uint32_t> size;

  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << vars); ++mask) {
    uf.reset(n + (ghost ? 1 : 0));
    double w = 1.0;
    if (site_model) {
      for (std::size_t s = 0; s < n; ++s) w *= (mask >> s & 1) ? p : 1.0 - p;
      for (std::size_t e = 0; e < nb; ++e) {
        const Bond& b = g.bonds[e];
        cfg.open[e] = ((mask >> b.u) & 1) == ((mask >> b.v) & 1);
      }
    } else {
      for (std::size_t e = 0; e < nb; ++e) {
        cfg.open[e] = (mask >> e) & 1;
        w *= cfg.open[e] ? p : 1.0 - p;
      }
    }
    if (w == 0.0) continue;
    if (g.has_wired()) {
      std::int64_t first = -1;
      for (std::uint32_t s = 0; s < n; ++s) {
        if (!g.wired[s]) continue;
        if (first < 0) first = s;
        else uf.unite(static_cast<std::uint32_t>(first), s);
      }
    }
    for (std::size_t e = 0; e < nb; ++e)
      if (cfg.open[e]) uf.unite(g.bonds[e].u, g.bonds[e].v);
    if (ghost) {
      for (std::size_t s = 0; s < n; ++s) {
        const bool o = (mask >> (nb + s)) & 1;
        w *= o ? ph : 1.0 - ph;
        if (o) uf.unite(static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(n));
      }
      if (w == 0.0) continue;
    }
    const std::uint32_t k = uf.compact(label);
    const std::int64_t ghost_label = ghost ? label[n] : -1;
    const std::uint32_t weighted = k - (ghost ? 1u : 0u);
    w *= std::pow(q, static_cast<double>(weighted));

    out.partition_function += w;
    size.assign(k, 0);
    for (std::size_t s = 0; s < n; ++s) ++size[static_cast<std::size_t>(label[s])];
    double moment = 0.0;
    for (auto c : size) moment += static_cast<double>(c) * c;
    out.cluster_moment += w * moment;
    if (ghost) out.ghost_fraction += w * static_cast<double>(size[static_cast<std::size_t>(ghost_label)]) / static_cast<double>(n);
    // Site clusters: the ghost vertex is not a site, so its cluster counts
    // only when it contains sites.
    std::uint32_t site_clusters = k;
    if (ghost && size[static_cast<std::size_t>(ghost_label)] == 0) --site_clusters;
    out.cluster_count[site_clusters] += w;
    for (std::size_t x = 0; x < n; ++x)
      for (std::size_t y = 0; y < n; ++y)
        if (label[x] == label[y]) out.connectivity[x * n + y] += w;
    for (std::size_t e = 0; e < nb; ++e)
      if (cfg.open[e]) out.bond_open[e] += w;
    if (loops) out.loop_count[static_cast<std::uint32_t>(trace_medial_loops(g, cfg).loops.size())] += w;
  }

  const double z = out.partition_function;
  for (double& v : out.connectivity) v /= z;
  for (double& v : out.bond_open) v /= z;
  out.cluster_moment /= z;
  out.ghost_fraction /= z;
  for (auto& [k, v] : out.cluster_count) v /= z;
  for (auto& [k, v] : out.loop_count) v /= z;
  return out;
}

}  // namespace fkfield
