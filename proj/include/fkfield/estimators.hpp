#pragma once
// Scaling diagnostics: two-point and one-arm profiles, annulus circuits,
// crossing counts, small-cluster moments and magnetization curves.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "fkfield/clusters.hpp"
#include "fkfield/field.hpp"
#include "fkfield/fit.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/rng.hpp"
#include "fkfield/sampler.hpp"
#include "fkfield/stats.hpp"
#include "fkfield/union_find.hpp"

namespace fkfield {

// ---------------------------------------------------------------------------
// Lattice helpers

/// Lattice steps of a kind in counter-clockwise order starting east.
inline std::span<const std::array<int, 2>> lattice_steps(LatticeKind kind) {
  static constexpr std::array<std::array<int, 2>, 4> sq = {{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
  static constexpr std::array<std::array<int, 2>, 6> tri = {{{1, 0}, {0, 1}, {-1, 1}, {-1, 0}, {0, -1}, {1, -1}}};
  if (kind == LatticeKind::square) return sq;
  return tri;
}

/// Bond id for each (site, step) pair, -1 where the lattice has no such bond.
class StepBonds {
 public:
  explicit StepBonds(const LatticeGraph& g) : dirs_(lattice_steps(g.spec.kind).size()) {
    table_.assign(g.site_count() * dirs_, -1);
    const auto steps = lattice_steps(g.spec.kind);
    for (std::uint32_t e = 0; e < g.bond_count(); ++e) {
      const Bond& b = g.bonds[e];
      for (std::size_t k = 0; k < dirs_; ++k) {
        if (steps[k][0] == b.di && steps[k][1] == b.dj) table_[b.u * dirs_ + k] = e;
        if (steps[k][0] == -b.di && steps[k][1] == -b.dj) table_[b.v * dirs_ + k] = e;
      }
    }
  }
  std::int64_t operator()(std::uint32_t site, std::size_t dir) const { return table_[site * dirs_ + dir]; }
  std::size_t directions() const { return dirs_; }

 private:
  std::size_t dirs_;
  std::vector<std::int64_t> table_;
};

namespace detail {

inline double lattice_norm(LatticeKind kind, double di, double dj) { return norm(embed(kind, di, dj)); }

/// Offsets d with |d| <= radius (lattice units), with the reach
/// max(|d|, max over neighbours |d + e|) used for boundary-hitting events.
struct DiscTable {
  int R = 0;
  int side = 0;
  LatticeKind kind = LatticeKind::square;
  std::vector<double> reach;  // -1 outside the disc
  std::size_t index(int di, int dj) const { return static_cast<std::size_t>((di + R) + side * (dj + R)); }
  bool inside(int di, int dj) const {
    return di >= -R && dj >= -R && di <= R && dj <= R && reach[index(di, dj)] >= 0;
  }
};

inline DiscTable disc_table(LatticeKind kind, double radius) {
  DiscTable t;
  t.kind = kind;
  t.R = static_cast<int>(std::ceil(radius * (kind == LatticeKind::square ? 1.0 : 2.0 / std::sqrt(3.0)))) + 1;
  t.side = 2 * t.R + 1;
  t.reach.assign(static_cast<std::size_t>(t.side) * t.side, -1.0);
  const auto steps = lattice_steps(kind);
  for (int dj = -t.R; dj <= t.R; ++dj)
    for (int di = -t.R; di <= t.R; ++di) {
      const double r = lattice_norm(kind, di, dj);
      if (r > radius + 1e-9) continue;
      double m = r;
      for (const auto& s : steps) m = std::max(m, lattice_norm(kind, di + s[0], dj + s[1]));
      t.reach[t.index(di, dj)] = m;
    }
  return t;
}

inline std::int64_t wrap_site(const LatticeGraph& g, std::int64_t i, std::int64_t j) { return g.site_at(i, j); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-point function

/// Same-cluster indicator averaged over pairs in integer-radius shells
/// [k, k+1) (lattice units), k = 1..floor(r_max / a). On periodic lattices
/// pairs are sampled as all offsets from random base points; otherwise all
/// site pairs are used.
class TwoPointAccumulator {
 public:
  TwoPointAccumulator(std::shared_ptr<const LatticeGraph> graph, RandomStream rng, double r_max, int base_points = 64)
      : graph_(std::move(graph)), rng_(rng), base_points_(base_points) {
    const auto& g = *graph_;
    shells_ = static_cast<int>(std::floor(r_max / g.spec.spacing + 1e-9));
    if (shells_ < 1) throw Error(ErrorCode::invalid_argument, "r_max below one lattice spacing");
    if (g.periodic && r_max >= 0.5 * g.period * g.spec.spacing)
      throw Error(ErrorCode::radius_exceeds_lattice, "r_max must be below half the torus side");
    shell_dist_.assign(static_cast<std::size_t>(shells_), 0.0);
    shell_count_.assign(static_cast<std::size_t>(shells_), 0.0);
    if (g.periodic) {
      const int R = shells_ + 2;
      for (int dj = -R; dj <= R; ++dj)
        for (int di = -R; di <= R; ++di) {
          const double r = detail::lattice_norm(g.spec.kind, di, dj);
          const int k = static_cast<int>(std::floor(r + 1e-9));
          if (k < 1 || k > shells_) continue;
          offsets_.push_back({di, dj, k - 1});
          shell_dist_[static_cast<std::size_t>(k - 1)] += r;
          shell_count_[static_cast<std::size_t>(k - 1)] += 1;
        }
    } else {
      for (std::uint32_t x = 0; x < g.site_count(); ++x)
        for (std::uint32_t y = x + 1; y < g.site_count(); ++y) {
          const double r = norm(g.pos[y] - g.pos[x]) / g.spec.spacing;
          const int k = static_cast<int>(std::floor(r + 1e-9));
          if (k < 1 || k > shells_) continue;
          pairs_.push_back({x, y, k - 1});
          shell_dist_[static_cast<std::size_t>(k - 1)] += r;
          shell_count_[static_cast<std::size_t>(k - 1)] += 1;
        }
    }
    for (int k = 0; k < shells_; ++k)
      if (shell_count_[static_cast<std::size_t>(k)] > 0) active_.push_back(k);
    if (active_.empty()) throw Error(ErrorCode::insufficient_range, "no site pairs within r_max");
    series_ = SampleSeries(active_.size());
  }

  void observe(const Snapshot& s) { observe(s.labels()); }

  void observe(const ClusterLabeling& lab) {
    const auto& g = *graph_;
    std::vector<double> hit(static_cast<std::size_t>(shells_), 0.0);
    double norm_factor = 1.0;
    if (g.periodic) {
      const int P = g.period;
      for (int b = 0; b < base_points_; ++b) {
        const auto x = static_cast<std::uint32_t>(rng_.below(g.site_count()));
        const int xi = g.cells[x].i;
        const int xj = g.cells[x].j;
        const auto cl = lab.cluster[x];
        for (const auto& o : offsets_) {
          int i = xi + o.di;
          int j = xj + o.dj;
          i += i < 0 ? P : (i >= P ? -P : 0);
          j += j < 0 ? P : (j >= P ? -P : 0);
          hit[static_cast<std::size_t>(o.shell)] += lab.cluster[static_cast<std::size_t>(i + P * j)] == cl;
        }
      }
      norm_factor = base_points_;
    } else {
      for (const auto& p : pairs_) hit[static_cast<std::size_t>(p.shell)] += lab.cluster[p.x] == lab.cluster[p.y];
    }
    std::vector<double> row;
    for (int k : active_) row.push_back(hit[static_cast<std::size_t>(k)] / (norm_factor * shell_count_[static_cast<std::size_t>(k)]));
    series_.push(row);
  }

  const SampleSeries& series() const { return series_; }
  /// Mean pair distance of each reported shell, in continuum units.
  std::vector<double> radii() const {
    std::vector<double> r;
    for (int k : active_)
      r.push_back(graph_->spec.spacing * shell_dist_[static_cast<std::size_t>(k)] / shell_count_[static_cast<std::size_t>(k)]);
    return r;
  }

 private:
  struct Offset {
    int di, dj, shell;
  };
  struct Pair {
    std::uint32_t x, y;
    int shell;
  };
  std::shared_ptr<const LatticeGraph> graph_;
  RandomStream rng_;
  int base_points_;
  int shells_ = 0;
  std::vector<Offset> offsets_;
  std::vector<Pair> pairs_;
  std::vector<double> shell_dist_, shell_count_;
  std::vector<int> active_;
  SampleSeries series_{1};
};

inline RadialProfile profile_from_chains(std::span<const SampleSeries> chains, std::span<const double> radii,
                                         std::string observable, double spacing, std::string boundary = "bulk") {
  const auto est = estimate(chains);
  RadialProfile p;
  p.observable = std::move(observable);
  p.scale_name = "r";
  p.boundary = std::move(boundary);
  p.spacing = spacing;
  for (std::size_t k = 0; k < radii.size(); ++k) p.points.push_back({radii[k], est[k].mean, est[k].stderr});
  return p;
}

struct ProfileRun {
  RadialProfile profile;
  std::vector<SampleSeries> chains;
  std::vector<ChainSummary> summaries;
};

inline ProfileRun twopoint_profile(const LatticeSpec& spec, const CouplingSpec& coupling, const Schedule& schedule,
                                   double r_max, int base_points = 64, int jobs = 1) {
  if (coupling.h != 0.0) throw Error(ErrorCode::invalid_argument, "two-point profile needs h = 0");
  auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
  auto [accs, sums] = run_ensemble(
      g, coupling, schedule,
      [&](std::uint32_t c) { return TwoPointAccumulator(g, RandomStream(schedule.seed, chain_stream(c)).substream(1), r_max, base_points); },
      jobs);
  ProfileRun out;
  for (auto& a : accs) out.chains.push_back(a.series());
  out.profile = profile_from_chains(out.chains, accs.front().radii(), "tau", spec.spacing);
  out.summaries = std::move(sums);
  return out;
}

// ---------------------------------------------------------------------------
// One-arm events

/// Reach of the open cluster of `origin` explored within the disc table
/// (bounded breadth-first search over open bonds). Returns -1 if nothing
/// is explored. Scratch arrays are reused across calls.
class ArmExplorer {
 public:
  ArmExplorer(const LatticeGraph& g, double radius_lattice)
      : g_(g), steps_(g), table_(detail::disc_table(g.spec.kind, radius_lattice)) {
    if (g.periodic && table_.R + 1 >= g.period / 2)
      throw Error(ErrorCode::radius_exceeds_lattice, "arm radius exceeds half the torus");
    stamp_.assign(g.site_count(), 0);
  }

  double explore(const BondConfig& config, std::uint32_t origin) {
    if (++gen_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      gen_ = 1;
    }
    const auto dirs = lattice_steps(g_.spec.kind);
    double reach = table_.reach[table_.index(0, 0)];
    queue_.clear();
    queue_.push_back({origin, 0, 0});
    stamp_[origin] = gen_;
    for (std::size_t h = 0; h < queue_.size(); ++h) {
      const Node x = queue_[h];
      for (std::size_t k = 0; k < dirs.size(); ++k) {
        const auto e = steps_(x.site, k);
        if (e < 0 || !config.open[static_cast<std::size_t>(e)]) continue;
        const int di = x.di + dirs[k][0];
        const int dj = x.dj + dirs[k][1];
        if (!table_.inside(di, dj)) continue;
        const std::uint32_t y = g_.other(static_cast<std::uint32_t>(e), x.site);
        if (stamp_[y] == gen_) continue;
        stamp_[y] = gen_;
        reach = std::max(reach, table_.reach[table_.index(di, dj)]);
        queue_.push_back({y, di, dj});
      }
    }
    return reach;
  }

 private:
  struct Node {
    std::uint32_t site;
    int di, dj;
  };
  const LatticeGraph& g_;
  StepBonds steps_;
  detail::DiscTable table_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t gen_ = 0;
  std::vector<Node> queue_;
};

/// Bulk one-arm indicators from random origins on a torus snapshot:
/// column k is the fraction of origins whose cluster reaches the inner
/// boundary of the disc of radius radii[k] (continuum units).
class BulkArmAccumulator {
 public:
  BulkArmAccumulator(std::shared_ptr<const LatticeGraph> graph, RandomStream rng, std::vector<double> radii, int origins = 16)
      : graph_(std::move(graph)), rng_(rng), radii_(std::move(radii)), origins_(origins),
        explorer_(*graph_, *std::max_element(radii_.begin(), radii_.end()) / graph_->spec.spacing + 1.0),
        series_(radii_.size()) {}

  void observe(const Snapshot& s) {
    std::vector<double> row(radii_.size(), 0.0);
    const double a = graph_->spec.spacing;
    for (int o = 0; o < origins_; ++o) {
      const auto x = static_cast<std::uint32_t>(rng_.below(graph_->site_count()));
      const double reach = explorer_.explore(s.bonds(), x);
      for (std::size_t k = 0; k < radii_.size(); ++k) row[k] += reach > radii_[k] / a + 1e-9;
    }
    for (auto& v : row) v /= origins_;
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  RandomStream rng_;
  std::vector<double> radii_;
  int origins_;
  ArmExplorer explorer_;
  SampleSeries series_;
};

/// Indicator that the origin of a disc lattice is connected to its inner
/// boundary (sites with a lattice neighbour outside the disc).
class DiscArmAccumulator {
 public:
  explicit DiscArmAccumulator(std::shared_ptr<const LatticeGraph> graph) : graph_(std::move(graph)) {
    const auto& g = *graph_;
    const std::size_t coordination = lattice_steps(g.spec.kind).size();
    for (std::uint32_t s = 0; s < g.site_count(); ++s)
      if (g.degree(s) < coordination) boundary_.push_back(s);
    origin_ = static_cast<std::uint32_t>(g.site_at(0, 0));
  }
  void observe(const Snapshot& s) {
    const auto& lab = s.labels();
    const auto c = lab.cluster[origin_];
    bool hit = false;
    for (auto b : boundary_) hit = hit || lab.cluster[b] == c;
    series_.push(hit ? 1.0 : 0.0);
  }
  const SampleSeries& series() const { return series_; }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  std::vector<std::uint32_t> boundary_;
  std::uint32_t origin_ = 0;
  SampleSeries series_{1};
};

enum class ArmBoundary { free, wired, bulk };

inline const char* to_string(ArmBoundary b) {
  return b == ArmBoundary::free ? "free" : (b == ArmBoundary::wired ? "wired" : "bulk");
}

struct OneArmOptions {
  LatticeKind kind = LatticeKind::square;
  double spacing = 1.0;      // continuum length of a lattice step
  int padding = 4;           // bulk torus side, in units of the largest diameter
  int origins = 16;          // bulk origins per snapshot
  int jobs = 1;
};

/// P(0 <-> boundary of B(r)) for each radius (continuum units). Free and
/// wired profiles simulate the disc B(r) itself, one ensemble per radius;
/// the bulk profile uses random origins on a torus of side
/// padding * 2 * max(radii).
inline ProfileRun one_arm_profile(std::vector<double> radii, ArmBoundary boundary, const CouplingSpec& coupling,
                                  const Schedule& schedule, const OneArmOptions& opt = {}) {
  if (radii.empty()) throw Error(ErrorCode::invalid_argument, "no radii");
  std::sort(radii.begin(), radii.end());
  if (radii.front() <= 0) throw Error(ErrorCode::invalid_argument, "radii must be > 0");
  ProfileRun out;
  if (boundary == ArmBoundary::bulk) {
    const double rmax = radii.back() / opt.spacing;
    const int side = std::max(8, static_cast<int>(std::ceil(opt.padding * 2 * (rmax + 2))));
    auto g = std::make_shared<const LatticeGraph>(build_lattice({opt.kind, side, Boundary::periodic, opt.spacing}));
    auto [accs, sums] = run_ensemble(
        g, coupling, schedule,
        [&](std::uint32_t c) { return BulkArmAccumulator(g, RandomStream(schedule.seed, chain_stream(c)).substream(2), radii, opt.origins); },
        opt.jobs);
    for (auto& a : accs) out.chains.push_back(a.series());
    out.profile = profile_from_chains(out.chains, radii, "one-arm", opt.spacing, to_string(boundary));
    out.summaries = std::move(sums);
    return out;
  }
  out.profile.observable = "one-arm";
  out.profile.scale_name = "r";
  out.profile.boundary = to_string(boundary);
  out.profile.spacing = opt.spacing;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    auto g = std::make_shared<const LatticeGraph>(build_disc(opt.kind, radii[k] / opt.spacing,
                                                             boundary == ArmBoundary::wired ? Boundary::wired : Boundary::free,
                                                             opt.spacing));
    Schedule s = schedule;
    s.seed = schedule.seed + 0x9E3779B97F4A7C15ULL * (k + 1);
    auto [accs, sums] = run_ensemble(g, coupling, s, [&](std::uint32_t) { return DiscArmAccumulator(g); }, opt.jobs);
    std::vector<SampleSeries> chains;
    for (auto& a : accs) chains.push_back(a.series());
    const auto e = estimate(chains).front();
    out.profile.points.push_back({radii[k], e.mean, e.stderr});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Independent site percolation on the triangular lattice, explored lazily

/// Explores the open cluster of the origin in sample `sample` of i.i.d. site
/// percolation on the infinite triangular lattice, with site states given by
/// site_open(seed, stream, sample, site). Only sites within `radius` (lattice
/// units) are visited. Returns the reach of the explored cluster (see
/// detail::DiscTable) or -1 when the origin is closed.
class LazySiteArm {
 public:
  LazySiteArm(double radius, double p) : table_(detail::disc_table(LatticeKind::triangular, radius)), thr_(bernoulli_threshold(p)) {
    stamp_.assign(table_.reach.size(), 0);
  }

  double explore(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample) {
    if (++gen_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      gen_ = 1;
    }
    if (!site_open(seed, stream, sample, {0, 0}, thr_)) return -1.0;
    const auto dirs = lattice_steps(LatticeKind::triangular);
    double reach = table_.reach[table_.index(0, 0)];
    queue_.clear();
    queue_.push_back({0, 0});
    stamp_[table_.index(0, 0)] = gen_;
    visited_ = 1;
    for (std::size_t h = 0; h < queue_.size(); ++h) {
      const Cell x = queue_[h];
      for (const auto& d : dirs) {
        const int i = x.i + d[0];
        const int j = x.j + d[1];
        if (!table_.inside(i, j)) continue;
        const auto idx = table_.index(i, j);
        if (stamp_[idx] == gen_) continue;
        stamp_[idx] = gen_;
        if (!site_open(seed, stream, sample, {i, j}, thr_)) continue;
        ++visited_;
        reach = std::max(reach, table_.reach[idx]);
        queue_.push_back({i, j});
      }
    }
    return reach;
  }
  std::size_t last_cluster_size() const { return visited_; }
  double radius_limit() const { return table_.R; }

 private:
  detail::DiscTable table_;
  std::uint64_t thr_;
  std::vector<std::uint32_t> stamp_;
  std::uint32_t gen_ = 0;
  std::vector<Cell> queue_;
  std::size_t visited_ = 0;
};

/// Reference for LazySiteArm: label the full disc and take the origin's cluster.
inline double eager_site_arm(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample, double radius, double p) {
  const auto g = build_disc(LatticeKind::triangular, radius, Boundary::free);
  const auto thr = bernoulli_threshold(p);
  std::vector<std::uint8_t> color(g.site_count());
  for (std::size_t s = 0; s < g.site_count(); ++s) color[s] = site_open(seed, stream, sample, g.cells[s], thr) ? 0 : 1;
  const auto origin = static_cast<std::uint32_t>(g.site_at(0, 0));
  if (color[origin] != 0) return -1.0;
  const auto lab = label_site_clusters(g, color);
  const auto table = detail::disc_table(LatticeKind::triangular, radius);
  double reach = -1.0;
  for (std::uint32_t s = 0; s < g.site_count(); ++s)
    if (lab.cluster[s] == lab.cluster[origin]) reach = std::max(reach, table.reach[table.index(g.cells[s].i, g.cells[s].j)]);
  return reach;
}

/// One-arm profile of independent site percolation on the triangular lattice
/// (radii in lattice units), `samples` independent samples per chain.
inline ProfileRun site_percolation_one_arm(std::vector<double> radii, double p, std::uint64_t seed, int chains,
                                           std::uint64_t samples) {
  std::sort(radii.begin(), radii.end());
  ProfileRun out;
  LazySiteArm arm(radii.back() + 1.0, p);
  for (int c = 0; c < chains; ++c) {
    SampleSeries s(radii.size());
    std::vector<double> row(radii.size());
    for (std::uint64_t t = 0; t < samples; ++t) {
      const double reach = arm.explore(seed, chain_stream(static_cast<std::uint32_t>(c)), t);
      for (std::size_t k = 0; k < radii.size(); ++k) row[k] = reach > radii[k] + 1e-9;
      s.push(row);
    }
    out.chains.push_back(std::move(s));
  }
  out.profile = profile_from_chains(out.chains, radii, "one-arm", 1.0, "bulk");
  return out;
}

// ---------------------------------------------------------------------------
// Annulus circuits

struct CircuitEvents {
  bool open = false;         // open circuit of bonds with both ends in the annulus
  bool dual_closed = false;  // closed dual circuit with all faces in the annulus
};

/// Circuit events in the annulus r1 <= |y - z| <= r2 (continuum units) on a
/// square lattice, decided by planar duality: an open circuit surrounds the
/// inner disc iff no chain of faces, stepping across bonds that are not
/// open-with-both-ends-in-the-annulus, joins the inner disc to the outside.
/// The dual-closed event is the mirror statement with sites and faces exchanged.
class CircuitDetector {
 public:
  CircuitDetector(std::shared_ptr<const LatticeGraph> graph, double r1, double r2) : graph_(std::move(graph)), steps_(*graph_) {
    validate(Region{Annulus{{0, 0}, r1, r2}});
    if (graph_->spec.kind != LatticeKind::square) throw Error(ErrorCode::unsupported_lattice, "circuits on square lattices only");
    const double a = graph_->spec.spacing;
    r1_ = r1 / a;
    r2_ = r2 / a;
    half_ = static_cast<int>(std::ceil(r2_)) + 3;
    if (graph_->periodic && 2 * half_ + 2 >= graph_->period)
      throw Error(ErrorCode::radius_exceeds_lattice, "annulus does not fit in the torus");
  }

  CircuitEvents detect(const BondConfig& config, Point center) {
    const auto& g = *graph_;
    const double a = g.spec.spacing;
    const double cx = center.x / a;
    const double cy = center.y / a;
    const int i0 = static_cast<int>(std::floor(cx)) - half_;
    const int j0 = static_cast<int>(std::floor(cy)) - half_;
    const int side = 2 * half_ + 2;  // sites per side of the box
    auto dist = [&](double i, double j) { return std::hypot(i - cx, j - cy); };
    auto site = [&](int i, int j) -> std::uint32_t {
      const auto s = g.site_at(i, j);
      if (s < 0) throw Error(ErrorCode::radius_exceeds_lattice, "annulus leaves the lattice");
      return static_cast<std::uint32_t>(s);
    };
    auto bond_open = [&](int i, int j, int dir) {
      const auto e = steps_(site(i, j), static_cast<std::size_t>(dir));
      return e >= 0 && config.open[static_cast<std::size_t>(e)];
    };
    auto in_annulus = [&](double d) { return d >= r1_ - 1e-9 && d <= r2_ + 1e-9; };
    CircuitEvents ev;

    // Faces (i, j) for i, j in [0, side-1), lower-left corner (i0+i, j0+j).
    {
      const int fs = side - 1;
      const auto S = static_cast<std::uint32_t>(fs * fs);
      const std::uint32_t T = S + 1;
      uf_.reset(S + 2);
      auto fid = [&](int i, int j) { return static_cast<std::uint32_t>(i + fs * j); };
      for (int j = 0; j < fs; ++j)
        for (int i = 0; i < fs; ++i) {
          double dmin = 1e300, dmax = 0;
          for (int c = 0; c < 4; ++c) {
            const double d = dist(i0 + i + (c & 1), j0 + j + (c >> 1));
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
          }
          if (dmin < r1_ - 1e-9) uf_.unite(fid(i, j), S);
          if (dmax > r2_ + 1e-9 || i == 0 || j == 0 || i == fs - 1 || j == fs - 1) uf_.unite(fid(i, j), T);
          // Across the right edge: vertical bond (i+1, j)-(i+1, j+1).
          if (i + 1 < fs) {
            const int bi = i0 + i + 1, bj = j0 + j;
            const bool blocked = bond_open(bi, bj, 1) && in_annulus(dist(bi, bj)) && in_annulus(dist(bi, bj + 1));
            if (!blocked) uf_.unite(fid(i, j), fid(i + 1, j));
          }
          // Across the top edge: horizontal bond (i, j+1)-(i+1, j+1).
          if (j + 1 < fs) {
            const int bi = i0 + i, bj = j0 + j + 1;
            const bool blocked = bond_open(bi, bj, 0) && in_annulus(dist(bi, bj)) && in_annulus(dist(bi + 1, bj));
            if (!blocked) uf_.unite(fid(i, j), fid(i, j + 1));
          }
        }
      ev.open = !uf_.connected(S, T);
    }
    // Sites (i, j) for i, j in [0, side), at (i0+i, j0+j); faces by centre.
    {
      const auto S = static_cast<std::uint32_t>(side * side);
      const std::uint32_t T = S + 1;
      uf_.reset(S + 2);
      auto sid = [&](int i, int j) { return static_cast<std::uint32_t>(i + side * j); };
      auto face_d = [&](int fi, int fj) { return dist(fi + 0.5, fj + 0.5); };
      for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i) {
          const int gi = i0 + i, gj = j0 + j;
          double dmin = 1e300, dmax = 0;
          for (int c = 0; c < 4; ++c) {
            const double d = face_d(gi - (c & 1), gj - (c >> 1));
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
          }
          if (dmin < r1_ - 1e-9) uf_.unite(sid(i, j), S);
          if (dmax > r2_ + 1e-9 || i == 0 || j == 0 || i == side - 1 || j == side - 1) uf_.unite(sid(i, j), T);
          // Horizontal bond to (i+1, j): separates faces (gi, gj-1) and (gi, gj).
          if (i + 1 < side) {
            const bool blocked = !bond_open(gi, gj, 0) && in_annulus(face_d(gi, gj - 1)) && in_annulus(face_d(gi, gj));
            if (!blocked) uf_.unite(sid(i, j), sid(i + 1, j));
          }
          // Vertical bond to (i, j+1): separates faces (gi-1, gj) and (gi, gj).
          if (j + 1 < side) {
            const bool blocked = !bond_open(gi, gj, 1) && in_annulus(face_d(gi - 1, gj)) && in_annulus(face_d(gi, gj));
            if (!blocked) uf_.unite(sid(i, j), sid(i, j + 1));
          }
        }
      ev.dual_closed = !uf_.connected(S, T);
    }
    return ev;
  }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  StepBonds steps_;
  double r1_ = 0, r2_ = 0;
  int half_ = 0;
  UnionFind uf_;
};

/// Evenly spaced annulus centres on a torus: a k x k grid with spacing at
/// least `min_spacing` (continuum units), shifted by `offset`.
inline std::vector<Point> center_grid(const LatticeGraph& g, double min_spacing, Point offset = {0, 0}) {
  const double L = g.periodic ? g.period * g.spec.spacing : 0.0;
  if (!g.periodic) return {offset};
  const int k = std::max(1, static_cast<int>(std::floor(L / min_spacing + 1e-9)));
  std::vector<Point> out;
  const double step = std::floor(L / k / g.spec.spacing) * g.spec.spacing;
  for (int b = 0; b < k; ++b)
    for (int a = 0; a < k; ++a) out.push_back(offset + Point{a * step, b * step});
  return out;
}

/// Columns: fraction of centres with an open circuit, with a dual-closed circuit.
class CircuitAccumulator {
 public:
  CircuitAccumulator(std::shared_ptr<const LatticeGraph> graph, double r1, double r2, std::vector<Point> centers)
      : detector_(std::move(graph), r1, r2), centers_(std::move(centers)) {}
  void observe(const Snapshot& s) { observe(s.bonds()); }
  void observe(const BondConfig& c) {
    double open = 0, dual = 0;
    for (const auto& z : centers_) {
      const auto ev = detector_.detect(c, z);
      open += ev.open;
      dual += ev.dual_closed;
    }
    const double row[2] = {open / centers_.size(), dual / centers_.size()};
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }

 private:
  CircuitDetector detector_;
  std::vector<Point> centers_;
  SampleSeries series_{2};
};

enum class CircuitSpecies { open, dual_closed };

/// Probability of a circuit of the given species, estimated over an ensemble
/// of torus snapshots with annuli centred on a grid spaced 2 r2 apart.
inline Estimate annulus_circuit_prob(double r1, double r2, const LatticeSpec& spec, const CouplingSpec& coupling,
                                     const Schedule& schedule, CircuitSpecies species, int jobs = 1,
                                     Point offset = {0, 0}) {
  validate(Region{Annulus{{0, 0}, r1, r2}});
  auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
  const auto centers = center_grid(*g, 2 * r2 + 2 * spec.spacing, offset);
  auto [accs, sums] = run_ensemble(g, coupling, schedule, [&](std::uint32_t) { return CircuitAccumulator(g, r1, r2, centers); }, jobs);
  std::vector<SampleSeries> chains;
  for (auto& a : accs) chains.push_back(a.series());
  return estimate(chains)[species == CircuitSpecies::open ? 0 : 1];
}

// ---------------------------------------------------------------------------
// Crossing counts

/// Number of distinct clusters containing a site with |y - z| < r1 and a
/// site with |y - z| > r2, for centres z on lattice sites. A cluster doing
/// both must contain a site of the shell r2 < |y - z| <= r2 + 1 lattice step,
/// so only the inner disc and that shell are scanned.
class CrossingCounter {
 public:
  CrossingCounter(const LatticeGraph& g, double r1, double r2) : g_(g) {
    validate(Region{Annulus{{0, 0}, r1, r2}});
    const double a = g.spec.spacing;
    const double R1 = r1 / a, R2 = r2 / a;
    const int R = static_cast<int>(std::ceil((R2 + 1) * (g.spec.kind == LatticeKind::square ? 1.0 : 2.0 / std::sqrt(3.0)))) + 1;
    if (g.periodic && 2 * R + 2 >= g.period) throw Error(ErrorCode::radius_exceeds_lattice, "annulus does not fit in the torus");
    for (int dj = -R; dj <= R; ++dj)
      for (int di = -R; di <= R; ++di) {
        const double d = detail::lattice_norm(g.spec.kind, di, dj);
        if (d < R1 - 1e-9) inner_.push_back({di, dj});
        else if (d > R2 + 1e-9 && d <= R2 + 1 + 1e-9) shell_.push_back({di, dj});
      }
  }

  std::uint32_t count(const ClusterLabeling& lab, std::uint32_t center) {
    if (mark_.size() < lab.count) mark_.assign(lab.count, 0);
    if (gen_ >= 0xFFFFFFF0u) {
      std::fill(mark_.begin(), mark_.end(), 0);
      gen_ = 0;
    }
    const std::uint32_t in = ++gen_;
    const std::uint32_t seen = ++gen_;
    const int ci = g_.cells[center].i, cj = g_.cells[center].j;
    auto label = [&](const Cell& d) {
      const auto s = g_.site_at(ci + d.i, cj + d.j);
      if (s < 0) throw Error(ErrorCode::radius_exceeds_lattice, "annulus leaves the lattice");
      return static_cast<std::size_t>(lab.cluster[static_cast<std::size_t>(s)]);
    };
    for (const auto& d : inner_) mark_[label(d)] = in;
    std::uint32_t n = 0;
    for (const auto& d : shell_) {
      auto& m = mark_[label(d)];
      if (m == in) {
        ++n;
        m = seen;
      }
    }
    return n;
  }

 private:
  const LatticeGraph& g_;
  std::vector<Cell> inner_, shell_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t gen_ = 0;
};

/// Column k-1 holds the fraction of centres with N >= k, k = 1..kmax.
class CrossingTailAccumulator {
 public:
  CrossingTailAccumulator(std::shared_ptr<const LatticeGraph> graph, double r1, double r2, std::vector<std::uint32_t> centers,
                          int kmax)
      : graph_(std::move(graph)), counter_(*graph_, r1, r2), centers_(std::move(centers)), kmax_(kmax), series_(static_cast<std::size_t>(kmax)),
        hits_(static_cast<std::size_t>(kmax), 0) {}

  void observe(const Snapshot& s) { observe(s.labels()); }
  void observe(const ClusterLabeling& lab) {
    std::vector<double> row(static_cast<std::size_t>(kmax_), 0.0);
    for (auto z : centers_) {
      const auto n = counter_.count(lab, z);
      for (int k = 1; k <= kmax_ && static_cast<int>(n) >= k; ++k) {
        row[static_cast<std::size_t>(k - 1)] += 1;
        ++hits_[static_cast<std::size_t>(k - 1)];
      }
      max_seen_ = std::max(max_seen_, n);
    }
    for (auto& v : row) v /= static_cast<double>(centers_.size());
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }
  const std::vector<std::uint64_t>& hits() const { return hits_; }
  std::uint32_t max_seen() const { return max_seen_; }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  CrossingCounter counter_;
  std::vector<std::uint32_t> centers_;
  int kmax_;
  SampleSeries series_;
  std::vector<std::uint64_t> hits_;
  std::uint32_t max_seen_ = 0;
};

struct TailFit {
  double lambda = 0.0;
  double stderr = 0.0;
  double upper95 = 0.0;  // one-sided 95% upper bound
  std::vector<int> ks;   // k values used
  bool valid = false;
};

struct CrossingTail {
  ScalingSeries tail;                // P(N >= k) vs k
  TailFit fit;
  std::vector<double> induction_gap;  // P(N>=k) - P(N>=1) P(N>=k-1), k = 2..kmax
  std::vector<double> induction_sigma;
  std::vector<SampleSeries> chains;
};

/// Tail probabilities with jackknife errors, the exponential fit
/// P(N >= k) ~ C lambda^k over k with at least `min_hits` events, and the
/// induction-step gaps.
inline CrossingTail crossing_tail_from_chains(std::vector<SampleSeries> chains, const std::vector<std::uint64_t>& hits,
                                              std::uint64_t min_hits = 50) {
  CrossingTail out;
  const auto est = estimate(chains);
  const std::size_t kmax = est.size();
  out.tail.observable = "crossing-tail";
  out.tail.scale_name = "k";
  for (std::size_t k = 0; k < kmax; ++k) out.tail.points.push_back({static_cast<double>(k + 1), est[k].mean, est[k].stderr, hits[k]});
  std::vector<double> x, y, s;
  for (std::size_t k = 0; k < kmax; ++k) {
    if (hits[k] < min_hits || !(est[k].mean > 0)) continue;
    out.fit.ks.push_back(static_cast<int>(k + 1));
    x.push_back(static_cast<double>(k + 1));
    y.push_back(std::log(est[k].mean));
    s.push_back(est[k].stderr > 0 ? est[k].stderr / est[k].mean : 1.0);
  }
  if (x.size() >= 2) {
    const auto lf = fit_line(x, y, s);
    out.fit.lambda = std::exp(lf.slope);
    out.fit.stderr = out.fit.lambda * lf.slope_stderr;
    out.fit.upper95 = std::exp(lf.slope + 1.6448536269514722 * lf.slope_stderr);
    out.fit.valid = true;
  }
  for (std::size_t k = 2; k <= kmax; ++k) {
    auto gap = [k](const std::vector<double>& m) { return m[k - 1] - m[0] * m[k - 2]; };
    const auto j = jackknife(chains, gap);
    out.induction_gap.push_back(j.mean);
    out.induction_sigma.push_back(j.stderr);
  }
  out.chains = std::move(chains);
  return out;
}

/// Crossing-count tail on a torus, annuli centred on a site grid spaced
/// `center_spacing` apart (continuum units).
inline CrossingTail crossing_count_tail(double r1, double r2, const LatticeSpec& spec, const CouplingSpec& coupling,
                                        const Schedule& schedule, int kmax = 5, double center_spacing = 0.0, int jobs = 1,
                                        std::uint64_t min_hits = 50) {
  auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
  if (center_spacing <= 0) center_spacing = r2;
  std::vector<std::uint32_t> centers;
  for (const auto& z : center_grid(*g, center_spacing)) {
    const auto s = g->site_at(std::lround(z.x / spec.spacing), std::lround(z.y / spec.spacing));
    centers.push_back(static_cast<std::uint32_t>(s));
  }
  auto [accs, sums] = run_ensemble(
      g, coupling, schedule, [&](std::uint32_t) { return CrossingTailAccumulator(g, r1, r2, centers, kmax); }, jobs);
  std::vector<SampleSeries> chains;
  std::vector<std::uint64_t> hits(static_cast<std::size_t>(kmax), 0);
  for (auto& a : accs) {
    chains.push_back(a.series());
    for (int k = 0; k < kmax; ++k) hits[static_cast<std::size_t>(k)] += a.hits()[static_cast<std::size_t>(k)];
  }
  return crossing_tail_from_chains(std::move(chains), hits, min_hits);
}

// ---------------------------------------------------------------------------
// Small-cluster moments

/// Per snapshot, averaged over tiled windows: column 0 is sum_i |C^_i|^2 and
/// column 1+m is the same sum restricted to diam(C^_i) <= eps[m].
class SmallClusterAccumulator {
 public:
  enum class Clusters { fk, spin };

  SmallClusterAccumulator(std::shared_ptr<const LatticeGraph> graph, std::vector<double> eps, int windows_per_side = 4,
                          Clusters which = Clusters::fk)
      : graph_(std::move(graph)), eps_(std::move(eps)), which_(which), series_(eps_.size() + 1) {
    for (const auto& w : tiled_windows(*graph_, windows_per_side)) windows_.push_back(sites_in_window(*graph_, w));
  }

  void observe(const Snapshot& s) {
    if (which_ == Clusters::fk) observe(s.labels());
    else observe(label_site_clusters(*graph_, s.spins().color));
  }

  void observe(const ClusterLabeling& lab) {
    std::vector<double> row(eps_.size() + 1, 0.0);
    for (const auto& w : windows_) {
      const auto stats = cluster_stats(lab, *graph_, w);
      for (const auto& st : stats) {
        const double c2 = static_cast<double>(st.restricted) * st.restricted;
        row[0] += c2;
        for (std::size_t m = 0; m < eps_.size(); ++m)
          if (st.diameter <= eps_[m]) row[m + 1] += c2;
      }
    }
    for (auto& v : row) v /= static_cast<double>(windows_.size());
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }
  const std::vector<double>& eps() const { return eps_; }
  std::size_t window_sites() const { return windows_.front().size(); }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  std::vector<double> eps_;
  Clusters which_;
  std::vector<std::vector<WindowSite>> windows_;
  SampleSeries series_;
};

/// Default cutoffs sqrt(2) 2^-m, m = 1..6, increasing.
inline std::vector<double> default_eps_list() {
  std::vector<double> e;
  for (int m = 6; m >= 1; --m) e.push_back(std::sqrt(2.0) * std::ldexp(1.0, -m));
  return e;
}

/// S(eps) = Theta^2 E sum_{diam <= eps} |C^|^2. With theta <= 0 the
/// same-data normalization Theta^-2 = E sum |C^|^2 is used, with jackknife
/// errors on the ratio.
inline ScalingSeries small_cluster_moment(std::span<const SampleSeries> chains, std::span<const double> eps, double theta = 0.0) {
  ScalingSeries out;
  out.observable = "small-cluster-moment";
  out.scale_name = "eps";
  for (std::size_t m = 0; m < eps.size(); ++m) {
    Estimate e;
    if (theta > 0) {
      const auto est = estimate(chains);
      e = {theta * theta * est[m + 1].mean, theta * theta * est[m + 1].stderr, est[m + 1].samples};
    } else {
      e = jackknife(chains, [m](const std::vector<double>& v) { return v[m + 1] / v[0]; });
    }
    out.points.push_back({eps[m], e.mean, e.stderr});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypothesis ratios

struct HypothesisRatios {
  ScalingSeries lower;  // tau(r) / (eps'^{2 theta} tau(eps' r))
  ScalingSeries upper;  // tau(r) / tau(eps' r)
};

/// Ratios at every profile radius r for which eps' r lies inside the profile.
inline HypothesisRatios hypothesis_ratio(const RadialProfile& profile, double eps_prime, double two_theta) {
  if (!(eps_prime > 0 && eps_prime < 1)) throw Error(ErrorCode::invalid_argument, "eps' must lie in (0, 1)");
  HypothesisRatios out;
  out.lower.observable = "hypothesis-lower";
  out.upper.observable = "hypothesis-upper";
  out.lower.scale_name = out.upper.scale_name = "r";
  if (profile.points.empty()) throw Error(ErrorCode::insufficient_range, "empty profile");
  const double rmin = profile.points.front().scale;
  for (const auto& p : profile.points) {
    const double rs = eps_prime * p.scale;
    if (rs < rmin * (1 - 1e-9)) continue;
    const double t = interpolate_loglog(profile, rs);
    const double up = p.value / t;
    const double rel = p.value > 0 ? p.stderr / p.value : 0.0;
    out.upper.points.push_back({p.scale, up, up * rel});
    const double lo = up / std::pow(eps_prime, two_theta);
    out.lower.points.push_back({p.scale, lo, lo * rel});
  }
  if (out.lower.points.empty()) throw Error(ErrorCode::insufficient_range, "profile does not cover eps' r for any r");
  return out;
}

// ---------------------------------------------------------------------------
// Field normalization checks

/// Per snapshot: sum of spins over each tiled window, for the snapshot's own
/// colours and `recolorings - 1` fresh cluster colourings. Columns:
/// mean of X and of X^2 over windows and colourings (X = window spin sum).
class WindowSpinAccumulator {
 public:
  WindowSpinAccumulator(std::shared_ptr<const LatticeGraph> graph, RandomStream rng, int windows_per_side = 4, int recolorings = 4)
      : graph_(std::move(graph)), rng_(rng), recolorings_(recolorings) {
    for (const auto& w : tiled_windows(*graph_, windows_per_side)) windows_.push_back(sites_in_window(*graph_, w));
  }
  void observe(const Snapshot& s) {
    const auto& lab = s.labels();
    std::vector<double> sign(lab.count);
    double sx = 0, sx2 = 0;
    for (int r = 0; r < recolorings_; ++r) {
      for (std::uint32_t c = 0; c < lab.count; ++c) sign[c] = (rng_.next_u32() & 1u) ? -1.0 : 1.0;
      for (const auto& w : windows_) {
        double x = 0;
        if (r == 0)
          for (const auto& ws : w) x += s.spins().spin(ws.site);
        else
          for (const auto& ws : w) x += sign[static_cast<std::size_t>(lab.cluster[ws.site])];
        sx += x;
        sx2 += x * x;
      }
    }
    const double n = static_cast<double>(windows_.size()) * recolorings_;
    const double row[2] = {sx / n, sx2 / n};
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }

 private:
  std::shared_ptr<const LatticeGraph> graph_;
  RandomStream rng_;
  int recolorings_;
  std::vector<std::vector<WindowSite>> windows_;
  SampleSeries series_{2};
};

// ---------------------------------------------------------------------------
// Magnetization

/// Fraction of sites in the ghost cluster (0 without a field).
class MagnetizationAccumulator {
 public:
  void observe(const Snapshot& s) {
    const auto& lab = s.labels();
    const double m = lab.ghost_cluster < 0 ? 0.0
                                           : static_cast<double>(lab.sizes[static_cast<std::size_t>(lab.ghost_cluster)]) /
                                                 static_cast<double>(lab.cluster.size());
    series_.push(m);
  }
  const SampleSeries& series() const { return series_; }

 private:
  SampleSeries series_{1};
};

inline Estimate magnetization(const LatticeSpec& spec, const CouplingSpec& coupling, const Schedule& schedule, int jobs = 1) {
  if (coupling.h == 0.0) return {0.0, 0.0, static_cast<std::size_t>(schedule.chains) * schedule.snapshots()};
  auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
  auto [accs, sums] = run_ensemble(g, coupling, schedule, [](std::uint32_t) { return MagnetizationAccumulator(); }, jobs);
  std::vector<SampleSeries> chains;
  for (auto& a : accs) chains.push_back(a.series());
  return estimate(chains).front();
}

struct MagnetizationCurve {
  ScalingSeries curve;  // M vs h
  FitResult fit;        // exponent = 1/delta
  bool fitted = false;
};

/// M(h) at fixed p for each field value, and the power-law fit M ~ h^{1/delta}.
inline MagnetizationCurve magnetization_curve(std::vector<double> hs, const LatticeSpec& spec, CouplingSpec coupling,
                                              const Schedule& schedule, int jobs = 1) {
  std::sort(hs.begin(), hs.end());
  MagnetizationCurve out;
  out.curve.observable = "magnetization";
  out.curve.scale_name = "h";
  out.curve.spacing = spec.spacing;
  for (std::size_t k = 0; k < hs.size(); ++k) {
    coupling.h = hs[k];
    Schedule s = schedule;
    s.seed = schedule.seed + 0x9E3779B97F4A7C15ULL * (k + 1);
    const auto e = magnetization(spec, coupling, s, jobs);
    out.curve.points.push_back({hs[k], e.mean, e.stderr});
  }
  std::size_t positive = 0;
  for (const auto& p : out.curve.points) positive += p.scale > 0 && p.value > 0;
  if (positive >= 3 && positive == out.curve.points.size()) {
    out.fit = fit_power_law(out.curve);
    out.fitted = true;
  }
  return out;
}

/// Field strength h = lambda a^{15/8}; throws h-underflow when lambda > 0
/// but the field or its ghost-bond probability is not representable.
inline double plateau_field(double a, double lambda, double p) {
  if (lambda < 0) throw Error(ErrorCode::invalid_argument, "lambda must be >= 0");
  const double h = lambda * std::pow(a, 15.0 / 8.0);
  if (lambda > 0 && (h == 0.0 || CouplingSpec{Model::fk_potts, 2, p, h}.ghost_probability() == 0.0))
    throw Error(ErrorCode::h_underflow, "h = lambda a^(15/8) underflows");
  return h;
}

/// a^{-1/8} M(h = lambda a^{15/8}) for each a, with M supplied by `m(h, a)`.
template <class M>
ScalingSeries near_critical_plateau(std::vector<double> as, double lambda, double p, M&& m) {
  std::sort(as.begin(), as.end(), std::greater<>());
  ScalingSeries out;
  out.observable = "plateau";
  out.scale_name = "a";
  for (double a : as) {
    const double h = plateau_field(a, lambda, p);
    const Estimate e = lambda == 0 ? Estimate{0.0, 0.0, 0} : m(h, a);
    const double f = std::pow(a, -1.0 / 8.0);
    out.points.push_back({a, f * e.mean, f * e.stderr});
  }
  return out;
}

/// Sampled plateau: M measured on the padded torus of window size 1/a.
inline ScalingSeries near_critical_plateau(std::vector<double> as, double lambda, const Schedule& schedule, int padding = 4,
                                           int jobs = 1) {
  const double pc = critical_point(Model::fk_potts, 2);
  return near_critical_plateau(std::move(as), lambda, pc, [&](double h, double a) {
    const int n = static_cast<int>(std::lround(1.0 / a));
    Schedule s = schedule;
    s.seed = schedule.seed + static_cast<std::uint64_t>(n);
    return magnetization(padded_torus(LatticeKind::square, n, padding), {Model::fk_potts, 2, pc, h}, s, jobs);
  });
}

/// Max/min over the last three points (the smallest spacings).
inline double plateau_ratio(const ScalingSeries& s) {
  if (s.points.size() < 3) throw Error(ErrorCode::too_few_points, "plateau needs three points");
  double lo = 1e300, hi = -1e300;
  for (std::size_t k = s.points.size() - 3; k < s.points.size(); ++k) {
    lo = std::min(lo, s.points[k].value);
    hi = std::max(hi, s.points[k].value);
  }
  return hi / lo;
}

/// Bond density for T - T_c = c a (temperature in units of the coupling),
/// for the q-state model on the square lattice.
inline double near_critical_p(int q, double c, double a) {
  const double pc = critical_point(Model::fk_potts, q);
  const double beta_c = -0.5 * std::log1p(-pc);
  const double T = 1.0 / beta_c + c * a;
  if (!(T > 0)) throw Error(ErrorCode::invalid_argument, "temperature must stay positive");
  return CouplingSpec::p_from_beta(1.0 / T);
}

// ---------------------------------------------------------------------------
// Potts colour signs

/// Per snapshot, over clusters touching the window (or all clusters): mean of
/// eta^k, of (eta^k)^2 and of eta^k eta^l (k < l), followed by the largest
/// |sum_k eta^k| seen.
class PottsSignAccumulator {
 public:
  explicit PottsSignAccumulator(int q) : q_(q) {
    for (int k = 1; k <= q; ++k) signs_.push_back(potts_signs(q, k));
    width_ = static_cast<std::size_t>(2 * q + q * (q - 1) / 2 + 1);
    series_ = SampleSeries(width_);
  }
  void observe(const Snapshot& s) { observe(s.labels(), s.spins()); }
  void observe(const ClusterLabeling& lab, const SpinConfig& spins) {
    std::vector<std::uint8_t> color(lab.count, 0);
    for (std::size_t x = 0; x < lab.cluster.size(); ++x) color[static_cast<std::size_t>(lab.cluster[x])] = spins.color[x];
    std::vector<double> row(width_, 0.0);
    double worst = 0.0;
    for (std::uint32_t c = 0; c < lab.count; ++c) {
      std::size_t col = 0;
      double total = 0.0;
      for (int k = 0; k < q_; ++k) {
        const double e = signs_[static_cast<std::size_t>(k)][color[c]];
        row[col++] += e;
        total += e;
      }
      for (int k = 0; k < q_; ++k) {
        const double e = signs_[static_cast<std::size_t>(k)][color[c]];
        row[col++] += e * e;
      }
      for (int k = 0; k < q_; ++k)
        for (int l = k + 1; l < q_; ++l)
          row[col++] += signs_[static_cast<std::size_t>(k)][color[c]] * signs_[static_cast<std::size_t>(l)][color[c]];
      worst = std::max(worst, std::abs(total));
    }
    for (std::size_t i = 0; i + 1 < width_; ++i) row[i] /= lab.count;
    row[width_ - 1] = worst;
    series_.push(row);
  }
  const SampleSeries& series() const { return series_; }
  int q() const { return q_; }

 private:
  int q_;
  std::vector<std::vector<double>> signs_;
  std::size_t width_ = 0;
  SampleSeries series_{1};
};

}  // namespace fkfield
