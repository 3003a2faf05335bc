#pragma once
// The smeared magnetization field, its normalization, and the rescaled
// cluster-area families that represent it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fkfield/clusters.hpp"
#include "fkfield/config.hpp"
#include "fkfield/error.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/rng.hpp"
#include "fkfield/sampler.hpp"
#include "fkfield/stats.hpp"

namespace fkfield {

// ---------------------------------------------------------------------------
// Exact summation

/// Correctly rounded floating-point sum (Shewchuk partials). The result does
/// not depend on the order in which terms are added.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  double value() const {
    if (partials_.empty()) return 0.0;
    std::size_t n = partials_.size();
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      lo = y - (hi - x);
      if (lo != 0.0) break;
    }
    // Round-half-even correction across the remaining partials.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

// ---------------------------------------------------------------------------
// Test functions

class TestFunction {
 public:
  enum class Kind { zero, indicator, gaussian };

  static TestFunction zero() { return TestFunction(Kind::zero, {}, 0.0, Window{{0, 0}, 1e-9, 1e-9}); }
  /// Indicator of a closed rectangle.
  static TestFunction indicator(Window w) { return TestFunction(Kind::indicator, {}, 0.0, w); }
  static TestFunction unit_square() { return indicator(Window{{0, 0}, 1, 1}); }
  /// Indicator of the L x L square [0, L]^2.
  static TestFunction square(double L) { return indicator(Window{{0, 0}, L, L}); }
  /// exp(-|z - c|^2 / (2 sigma^2)), truncated to zero beyond 3 sigma.
  static TestFunction gaussian(Point center, double sigma) {
    if (!(sigma > 0)) throw Error(ErrorCode::invalid_argument, "gaussian width must be > 0");
    return TestFunction(Kind::gaussian, center, sigma, Window{{center.x - 3 * sigma, center.y - 3 * sigma}, 6 * sigma, 6 * sigma});
  }

  Kind kind() const { return kind_; }
  /// Bounding box of the support.
  const Window& support() const { return support_; }
  Point center() const { return center_; }
  double sigma() const { return sigma_; }

  double operator()(Point z) const {
    switch (kind_) {
      case Kind::zero: return 0.0;
      case Kind::indicator: {
        constexpr double tol = 1e-9;
        const Point d = z - support_.corner;
        return d.x >= -tol && d.y >= -tol && d.x <= support_.width + tol && d.y <= support_.height + tol ? 1.0 : 0.0;
      }
      case Kind::gaussian: {
        const double r2 = (z.x - center_.x) * (z.x - center_.x) + (z.y - center_.y) * (z.y - center_.y);
        if (r2 > 9 * sigma_ * sigma_) return 0.0;
        return std::exp(-r2 / (2 * sigma_ * sigma_));
      }
    }
    return 0.0;
  }

 private:
  TestFunction(Kind k, Point c, double s, Window w) : kind_(k), center_(c), sigma_(s), support_(w) {}
  Kind kind_;
  Point center_;
  double sigma_;
  Window support_;
};

/// Integral of f g over the plane by the midpoint rule on a fine grid
/// covering the intersection of the supports.
inline double overlap_integral(const TestFunction& f, const TestFunction& g, int cells_per_side = 2000) {
  const auto& a = f.support();
  const auto& b = g.support();
  const double x0 = std::max(a.corner.x, b.corner.x);
  const double y0 = std::max(a.corner.y, b.corner.y);
  const double x1 = std::min(a.corner.x + a.width, b.corner.x + b.width);
  const double y1 = std::min(a.corner.y + a.height, b.corner.y + b.height);
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double hx = (x1 - x0) / cells_per_side;
  const double hy = (y1 - y0) / cells_per_side;
  double s = 0.0;
  for (int j = 0; j < cells_per_side; ++j)
    for (int i = 0; i < cells_per_side; ++i) {
      const Point z{x0 + (i + 0.5) * hx, y0 + (j + 0.5) * hy};
      s += f(z) * g(z);
    }
  return s * hx * hy;
}

// ---------------------------------------------------------------------------
// Colour signs

/// Sign of each colour seen along direction k (1-based): +1 for colour k,
/// -1/(q-1) otherwise.
inline std::vector<double> potts_signs(int q, int k) {
  if (q < 2) throw Error(ErrorCode::invalid_argument, "colour signs need q >= 2");
  if (k < 1 || k > q) throw Error(ErrorCode::invalid_argument, "direction k must be in 1..q");
  std::vector<double> v(static_cast<std::size_t>(q), -1.0 / (q - 1));
  v[static_cast<std::size_t>(k - 1)] = 1.0;
  return v;
}

/// Colour 0 -> +1, others -> -1 (the Ising convention for any q).
inline std::vector<double> ising_signs(int q = 2) {
  std::vector<double> v(static_cast<std::size_t>(std::max(q, 2)), -1.0);
  v[0] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Field values

/// Sites in the support box of f (periodic images resolved); throws when the
/// box does not fit in the lattice.
inline std::vector<WindowSite> support_sites(const LatticeGraph& g, const TestFunction& f) {
  const auto& w = f.support();
  if (!box_within_lattice(g, w.corner, w.corner + Point{w.width, w.height}))
    throw Error(ErrorCode::support_exceeds_lattice, "test function support exceeds the lattice");
  return sites_in_window(g, w);
}

/// Theta * sum_z f(z) sign(colour(z)).
inline double field_value(const LatticeGraph& g, const SpinConfig& spins, double theta, const TestFunction& f,
                          std::span<const double> signs = {}) {
  if (f.kind() == TestFunction::Kind::zero) return 0.0;
  const auto sites = support_sites(g, f);
  const auto fallback = ising_signs(spins.q);
  if (signs.empty()) signs = fallback;
  ExactSum sum;
  for (const auto& ws : sites) {
    const double v = f(ws.at);
    if (v != 0.0) sum.add(v * signs[spins.color[ws.site]]);
  }
  return theta * sum.value();
}

/// Same as field_value with precomputed support sites and f values.
inline double field_value(const SpinConfig& spins, double theta, std::span<const WindowSite> sites,
                          std::span<const double> fvals, std::span<const double> signs) {
  ExactSum sum;
  for (std::size_t k = 0; k < sites.size(); ++k)
    if (fvals[k] != 0.0) sum.add(fvals[k] * signs[spins.color[sites[k].site]]);
  return theta * sum.value();
}

// ---------------------------------------------------------------------------
// Normalization

enum class ThetaMethod { two_point_sum, cluster_moment };

inline const char* to_string(ThetaMethod m) { return m == ThetaMethod::two_point_sum ? "two-point-sum" : "cluster-moment"; }

struct ThetaEstimate {
  double value = 0.0;
  ThetaMethod method = ThetaMethod::cluster_moment;
  double stderr = 0.0;
  double spacing = 0.0;
  double inverse_square = 0.0;  // Theta^-2 estimate
  double inverse_square_stderr = 0.0;
  bool same_data = true;  // estimated from the ensemble it is applied to
};

/// Sum over clusters of the squared number of window sites. `count` is
/// scratch space of size >= number of clusters, all zeros on entry and exit.
inline double window_cluster_moment(const ClusterLabeling& lab, std::span<const WindowSite> window,
                                    std::vector<std::uint32_t>& count) {
  if (count.size() < lab.count) count.assign(lab.count, 0);
  for (const auto& ws : window) ++count[static_cast<std::size_t>(lab.cluster[ws.site])];
  double s = 0.0;
  for (const auto& ws : window) {
    auto& c = count[static_cast<std::size_t>(lab.cluster[ws.site])];
    if (c) {
      s += static_cast<double>(c) * c;
      c = 0;
    }
  }
  return s;
}

/// The unit window translated to a grid of `per_side`^2 positions spread over
/// the torus (or just the unit window on non-periodic lattices).
inline std::vector<Window> tiled_windows(const LatticeGraph& g, int per_side) {
  std::vector<Window> out;
  if (!g.periodic || per_side <= 1) return {Window{{0, 0}, 1, 1}};
  const double L = g.period * g.spec.spacing;
  const int n = static_cast<int>(std::lround(1.0 / g.spec.spacing));
  const int step = std::max(1, static_cast<int>(std::lround(L / per_side / g.spec.spacing)));
  for (int b = 0; b < per_side; ++b)
    for (int a = 0; a < per_side; ++a) {
      const Cell c{a * step, b * step};
      out.push_back({g.spec.spacing * embed(g.spec.kind, c.i, c.j), 1.0, 1.0});
    }
  (void)n;
  return out;
}

/// Per-snapshot Theta^-2 estimates by both routes.
///
/// Cluster moment: mean over the tiled windows of sum_i |C^_i|^2.
/// Two-point sum: sum over window pairs of the connectivity, with the
/// connectivity at each displacement estimated from `base_points` random
/// base points per snapshot (translation averaging on the torus). On
/// non-periodic lattices the pair sum is taken explicitly over the window.
class ThetaAccumulator {
 public:
  ThetaAccumulator(std::shared_ptr<const LatticeGraph> graph, RandomStream rng, int windows_per_side = 4,
                   int base_points = 32)
      : graph_(std::move(graph)), rng_(rng), base_points_(base_points) {
    for (const auto& w : tiled_windows(*graph_, windows_per_side)) windows_.push_back(sites_in_window(*graph_, w));
    if (windows_.front().empty()) throw Error(ErrorCode::invalid_argument, "window holds no sites");
    if (graph_->periodic && base_points_ > 0) build_pair_weights();
  }

  /// Columns: cluster moment, two-point sum, their difference. With
  /// base_points = 0 on a torus the two-point columns are NaN (not computed).
  const SampleSeries& series() const { return series_; }

  void observe(const Snapshot& s) { observe(s.labels()); }

  void observe(const ClusterLabeling& lab) {
    double moment = 0.0;
    for (const auto& w : windows_) moment += window_cluster_moment(lab, w, count_);
    moment /= static_cast<double>(windows_.size());
    const double pairs = !graph_->periodic ? pair_sum_explicit(lab)
                         : (base_points_ > 0 ? pair_sum_sampled(lab) : std::numeric_limits<double>::quiet_NaN());
    const double row[3] = {moment, pairs, moment - pairs};
    series_.push(row);
  }

  std::size_t window_sites() const { return windows_.front().size(); }

 private:
  void build_pair_weights() {
    // Displacement counts c(d) for pairs in one window, in lattice steps.
    const auto& w = windows_.front();
    const LatticeGraph& g = *graph_;
    std::int32_t imin = INT32_MAX, jmin = INT32_MAX, imax = INT32_MIN, jmax = INT32_MIN;
    std::vector<Cell> cells;
    for (const auto& ws : w) {
      // Unwrapped lattice coordinates of the image inside the window.
      const double a = g.spec.spacing;
      Cell c;
      if (g.spec.kind == LatticeKind::square) {
        c = {static_cast<int>(std::lround(ws.at.x / a)), static_cast<int>(std::lround(ws.at.y / a))};
      } else {
        const int j = static_cast<int>(std::lround(ws.at.y / a / (std::sqrt(3.0) / 2)));
        c = {static_cast<int>(std::lround(ws.at.x / a - 0.5 * j)), j};
      }
      cells.push_back(c);
      imin = std::min(imin, c.i);
      jmin = std::min(jmin, c.j);
      imax = std::max(imax, c.i);
      jmax = std::max(jmax, c.j);
    }
    span_i_ = imax - imin;
    span_j_ = jmax - jmin;
    const int wi = 2 * span_i_ + 1;
    const int wj = 2 * span_j_ + 1;
    std::vector<double> weight(static_cast<std::size_t>(wi) * wj, 0.0);
    // Window rows are runs of consecutive cells; c(d) is a sum of run overlaps.
    const int rows = span_j_ + 1;
    std::vector<int> lo(static_cast<std::size_t>(rows), INT32_MAX), hi(static_cast<std::size_t>(rows), INT32_MIN), cnt(static_cast<std::size_t>(rows), 0);
    for (const Cell& c : cells) {
      const auto r = static_cast<std::size_t>(c.j - jmin);
      lo[r] = std::min(lo[r], c.i);
      hi[r] = std::max(hi[r], c.i);
      ++cnt[r];
    }
    for (std::size_t r = 0; r < lo.size(); ++r)
      if (cnt[r] > 0 && cnt[r] != hi[r] - lo[r] + 1) throw Error(ErrorCode::invalid_argument, "window rows must be contiguous");
    for (int r1 = 0; r1 < rows; ++r1) {
      if (!cnt[static_cast<std::size_t>(r1)]) continue;
      for (int r2 = 0; r2 < rows; ++r2) {
        if (!cnt[static_cast<std::size_t>(r2)]) continue;
        const int dj = r2 - r1;
        for (int di = -span_i_; di <= span_i_; ++di) {
          const int a0 = std::max(lo[static_cast<std::size_t>(r1)] + di, lo[static_cast<std::size_t>(r2)]);
          const int a1 = std::min(hi[static_cast<std::size_t>(r1)] + di, hi[static_cast<std::size_t>(r2)]);
          if (a1 >= a0) weight[static_cast<std::size_t>((di + span_i_) + wi * (dj + span_j_))] += a1 - a0 + 1;
        }
      }
    }
    for (int dj = -span_j_; dj <= span_j_; ++dj)
      for (int di = -span_i_; di <= span_i_; ++di) {
        const double c = weight[static_cast<std::size_t>((di + span_i_) + wi * (dj + span_j_))];
        if (c > 0) offsets_.push_back({di, dj, c});
      }
  }

  double pair_sum_sampled(const ClusterLabeling& lab) {
    const LatticeGraph& g = *graph_;
    double total = 0.0;
    for (int b = 0; b < base_points_; ++b) {
      const auto x = static_cast<std::uint32_t>(rng_.below(g.site_count()));
      const Cell cx = g.cells[x];
      const auto cl = lab.cluster[x];
      double s = 0.0;
      for (const auto& o : offsets_) {
        const auto y = static_cast<std::uint32_t>(g.site_at(cx.i + o.di, cx.j + o.dj));
        if (lab.cluster[y] == cl) s += o.weight;
      }
      total += s;
    }
    return total / base_points_;
  }

  double pair_sum_explicit(const ClusterLabeling& lab) const {
    const auto& w = windows_.front();
    double s = 0.0;
    for (const auto& a : w)
      for (const auto& b : w) s += lab.cluster[a.site] == lab.cluster[b.site];
    return s;
  }

  struct Offset {
    int di, dj;
    double weight;
  };

  std::shared_ptr<const LatticeGraph> graph_;
  RandomStream rng_;
  int base_points_;
  std::vector<std::vector<WindowSite>> windows_;
  std::vector<Offset> offsets_;
  int span_i_ = 0, span_j_ = 0;
  std::vector<std::uint32_t> count_;
  SampleSeries series_{3};
};

/// Theta from a Theta^-2 estimate (mean, stderr) by the delta method.
inline ThetaEstimate theta_from_inverse_square(Estimate inv, ThetaMethod method, double spacing, bool same_data = true) {
  if (!(inv.mean > 0)) throw Error(ErrorCode::invalid_argument, "Theta^-2 estimate must be positive");
  ThetaEstimate t;
  t.inverse_square = inv.mean;
  t.inverse_square_stderr = inv.stderr;
  t.value = 1.0 / std::sqrt(inv.mean);
  t.stderr = 0.5 * std::pow(inv.mean, -1.5) * inv.stderr;
  t.method = method;
  t.spacing = spacing;
  t.same_data = same_data;
  return t;
}

/// Theta from the series of one or more ThetaAccumulators.
inline ThetaEstimate theta_estimate(std::span<const SampleSeries> chains, ThetaMethod method, double spacing) {
  const auto est = estimate(chains);
  return theta_from_inverse_square(est[method == ThetaMethod::cluster_moment ? 0 : 1], method, spacing);
}

// ---------------------------------------------------------------------------
// Rescaled area families

enum class SignScheme { snapshot, ising_sign, potts };

struct AreaEntry {
  std::uint32_t cluster_id = 0;
  double weight = 0.0;  // Theta |C^|
  double diameter = 0.0;
  double sign = 1.0;
  std::uint32_t sites = 0;
  std::vector<WindowSite> support;  // filled when supports are retained
};

struct AreaMeasureFamily {
  double theta = 0.0;
  double epsilon = 0.0;
  bool supports_retained = false;
  std::vector<AreaEntry> entries;

  double sum_squares() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.weight * e.weight;
    return s;
  }

  /// CSV with columns cluster_id, W, diam, sign, n_sites.
  void write_csv(std::ostream& os) const {
    os << "cluster_id,W,diam,sign,n_sites\n";
    char buf[128];
    for (const auto& e : entries) {
      std::snprintf(buf, sizeof buf, "%u,%.17g,%.17g,%.17g,%u\n", e.cluster_id, e.weight, e.diameter, e.sign, e.sites);
      os << buf;
    }
  }
};

struct SignOptions {
  SignScheme scheme = SignScheme::snapshot;
  int direction = 1;  // Potts direction k (1-based)
};

/// W_i = Theta |C^_i| for every window cluster with diam(C^_i) > epsilon
/// (all window clusters when epsilon = 0), with one sign per cluster.
/// ising_sign draws a fresh sign per included cluster from `rng` in cluster
/// order; snapshot and potts read the snapshot's colour.
inline AreaMeasureFamily rescaled_area_family(const ClusterLabeling& lab, const SpinConfig* spins,
                                              std::span<const ClusterStat> stats, std::span<const WindowSite> window,
                                              double theta, double epsilon, SignOptions signs, RandomStream* rng,
                                              bool retain_supports = false) {
  if (epsilon < 0) throw Error(ErrorCode::invalid_argument, "epsilon must be >= 0");
  AreaMeasureFamily fam;
  fam.theta = theta;
  fam.epsilon = epsilon;
  fam.supports_retained = retain_supports;
  std::vector<double> sign_of_color;
  if (signs.scheme != SignScheme::ising_sign && !spins)
    throw Error(ErrorCode::invalid_argument, "sign scheme needs the snapshot colours");
  if (signs.scheme == SignScheme::ising_sign && !rng) throw Error(ErrorCode::invalid_argument, "sign scheme needs a random stream");
  if (signs.scheme == SignScheme::snapshot) sign_of_color = ising_signs(spins->q);
  if (signs.scheme == SignScheme::potts) sign_of_color = potts_signs(spins->q, signs.direction);

  std::vector<std::int64_t> slot;
  if (retain_supports) slot.assign(lab.count, -1);
  for (const auto& st : stats) {
    if (epsilon > 0 && !(st.diameter > epsilon)) continue;
    AreaEntry e;
    e.cluster_id = st.id;
    e.weight = theta * st.restricted;
    e.diameter = st.diameter;
    e.sites = st.restricted;
    if (signs.scheme == SignScheme::ising_sign) {
      e.sign = (rng->next_u32() & 1u) ? -1.0 : 1.0;
    } else {
      // All sites of a cluster share one colour; read it at any member.
      e.sign = 0.0;
    }
    if (retain_supports) slot[st.id] = static_cast<std::int64_t>(fam.entries.size());
    fam.entries.push_back(std::move(e));
  }
  if (signs.scheme != SignScheme::ising_sign || retain_supports) {
    std::vector<std::int64_t> pos(lab.count, -1);
    for (std::size_t k = 0; k < fam.entries.size(); ++k) pos[fam.entries[k].cluster_id] = static_cast<std::int64_t>(k);
    for (const auto& ws : window) {
      const auto p = pos[static_cast<std::size_t>(lab.cluster[ws.site])];
      if (p < 0) continue;
      auto& e = fam.entries[static_cast<std::size_t>(p)];
      if (signs.scheme != SignScheme::ising_sign) e.sign = sign_of_color[spins->color[ws.site]];
      if (retain_supports) e.support.push_back(ws);
    }
  }
  return fam;
}

/// sum_i sign_i Theta sum_{x in C^_i} f(x).
inline double cutoff_field_value(const AreaMeasureFamily& fam, const TestFunction& f) {
  if (!fam.supports_retained) throw Error(ErrorCode::supports_not_retained, "area family was built without site supports");
  ExactSum sum;
  for (const auto& e : fam.entries)
    for (const auto& ws : e.support) {
      const double v = f(ws.at);
      if (v != 0.0) sum.add(v * e.sign);
    }
  return fam.theta * sum.value();
}

/// Theta^2 sum over window clusters with diam <= epsilon of |C^|^2.
inline double small_cluster_sum(std::span<const ClusterStat> stats, double theta, double epsilon) {
  double s = 0.0;
  for (const auto& st : stats)
    if (st.diameter <= epsilon) s += static_cast<double>(st.restricted) * st.restricted;
  return theta * theta * s;
}

}  // namespace fkfield
