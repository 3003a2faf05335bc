#pragma once
// Scale-indexed series with error bars and the fits applied to them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fkfield/error.hpp"
#include "fkfield/stats.hpp"

namespace fkfield {

struct SeriesPoint {
  double scale = 0.0;
  double value = 0.0;
  double stderr = 0.0;
  std::uint64_t hits = 0;  // event count, where meaningful
};

/// Observable indexed by a scale (r, a, epsilon, h or k).
struct ScalingSeries {
  std::string observable;
  std::string scale_name = "scale";
  std::string boundary;
  double spacing = 0.0;
  std::vector<SeriesPoint> points;

  std::vector<double> scales() const {
    std::vector<double> s;
    for (const auto& p : points) s.push_back(p.scale);
    return s;
  }
  std::vector<double> values() const {
    std::vector<double> s;
    for (const auto& p : points) s.push_back(p.value);
    return s;
  }

  /// CSV with columns scale, value, stderr (17 significant digits).
  void write_csv(std::ostream& os) const {
    os << "scale,value,stderr\n";
    char buf[96];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.scale, p.value, p.stderr);
      os << buf;
    }
  }
};

using RadialProfile = ScalingSeries;

struct FitResult {
  double exponent = 0.0;
  double amplitude = 0.0;
  double stderr = 0.0;
  double goodness = 0.0;  // weighted residual sum of squares
  double lo = 0.0;        // fit range actually used
  double hi = 0.0;
  std::size_t points = 0;
  std::size_t chains = 0;
  std::string error_method = "wls";
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
  double chi2 = 0.0;
  std::size_t dof = 0;
};

/// Weighted least squares y = intercept + slope x. With sigma empty (or any
/// sigma zero) all points get equal weight and errors come from the scatter.
/// Parameter errors are scaled by sqrt(max(1, chi2/dof)).
inline LineFit fit_line(std::span<const double> x, std::span<const double> y, std::span<const double> sigma = {}) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error(ErrorCode::too_few_points, "need at least two points");
  bool weighted = sigma.size() == n;
  if (weighted)
    for (double s : sigma) weighted = weighted && s > 0 && std::isfinite(s);
  std::vector<double> w(n, 1.0);
  if (weighted)
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / (sigma[i] * sigma[i]);
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    S += w[i];
    Sx += w[i] * x[i];
    Sy += w[i] * y[i];
    Sxx += w[i] * x[i] * x[i];
    Sxy += w[i] * x[i] * y[i];
  }
  const double det = S * Sxx - Sx * Sx;
  if (!(det > 0)) throw Error(ErrorCode::too_few_points, "degenerate abscissae");
  LineFit f;
  f.slope = (S * Sxy - Sx * Sy) / det;
  f.intercept = (Sxx * Sy - Sx * Sxy) / det;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    f.chi2 += w[i] * r * r;
  }
  f.dof = n - 2;
  double scale = 1.0;
  if (!weighted) scale = f.dof > 0 ? f.chi2 / static_cast<double>(f.dof) : 0.0;
  else if (f.dof > 0) scale = std::max(1.0, f.chi2 / static_cast<double>(f.dof));
  f.slope_stderr = std::sqrt(S / det * scale);
  f.intercept_stderr = std::sqrt(Sxx / det * scale);
  return f;
}

namespace detail {

inline std::vector<std::size_t> points_in_range(std::span<const double> scales, double lo, double hi) {
  constexpr double tol = 1e-9;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scales.size(); ++i)
    if (scales[i] >= lo * (1 - tol) && scales[i] <= hi * (1 + tol)) idx.push_back(i);
  return idx;
}

}  // namespace detail

/// value ~ amplitude * scale^exponent by weighted least squares on
/// (log scale, log value), weights 1 / relative-stderr^2.
inline FitResult fit_power_law(const ScalingSeries& s, double lo = 0.0,
                               double hi = std::numeric_limits<double>::infinity()) {
  const auto scales = s.scales();
  const auto idx = detail::points_in_range(scales, lo, hi);
  if (idx.size() < 3) throw Error(ErrorCode::too_few_points, "power-law fit needs at least 3 points in range");
  std::vector<double> x, y, sig;
  bool all_err = true;
  for (auto i : idx) {
    const auto& p = s.points[i];
    if (!(p.value > 0) || !(p.scale > 0)) throw Error(ErrorCode::nonpositive_values, "power-law fit needs positive values");
    x.push_back(std::log(p.scale));
    y.push_back(std::log(p.value));
    sig.push_back(p.stderr / p.value);
    all_err = all_err && p.stderr > 0;
  }
  const auto lf = fit_line(x, y, all_err ? std::span<const double>(sig) : std::span<const double>());
  FitResult f;
  f.exponent = lf.slope;
  f.amplitude = std::exp(lf.intercept);
  f.stderr = lf.slope_stderr;
  f.goodness = lf.chi2;
  f.lo = s.points[idx.front()].scale;
  f.hi = s.points[idx.back()].scale;
  f.points = idx.size();
  return f;
}

/// Power-law fit with a jackknife error: values(means) maps the column means
/// of the chain series to the fitted values at `scales`; the exponent is
/// re-fitted leaving out one chain (or one batch, for a single chain).
template <class Values>
FitResult fit_power_law_jackknife(std::span<const SampleSeries> chains, std::span<const double> scales, Values&& values,
                                  double lo = 0.0, double hi = std::numeric_limits<double>::infinity(),
                                  std::size_t batches = 16) {
  const auto est = estimate(chains, batches);
  std::vector<double> means(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) means[i] = est[i].mean;
  // Weights from a first jackknife pass per point.
  ScalingSeries full;
  const auto v0 = values(means);
  std::vector<double> sig(scales.size(), 0.0);
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto e = jackknife(chains, [&](const std::vector<double>& m) { return values(m)[i]; }, batches);
    sig[i] = e.stderr;
    full.points.push_back({scales[i], v0[i], e.stderr});
  }
  FitResult f = fit_power_law(full, lo, hi);
  const auto idx = detail::points_in_range(scales, lo, hi);
  auto slope = [&](const std::vector<double>& m) {
    const auto v = values(m);
    std::vector<double> x, y, s;
    for (auto i : idx) {
      if (!(v[i] > 0)) return std::numeric_limits<double>::quiet_NaN();
      x.push_back(std::log(scales[i]));
      y.push_back(std::log(v[i]));
      s.push_back(sig[i] > 0 ? sig[i] / v0[i] : 1.0);
    }
    return fit_line(x, y, s).slope;
  };
  const auto jk = jackknife(chains, slope, batches);
  if (std::isfinite(jk.stderr)) {
    f.stderr = jk.stderr;
    f.error_method = chains.size() >= 2 ? "jackknife-chains" : "jackknife-batches";
  }
  f.chains = chains.size();
  return f;
}

/// Log-log interpolation of a positive series at `scale`.
inline double interpolate_loglog(const ScalingSeries& s, double scale) {
  const auto& p = s.points;
  if (p.empty()) throw Error(ErrorCode::insufficient_range, "empty series");
  constexpr double tol = 1e-9;
  if (scale < p.front().scale * (1 - tol) || scale > p.back().scale * (1 + tol))
    throw Error(ErrorCode::insufficient_range, "scale outside the series range");
  std::size_t k = 1;
  while (k < p.size() - 1 && p[k].scale < scale) ++k;
  if (p.size() == 1) return p[0].value;
  const auto& a = p[k - 1];
  const auto& b = p[k];
  if (!(a.value > 0 && b.value > 0)) throw Error(ErrorCode::nonpositive_values, "interpolation needs positive values");
  const double t = (std::log(scale) - std::log(a.scale)) / (std::log(b.scale) - std::log(a.scale));
  return std::exp(std::log(a.value) + t * (std::log(b.value) - std::log(a.value)));
}

}  // namespace fkfield
