#pragma once
// Monte Carlo error analysis: per-chain sample series, batch means,
// integrated autocorrelation times and jackknife over chains.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "fkfield/error.hpp"

namespace fkfield {

struct Estimate {
  double mean = 0.0;
  double stderr = 0.0;
  std::size_t samples = 0;
};

/// Row-major time series of `width` observables for one chain.
class SampleSeries {
 public:
  explicit SampleSeries(std::size_t width = 1) : width_(width) {}

  void push(std::span<const double> row) {
    if (row.size() != width_) throw Error(ErrorCode::invalid_argument, "sample row width mismatch");
    data_.insert(data_.end(), row.begin(), row.end());
  }
  void push(double v) { push(std::span<const double>(&v, 1)); }

  std::size_t rows() const { return width_ == 0 ? 0 : data_.size() / width_; }
  std::size_t width() const { return width_; }
  double at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * width_, width_}; }

  std::vector<double> column(std::size_t col) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = at(r, col);
    return out;
  }
  std::vector<double> sums() const {
    std::vector<double> s(width_, 0.0);
    for (std::size_t r = 0; r < rows(); ++r)
      for (std::size_t c = 0; c < width_; ++c) s[c] += at(r, c);
    return s;
  }

 private:
  std::size_t width_;
  std::vector<double> data_;
};

namespace detail {

inline std::size_t batch_count(std::size_t rows, std::size_t batches) { return std::min(batches, rows); }

// Mean of rows [r0, r1) in column col.
inline double block_mean(const SampleSeries& s, std::size_t col, std::size_t r0, std::size_t r1) {
  double acc = 0.0;
  for (std::size_t r = r0; r < r1; ++r) acc += s.at(r, col);
  return acc / static_cast<double>(r1 - r0);
}

}  // namespace detail

/// Pooled means with batch-means standard errors. Each chain is cut into
/// (up to) `batches` contiguous blocks; the error is the standard error of
/// all block means across chains.
inline std::vector<Estimate> estimate(std::span<const SampleSeries> chains, std::size_t batches = 16) {
  if (chains.empty()) throw Error(ErrorCode::empty_ensemble, "no chains");
  const std::size_t width = chains.front().width();
  std::vector<Estimate> out(width);
  std::size_t total = 0;
  for (const auto& c : chains) total += c.rows();
  if (total == 0) throw Error(ErrorCode::empty_ensemble, "no samples");
  for (std::size_t col = 0; col < width; ++col) {
    double sum = 0.0;
    std::vector<double> bm;
    std::vector<double> bw;
    for (const auto& c : chains) {
      const std::size_t rows = c.rows();
      const std::size_t b = detail::batch_count(rows, batches);
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t r0 = k * rows / b;
        const std::size_t r1 = (k + 1) * rows / b;
        const double m = detail::block_mean(c, col, r0, r1);
        bm.push_back(m);
        bw.push_back(static_cast<double>(r1 - r0));
        sum += m * static_cast<double>(r1 - r0);
      }
    }
    const double mean = sum / static_cast<double>(total);
    double var = 0.0;
    double wsum = 0.0;
    double w2sum = 0.0;
    for (std::size_t k = 0; k < bm.size(); ++k) {
      var += bw[k] * (bm[k] - mean) * (bm[k] - mean);
      wsum += bw[k];
      w2sum += bw[k] * bw[k];
    }
    double se = 0.0;
    if (bm.size() >= 2) {
      // Weighted variance of block means, then standard error of the pooled mean.
      const double unbiased = var / (wsum - w2sum / wsum);
      se = std::sqrt(unbiased * w2sum) / wsum;
    }
    out[col] = {mean, se, total};
  }
  return out;
}

inline Estimate estimate_scalar(std::span<const double> xs, std::size_t batches = 16) {
  SampleSeries s(1);
  for (double x : xs) s.push(x);
  return estimate(std::span<const SampleSeries>(&s, 1), batches).front();
}

/// Integrated autocorrelation time with Sokal's automatic window (c = 6).
inline double tau_int(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 4) return 0.5;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double x : xs) c0 += (x - mean) * (x - mean);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return 0.5;
  double tau = 0.5;
  for (std::size_t t = 1; t < n / 2; ++t) {
    double ct = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) ct += (xs[i] - mean) * (xs[i + t] - mean);
    ct /= static_cast<double>(n - t);
    tau += ct / c0;
    if (static_cast<double>(t) >= 6.0 * tau) break;
  }
  return std::max(tau, 0.5);
}

/// Jackknife of a derived quantity f(column means). Blocks are the chains
/// when there are at least two, otherwise contiguous batches of the single
/// chain.
template <class F>
Estimate jackknife(std::span<const SampleSeries> chains, F&& f, std::size_t batches = 16) {
  if (chains.empty()) throw Error(ErrorCode::empty_ensemble, "no chains");
  const std::size_t width = chains.front().width();
  struct Block {
    std::vector<double> sum;
    double n;
  };
  std::vector<Block> blocks;
  if (chains.size() >= 2) {
    for (const auto& c : chains) blocks.push_back({c.sums(), static_cast<double>(c.rows())});
  } else {
    const auto& c = chains.front();
    const std::size_t b = detail::batch_count(c.rows(), batches);
    for (std::size_t k = 0; k < b; ++k) {
      const std::size_t r0 = k * c.rows() / b;
      const std::size_t r1 = (k + 1) * c.rows() / b;
      Block blk{std::vector<double>(width, 0.0), static_cast<double>(r1 - r0)};
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t col = 0; col < width; ++col) blk.sum[col] += c.at(r, col);
      blocks.push_back(std::move(blk));
    }
  }
  std::vector<double> total(width, 0.0);
  double ntot = 0.0;
  for (const auto& b : blocks) {
    for (std::size_t col = 0; col < width; ++col) total[col] += b.sum[col];
    ntot += b.n;
  }
  if (ntot == 0) throw Error(ErrorCode::empty_ensemble, "no samples");
  std::vector<double> means(width);
  for (std::size_t col = 0; col < width; ++col) means[col] = total[col] / ntot;
  const double full = f(means);
  const std::size_t m = blocks.size();
  if (m < 2) return {full, 0.0, static_cast<std::size_t>(ntot)};
  std::vector<double> loo(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<double> mk(width);
    for (std::size_t col = 0; col < width; ++col) mk[col] = (total[col] - blocks[k].sum[col]) / (ntot - blocks[k].n);
    loo[k] = f(mk);
  }
  const double bar = std::accumulate(loo.begin(), loo.end(), 0.0) / static_cast<double>(m);
  double var = 0.0;
  for (double v : loo) var += (v - bar) * (v - bar);
  var *= static_cast<double>(m - 1) / static_cast<double>(m);
  return {full, std::sqrt(var), static_cast<std::size_t>(ntot)};
}

}  // namespace fkfield
