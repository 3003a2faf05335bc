#pragma once
// Swendsen-Wang sampling of the FK random-cluster / Potts coupling, the
// ghost-vertex field, and i.i.d. site and bond percolation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "fkfield/clusters.hpp"
#include "fkfield/config.hpp"
#include "fkfield/error.hpp"
#include "fkfield/lattice.hpp"
#include "fkfield/rng.hpp"
#include "fkfield/stats.hpp"
#include "fkfield/union_find.hpp"

namespace fkfield {

enum class Model : std::uint8_t { fk_potts = 0, independent_site = 1, independent_bond = 2 };

inline const char* to_string(Model m) {
  switch (m) {
    case Model::fk_potts: return "fk-potts";
    case Model::independent_site: return "independent-site";
    case Model::independent_bond: return "independent-bond";
  }
  return "?";
}

struct CouplingSpec {
  Model model = Model::fk_potts;
  int q = 2;
  double p = 0.0;  // bond density (site density for independent-site)
  double h = 0.0;  // external field, in units of the coupling

  void validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::invalid_spec, "p must lie in [0, 1]");
    if (!(h >= 0.0) || !std::isfinite(h)) throw Error(ErrorCode::invalid_spec, "h must be finite and >= 0");
    if (model == Model::fk_potts && (q < 1 || q > 255)) throw Error(ErrorCode::invalid_spec, "q must be in [1, 255]");
    if (model != Model::fk_potts && h != 0.0) throw Error(ErrorCode::invalid_spec, "independent models take h = 0");
  }
  /// Inverse temperature with p = 1 - exp(-2 beta).
  double beta() const { return -0.5 * std::log1p(-p); }
  /// Probability of a site-to-ghost bond, 1 - exp(-2 beta h).
  double ghost_probability() const {
    if (h == 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return -std::expm1(-2.0 * beta() * h);
  }
  static double p_from_beta(double beta) { return -std::expm1(-2.0 * beta); }
  friend bool operator==(const CouplingSpec&, const CouplingSpec&) = default;
};

/// Self-dual critical density on Z^2 for the random-cluster model, 1/2 for
/// independent bond percolation on Z^2 and for site percolation on the
/// triangular lattice.
inline double critical_point(Model model, int q = 2, LatticeKind lattice = LatticeKind::square) {
  if (model == Model::fk_potts && lattice == LatticeKind::square) {
    if (q < 1) throw Error(ErrorCode::invalid_spec, "q must be >= 1");
    const double s = std::sqrt(static_cast<double>(q));
    return s / (1.0 + s);
  }
  if (model == Model::independent_bond && lattice == LatticeKind::square) return 0.5;
  if (model == Model::independent_site && lattice == LatticeKind::triangular) return 0.5;
  throw Error(ErrorCode::no_known_critical_point,
              std::string(to_string(model)) + " on the " + to_string(lattice) + " lattice");
}

struct ChainState {
  BondConfig bonds;
  SpinConfig spins;
  ClusterLabeling labels;
  std::uint64_t sweeps = 0;
  RandomStream rng;
};

/// Key of a site for random-access draws: lattice coordinates packed into 32 bits.
inline std::uint32_t site_key(Cell c) {
  return (static_cast<std::uint32_t>(c.i + 32768) << 16) | (static_cast<std::uint32_t>(c.j + 32768) & 0xFFFFu);
}

/// Open/closed state of a site in sample `sample` of independent site
/// percolation; a pure function of (seed, stream, sample, site).
inline bool site_open(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample, Cell c, std::uint64_t threshold) {
  return keyed_u32(seed, stream, site_key(c), static_cast<std::uint32_t>(sample)) < threshold;
}

/// One Markov chain. Colours start cold (all colour 0); for the independent
/// models every sweep is a fresh i.i.d. sample.
class Chain {
 public:
  Chain(std::shared_ptr<const LatticeGraph> graph, CouplingSpec coupling, std::uint64_t seed, std::uint64_t stream)
      : graph_(std::move(graph)), coupling_(coupling) {
    init();
    const std::size_t n = graph_->site_count();
    state_.rng = RandomStream(seed, stream);
    state_.spins = {coupling_.model == Model::fk_potts ? coupling_.q : 2, std::vector<std::uint8_t>(n, 0)};
    state_.bonds.open.assign(graph_->bond_count(), 0);
    if (coupling_.h > 0.0) state_.bonds.ghost.assign(n, 0);
  }

  /// Resume from an existing state.
  Chain(std::shared_ptr<const LatticeGraph> graph, CouplingSpec coupling, ChainState state)
      : graph_(std::move(graph)), coupling_(coupling), state_(std::move(state)) {
    init();
    const std::size_t n = graph_->site_count();
    if (state_.spins.color.size() != n || state_.bonds.open.size() != graph_->bond_count())
      throw Error(ErrorCode::invalid_argument, "chain state does not match graph");
    if (coupling_.h > 0.0 && state_.bonds.ghost.size() != n) state_.bonds.ghost.assign(n, 0);
    if (coupling_.h == 0.0) state_.bonds.ghost.clear();
  }

  const LatticeGraph& graph() const { return *graph_; }
  const CouplingSpec& coupling() const { return coupling_; }
  const ChainState& state() const { return state_; }
  ChainState take_state() && { return std::move(state_); }

  void sweep() {
    switch (coupling_.model) {
      case Model::fk_potts: swendsen_wang(false); break;
      case Model::independent_bond: swendsen_wang(true); break;
      case Model::independent_site: site_sample(); break;
    }
    ++state_.sweeps;
  }

 private:
  void init() {
    coupling_.validate();
    bond_threshold_ = bernoulli_threshold(coupling_.p);
    ghost_threshold_ = bernoulli_threshold(coupling_.ghost_probability());
  }

  void swendsen_wang(bool ignore_colors) {
    const LatticeGraph& g = *graph_;
    const std::size_t n = g.site_count();
    const bool field = coupling_.h > 0.0;
    auto& rng = state_.rng;
    auto& color = state_.spins.color;
    auto& open = state_.bonds.open;
    uf_.reset(n + (field ? 1 : 0));
    if (g.has_wired()) {
      std::int64_t first = -1;
      for (std::uint32_t s = 0; s < n; ++s) {
        if (!g.wired[s]) continue;
        if (first < 0) first = s;
        else uf_.unite(static_cast<std::uint32_t>(first), s);
      }
    }
    const std::uint64_t thr = bond_threshold_;
    for (std::size_t e = 0; e < g.bonds.size(); ++e) {
      const Bond& b = g.bonds[e];
      std::uint8_t o = 0;
      if (ignore_colors || color[b.u] == color[b.v]) o = rng.next_u32() < thr;
      open[e] = o;
      if (o) uf_.unite(b.u, b.v);
    }
    if (field) {
      auto& ghost = state_.bonds.ghost;
      for (std::uint32_t s = 0; s < n; ++s) {
        std::uint8_t o = 0;
        if (color[s] == 0) o = rng.next_u32() < ghost_threshold_;
        ghost[s] = o;
        if (o) uf_.unite(s, static_cast<std::uint32_t>(n));
      }
    }
    detail::finish_labeling(uf_, n, field, state_.labels);
    const auto& lab = state_.labels;
    const int q = state_.spins.q;
    cluster_color_.resize(lab.count);
    for (std::uint32_t c = 0; c < lab.count; ++c)
      cluster_color_[c] = static_cast<std::int64_t>(c) == lab.ghost_cluster ? 0 : static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(q)));
    for (std::size_t s = 0; s < n; ++s) color[s] = cluster_color_[static_cast<std::size_t>(lab.cluster[s])];
  }

  void site_sample() {
    const LatticeGraph& g = *graph_;
    auto& color = state_.spins.color;
    const auto& rng = state_.rng;
    for (std::size_t s = 0; s < g.site_count(); ++s)
      color[s] = site_open(rng.seed(), rng.stream(), state_.sweeps, g.cells[s], bond_threshold_) ? 0 : 1;
    for (std::size_t e = 0; e < g.bonds.size(); ++e)
      state_.bonds.open[e] = color[g.bonds[e].u] == color[g.bonds[e].v];
    state_.labels = label_site_clusters(g, color);
  }

  std::shared_ptr<const LatticeGraph> graph_;
  CouplingSpec coupling_;
  ChainState state_;
  UnionFind uf_;
  std::vector<std::uint8_t> cluster_color_;
  std::uint64_t bond_threshold_ = 0;
  std::uint64_t ghost_threshold_ = 0;
};

/// One sweep applied to a standalone state.
inline ChainState sw_sweep(std::shared_ptr<const LatticeGraph> graph, ChainState state, const CouplingSpec& coupling) {
  Chain chain(std::move(graph), coupling, std::move(state));
  chain.sweep();
  return std::move(chain).take_state();
}

struct Schedule {
  std::uint64_t seed = 1;
  int chains = 1;
  int therm = -1;  // -1: adaptive (10 tau_int of the largest cluster, at least 200)
  int measure = 1;
  int thinning = 1;

  void validate() const {
    if (chains < 1) throw Error(ErrorCode::invalid_spec, "chains must be >= 1");
    if (therm < -1) throw Error(ErrorCode::invalid_spec, "therm must be >= 0 (or -1 for adaptive)");
    if (measure < 1) throw Error(ErrorCode::invalid_spec, "measure sweeps must be >= 1");
    if (thinning < 1) throw Error(ErrorCode::invalid_spec, "thinning must be >= 1");
  }
  std::uint64_t snapshots() const { return (static_cast<std::uint64_t>(measure) + thinning - 1) / thinning; }
};

struct Snapshot {
  const LatticeGraph& graph;
  const CouplingSpec& coupling;
  const ChainState& state;
  std::uint32_t chain;
  std::uint64_t index;  // snapshot number within the chain

  const BondConfig& bonds() const { return state.bonds; }
  const SpinConfig& spins() const { return state.spins; }
  const ClusterLabeling& labels() const { return state.labels; }
};

/// Per-chain summary with batch-means-ready basic observables:
/// column 0 open-bond fraction, 1 largest cluster fraction, 2 magnetization.
struct ChainSummary {
  std::uint32_t chain = 0;
  std::uint64_t stream = 0;
  std::uint64_t snapshots = 0;
  std::uint64_t therm_sweeps = 0;
  double tau_largest = 0.0;
  SampleSeries basic{3};
};

namespace detail {

inline double largest_fraction(const ClusterLabeling& lab) {
  if (lab.sizes.empty()) return 0.0;
  return static_cast<double>(*std::max_element(lab.sizes.begin(), lab.sizes.end())) / static_cast<double>(lab.cluster.size());
}

inline double magnetization(const SpinConfig& s) {
  double m = 0.0;
  for (auto c : s.color) m += c == 0 ? 1.0 : -1.0;
  return s.color.empty() ? 0.0 : m / static_cast<double>(s.color.size());
}

}  // namespace detail

/// Chain c of an ensemble uses stream c of the master seed.
inline std::uint64_t chain_stream(std::uint32_t chain) { return chain; }

/// Run one chain: thermalize, then call visit(const Snapshot&) every
/// `thinning` sweeps, ceil(measure / thinning) times in total.
template <class Visitor>
ChainSummary run_chain(std::shared_ptr<const LatticeGraph> graph, const CouplingSpec& coupling, const Schedule& schedule,
                       std::uint32_t chain_index, Visitor&& visit) {
  schedule.validate();
  Chain chain(graph, coupling, schedule.seed, chain_stream(chain_index));
  ChainSummary summary;
  summary.chain = chain_index;
  summary.stream = chain_stream(chain_index);
  if (coupling.model == Model::fk_potts) {
    if (schedule.therm >= 0) {
      for (int t = 0; t < schedule.therm; ++t) chain.sweep();
    } else {
      std::vector<double> largest;
      std::uint64_t target = 200;
      constexpr std::uint64_t cap = 20000;
      while (chain.state().sweeps < target) {
        chain.sweep();
        largest.push_back(detail::largest_fraction(chain.state().labels));
        if (chain.state().sweeps == target) {
          const std::size_t half = largest.size() / 2;
          summary.tau_largest = tau_int(std::span<const double>(largest).subspan(half));
          target = std::min(cap, std::max<std::uint64_t>(target, static_cast<std::uint64_t>(std::ceil(10.0 * summary.tau_largest))));
        }
      }
    }
  }
  summary.therm_sweeps = chain.state().sweeps;
  for (int m = 0; m < schedule.measure; ++m) {
    chain.sweep();
    if (m % schedule.thinning != 0) continue;
    const ChainState& st = chain.state();
    const double row[3] = {graph->bond_count() ? static_cast<double>(st.bonds.open_count()) / static_cast<double>(graph->bond_count()) : 0.0,
                           detail::largest_fraction(st.labels), detail::magnetization(st.spins)};
    summary.basic.push(row);
    visit(Snapshot{*graph, chain.coupling(), st, chain_index, summary.snapshots});
    ++summary.snapshots;
  }
  return summary;
}

/// Run all chains of an ensemble with at most `jobs` threads (0: one per
/// hardware thread). Each chain gets
/// its own accumulator from make(chain_index); results are returned in chain
/// order, independent of completion order.
template <class Make>
auto run_ensemble(std::shared_ptr<const LatticeGraph> graph, const CouplingSpec& coupling, const Schedule& schedule,
                  Make&& make, int jobs = 1) {
  using Acc = decltype(make(std::uint32_t{0}));
  schedule.validate();
  const auto chains = static_cast<std::uint32_t>(schedule.chains);
  std::vector<std::unique_ptr<Acc>> accs(chains);
  std::vector<ChainSummary> summaries(chains);
  std::mutex error_mutex;
  std::exception_ptr error;
  auto work = [&](std::uint32_t c) {
    try {
      auto acc = std::make_unique<Acc>(make(c));
      summaries[c] = run_chain(graph, coupling, schedule, c, [&](const Snapshot& s) { acc->observe(s); });
      accs[c] = std::move(acc);
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };
  if (jobs <= 0) jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (jobs == 1 || chains == 1) {
    for (std::uint32_t c = 0; c < chains; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    std::mutex next_mutex;
    std::uint32_t next = 0;
    for (int t = 0; t < std::min<int>(jobs, static_cast<int>(chains)); ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::uint32_t c;
          {
            std::lock_guard lock(next_mutex);
            if (next >= chains) return;
            c = next++;
          }
          work(c);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  std::vector<Acc> out;
  out.reserve(chains);
  for (auto& a : accs) out.push_back(std::move(*a));
  return std::pair{std::move(out), std::move(summaries)};
}

}  // namespace fkfield
