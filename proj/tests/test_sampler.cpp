#include <catch_amalgamated.hpp>

#include <cmath>

#include "fkfield/exact.hpp"
#include "fkfield/sampler.hpp"

using namespace fkfield;
using Catch::Approx;

namespace {

std::shared_ptr<const LatticeGraph> share(LatticeGraph g) { return std::make_shared<const LatticeGraph>(std::move(g)); }

struct PairCounter {
  std::uint32_t x, y;
  SampleSeries series{1};
  void observe(const Snapshot& s) { series.push(s.labels().cluster[x] == s.labels().cluster[y] ? 1.0 : 0.0); }
};

}  // namespace

TEST_CASE("critical points") {
  CHECK(critical_point(Model::fk_potts, 2) == Approx(2 - std::sqrt(2.0)).epsilon(1e-15));
  CHECK(critical_point(Model::fk_potts, 2) == Approx(CouplingSpec::p_from_beta(0.5 * std::log(1 + std::sqrt(2.0)))));
  CHECK(critical_point(Model::fk_potts, 1) == 0.5);
  CHECK(critical_point(Model::fk_potts, 4) == Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(critical_point(Model::independent_bond) == 0.5);
  CHECK(critical_point(Model::independent_site, 2, LatticeKind::triangular) == 0.5);
  try {
    critical_point(Model::independent_site, 2, LatticeKind::square);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::no_known_critical_point);
  }
  CHECK_THROWS_AS(critical_point(Model::fk_potts, 2, LatticeKind::triangular), Error);
}

TEST_CASE("coupling validation") {
  CHECK_THROWS_AS((CouplingSpec{Model::fk_potts, 2, 1.5, 0.0}.validate()), Error);
  CHECK_THROWS_AS((CouplingSpec{Model::fk_potts, 0, 0.5, 0.0}.validate()), Error);
  CHECK_THROWS_AS((CouplingSpec{Model::fk_potts, 2, 0.5, -1.0}.validate()), Error);
  CHECK_THROWS_AS((CouplingSpec{Model::independent_bond, 2, 0.5, 0.1}.validate()), Error);
  const CouplingSpec c{Model::fk_potts, 2, 0.5, 0.3};
  CHECK(c.ghost_probability() == Approx(1 - std::exp(-2 * c.beta() * 0.3)));
}

TEST_CASE("sweeps at p = 0 and p = 1") {
  const auto g = share(build_lattice({LatticeKind::square, 6, Boundary::free}));
  Chain zero(g, {Model::fk_potts, 2, 0.0, 0.0}, 3, 0);
  std::vector<int> hist(2, 0);
  for (int t = 0; t < 200; ++t) {
    zero.sweep();
    CHECK(zero.state().bonds.open_count() == 0);
    CHECK(zero.state().labels.count == 36);
    for (auto c : zero.state().spins.color) ++hist[c];
  }
  CHECK(std::abs(hist[0] / 7200.0 - 0.5) < 0.03);
  Chain one(g, {Model::fk_potts, 3, 1.0, 0.0}, 3, 0);
  for (int t = 0; t < 20; ++t) {
    one.sweep();
    CHECK(one.state().labels.count == 1);
    CHECK(one.state().bonds.open_count() == g->bond_count());
    for (auto c : one.state().spins.color) CHECK(c == one.state().spins.color[0]);
  }
}

TEST_CASE("sw_sweep on a standalone state matches the chain") {
  const auto g = share(build_lattice({LatticeKind::square, 5, Boundary::periodic}));
  const CouplingSpec c{Model::fk_potts, 2, 0.6, 0.0};
  Chain a(g, c, 9, 2);
  a.sweep();
  ChainState st = a.state();
  a.sweep();
  st = sw_sweep(g, st, c);
  CHECK(st.bonds == a.state().bonds);
  CHECK(st.spins == a.state().spins);
  CHECK(st.rng == a.state().rng);
}

TEST_CASE("runs are deterministic and emit ceil(measure/thinning) snapshots") {
  const auto g = share(build_lattice({LatticeKind::square, 8, Boundary::periodic}));
  const CouplingSpec c{Model::fk_potts, 2, critical_point(Model::fk_potts, 2), 0.0};
  const Schedule s{7, 1, 10, 25, 4};
  std::vector<BondConfig> first, second;
  const auto sum1 = run_chain(g, c, s, 0, [&](const Snapshot& x) { first.push_back(x.bonds()); });
  run_chain(g, c, s, 0, [&](const Snapshot& x) { second.push_back(x.bonds()); });
  CHECK(first.size() == 7);
  CHECK(sum1.snapshots == 7);
  CHECK(first == second);
  std::vector<BondConfig> other;
  run_chain(g, c, Schedule{8, 1, 10, 25, 4}, 0, [&](const Snapshot& x) { other.push_back(x.bonds()); });
  CHECK(other != first);
  const Schedule zero{7, 1, 0, 5, 1};
  run_chain(g, {Model::fk_potts, 2, 0.0, 0.0}, zero, 0,
            [&](const Snapshot& x) { CHECK(x.bonds().open_count() == 0); });
}

TEST_CASE("ensemble results do not depend on the job count") {
  const auto g = share(build_lattice({LatticeKind::square, 6, Boundary::periodic}));
  const CouplingSpec c{Model::fk_potts, 2, 0.5, 0.0};
  const Schedule s{11, 4, 5, 50, 1};
  auto make = [](std::uint32_t) { return PairCounter{0, 20}; };
  auto [a, sa] = run_ensemble(g, c, s, make, 1);
  auto [b, sb] = run_ensemble(g, c, s, make, 3);
  REQUIRE(a.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(a[k].series.column(0) == b[k].series.column(0));
  CHECK(sa[2].stream == 2);
}

TEST_CASE("single bond connectivity matches the oracle") {
  const std::vector<Cell> cells = {{0, 0}, {1, 0}};
  const auto g = share(build_induced_subgraph(cells));
  const CouplingSpec c{Model::fk_potts, 2, critical_point(Model::fk_potts, 2), 0.0};
  const auto [acc, sum] = run_ensemble(g, c, Schedule{1, 1, 100, 100000, 1}, [](std::uint32_t) { return PairCounter{0, 1}; });
  const auto e = estimate(std::span<const SampleSeries>(&acc[0].series, 1)).front();
  CHECK(std::abs(e.mean - (std::sqrt(2.0) - 1)) < 4 * e.stderr);
}

TEST_CASE("3x3 corner-centre connectivity matches the oracle") {
  const auto g = share(build_lattice({LatticeKind::square, 3, Boundary::free}));
  const CouplingSpec c{Model::fk_potts, 2, critical_point(Model::fk_potts, 2), 0.0};
  const auto ex = exact_enumerate(*g, c);
  const auto [acc, sum] = run_ensemble(g, c, Schedule{5, 2, 100, 40000, 1}, [](std::uint32_t) { return PairCounter{0, 4}; });
  std::vector<SampleSeries> series;
  for (const auto& a : acc) series.push_back(a.series);
  const auto e = estimate(series).front();
  CHECK(std::abs(e.mean - ex.p(0, 4)) < 4 * e.stderr);
}

TEST_CASE("wired boundary and ghost field") {
  const auto g = share(build_lattice({LatticeKind::square, 3, Boundary::wired}));
  Chain w(g, {Model::fk_potts, 2, 0.0, 0.0}, 1, 0);
  w.sweep();
  CHECK(w.state().labels.count == 2);  // boundary ring + centre
  const auto f = share(build_lattice({LatticeKind::square, 8, Boundary::periodic}));
  const double pc = critical_point(Model::fk_potts, 2);
  const double beta = CouplingSpec{Model::fk_potts, 2, pc, 0.0}.beta();
  Chain strong(f, {Model::fk_potts, 2, pc, 5.0 / beta}, 1, 0);
  double m = 0.0;
  for (int t = 0; t < 100; ++t) {
    strong.sweep();
    const auto& lab = strong.state().labels;
    REQUIRE(lab.ghost_cluster >= 0);
    m += lab.sizes[static_cast<std::size_t>(lab.ghost_cluster)] / 64.0;
    for (std::size_t s = 0; s < 64; ++s)
      if (lab.cluster[s] == lab.ghost_cluster) CHECK(strong.state().spins.color[s] == 0);
  }
  CHECK(m / 100 > 1 - 1e-3);
}

TEST_CASE("colour symmetry at zero field") {
  const auto g = share(build_lattice({LatticeKind::square, 8, Boundary::periodic}));
  const CouplingSpec c{Model::fk_potts, 2, critical_point(Model::fk_potts, 2), 0.0};
  SampleSeries spin0(1);
  run_chain(g, c, Schedule{3, 1, 50, 20000, 1}, 0, [&](const Snapshot& s) { spin0.push(s.spins().spin(0)); });
  const auto e = estimate(std::span<const SampleSeries>(&spin0, 1)).front();
  CHECK(std::abs(e.mean) < 4 * e.stderr);
}

TEST_CASE("ghost magnetization matches the oracle") {
  const auto g = share(build_lattice({LatticeKind::square, 3, Boundary::free}));
  const CouplingSpec c{Model::fk_potts, 2, 0.5, 0.2};
  // 12 bonds + 9 ghost bonds exceed the enumeration limit; use a 2x3 grid.
  std::vector<Cell> cells;
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i) cells.push_back({i, j});
  const auto small = share(build_induced_subgraph(cells));
  const auto ex = exact_enumerate(*small, c);
  SampleSeries m(1);
  run_chain(small, c, Schedule{4, 1, 100, 50000, 1}, 0, [&](const Snapshot& s) {
    const auto& lab = s.labels();
    m.push(lab.ghost_cluster < 0 ? 0.0 : lab.sizes[static_cast<std::size_t>(lab.ghost_cluster)] / 6.0);
  });
  const auto e = estimate(std::span<const SampleSeries>(&m, 1)).front();
  CHECK(std::abs(e.mean - ex.ghost_fraction) < 4 * e.stderr);
  (void)g;
}

TEST_CASE("independent site percolation is keyed by site") {
  const auto g = share(build_lattice({LatticeKind::triangular, 16, Boundary::periodic}));
  Chain a(g, {Model::independent_site, 2, 0.5, 0.0}, 5, 1);
  a.sweep();
  double white = 0.0;
  for (std::size_t s = 0; s < g->site_count(); ++s) {
    CHECK((a.state().spins.color[s] == 0) == site_open(5, 1, 0, g->cells[s], bernoulli_threshold(0.5)));
    white += a.state().spins.color[s] == 0;
  }
  CHECK(std::abs(white / g->site_count() - 0.5) < 0.1);
  for (std::size_t e = 0; e < g->bond_count(); ++e) {
    const auto& b = g->bonds[e];
    CHECK(a.state().bonds.open[e] == (a.state().spins.color[b.u] == a.state().spins.color[b.v]));
  }
}

TEST_CASE("independent bond percolation ignores colours") {
  const auto g = share(build_lattice({LatticeKind::square, 20, Boundary::periodic}));
  Chain a(g, {Model::independent_bond, 2, 0.5, 0.0}, 5, 1);
  double open = 0.0;
  for (int t = 0; t < 10; ++t) {
    a.sweep();
    open += static_cast<double>(a.state().bonds.open_count()) / g->bond_count();
  }
  CHECK(std::abs(open / 10 - 0.5) < 0.02);
}
