#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <map>
#include <set>

#include "fkfield/estimators.hpp"
#include "fkfield/exact.hpp"

using namespace fkfield;
using Catch::Approx;

namespace {

std::shared_ptr<const LatticeGraph> share(LatticeGraph g) { return std::make_shared<const LatticeGraph>(std::move(g)); }

const double pc2 = 2 - std::sqrt(2.0);

BondConfig random_bonds(const LatticeGraph& g, double p, std::uint64_t seed) {
  RandomStream r(seed, 99);
  BondConfig c;
  c.open.resize(g.bond_count());
  for (auto& o : c.open) o = r.uniform() < p;
  return c;
}

// Circuit oracle: explore the graph with accumulated winding angle around z;
// a cycle that winds once shows up as an edge whose endpoints' angles differ
// by a multiple of 2 pi from the step angle.
bool winds(const std::vector<Point>& pts, const std::vector<std::array<std::uint32_t, 2>>& edges, Point z) {
  const std::size_t n = pts.size();
  std::vector<std::vector<std::uint32_t>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  auto ang = [&](std::uint32_t s) { return std::atan2(pts[s].y - z.y, pts[s].x - z.x); };
  auto step = [&](std::uint32_t u, std::uint32_t v) {
    double d = ang(v) - ang(u);
    while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
    while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
    return d;
  };
  std::vector<double> acc(n, 0.0);
  std::vector<char> seen(n, 0);
  for (std::uint32_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    seen[s] = 1;
    std::vector<std::uint32_t> stack = {s};
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto v : adj[u]) {
        const double t = acc[u] + step(u, v);
        if (!seen[v]) {
          seen[v] = 1;
          acc[v] = t;
          stack.push_back(v);
        } else if (std::abs(t - acc[v]) > 1.0) {
          return true;
        }
      }
    }
  }
  return false;
}

CircuitEvents circuit_oracle(const LatticeGraph& g, const BondConfig& c, Point z, double r1, double r2) {
  // Primal sites in the annulus joined by open bonds; positions unwrapped near z.
  const double a = g.spec.spacing;
  const int ci = static_cast<int>(std::floor(z.x / a)), cj = static_cast<int>(std::floor(z.y / a));
  const int R = static_cast<int>(std::ceil(r2 / a)) + 2;
  StepBonds sb(g);
  std::vector<Point> pts;
  std::map<std::pair<int, int>, std::uint32_t> id;
  auto in_ann = [&](Point p) {
    const double d = norm(p - z);
    return d >= r1 - 1e-9 && d <= r2 + 1e-9;
  };
  for (int j = cj - R; j <= cj + R; ++j)
    for (int i = ci - R; i <= ci + R; ++i)
      if (in_ann({i * a, j * a})) {
        id[{i, j}] = static_cast<std::uint32_t>(pts.size());
        pts.push_back({i * a, j * a});
      }
  std::vector<std::array<std::uint32_t, 2>> edges;
  for (auto [key, u] : id) {
    auto [i, j] = key;
    const auto s = static_cast<std::uint32_t>(g.site_at(i, j));
    for (int dir = 0; dir < 2; ++dir) {
      const int ni = i + (dir == 0), nj = j + (dir == 1);
      auto it = id.find({ni, nj});
      if (it != id.end() && c.open[static_cast<std::size_t>(sb(s, static_cast<std::size_t>(dir)))]) edges.push_back({u, it->second});
    }
  }
  CircuitEvents ev;
  ev.open = winds(pts, edges, z);
  // Faces (by lower-left corner) with centre in the annulus, joined across closed bonds.
  pts.clear();
  id.clear();
  edges.clear();
  for (int j = cj - R; j <= cj + R; ++j)
    for (int i = ci - R; i <= ci + R; ++i)
      if (in_ann({(i + 0.5) * a, (j + 0.5) * a})) {
        id[{i, j}] = static_cast<std::uint32_t>(pts.size());
        pts.push_back({(i + 0.5) * a, (j + 0.5) * a});
      }
  for (auto [key, u] : id) {
    auto [i, j] = key;
    // right neighbour across the vertical bond (i+1, j)-(i+1, j+1)
    if (auto it = id.find({i + 1, j}); it != id.end())
      if (!c.open[static_cast<std::size_t>(sb(static_cast<std::uint32_t>(g.site_at(i + 1, j)), 1))]) edges.push_back({u, it->second});
    // upper neighbour across the horizontal bond (i, j+1)-(i+1, j+1)
    if (auto it = id.find({i, j + 1}); it != id.end())
      if (!c.open[static_cast<std::size_t>(sb(static_cast<std::uint32_t>(g.site_at(i, j + 1)), 0))]) edges.push_back({u, it->second});
  }
  ev.dual_closed = winds(pts, edges, z);
  return ev;
}

}  // namespace

TEST_CASE("step bond table matches incidence") {
  for (auto kind : {LatticeKind::square, LatticeKind::triangular}) {
    for (auto b : {Boundary::periodic, Boundary::free}) {
      const auto g = build_lattice({kind, 6, b});
      const StepBonds sb(g);
      const auto steps = lattice_steps(kind);
      for (std::uint32_t s = 0; s < g.site_count(); ++s) {
        std::size_t found = 0;
        for (std::size_t k = 0; k < steps.size(); ++k) {
          const auto e = sb(s, k);
          const auto t = g.site_at(g.cells[s].i + steps[k][0], g.cells[s].j + steps[k][1]);
          CHECK((e >= 0) == (t >= 0));
          if (e >= 0) {
            ++found;
            CHECK(g.other(static_cast<std::uint32_t>(e), s) == static_cast<std::uint32_t>(t));
          }
        }
        CHECK(found == g.degree(s));
      }
    }
  }
}

TEST_CASE("two-point profile at trivial densities") {
  const auto spec = padded_torus(LatticeKind::square, 8);
  for (double p : {0.0, 1.0}) {
    const auto run = twopoint_profile(spec, {Model::fk_potts, 2, p, 0.0}, Schedule{1, 1, 0, 3, 1}, 0.5, 4);
    REQUIRE(run.profile.points.size() == 4);
    for (const auto& pt : run.profile.points) CHECK(pt.value == p);
    CHECK(run.profile.points.front().scale == Approx(1.0 / 8 * (4 + 4 * std::sqrt(2.0)) / 8));
  }
  CHECK_THROWS_AS(twopoint_profile(spec, {Model::fk_potts, 2, 0.5, 0.0}, Schedule{1, 1, 0, 1, 1}, 2.5), Error);
  CHECK_THROWS_AS(twopoint_profile(spec, {Model::fk_potts, 2, 0.5, 0.1}, Schedule{1, 1, 0, 1, 1}, 0.5), Error);
}

TEST_CASE("two-point shells against exact connectivities") {
  std::vector<Cell> cells;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) cells.push_back({i, j});
  const auto g = share(build_induced_subgraph(cells));
  const CouplingSpec c{Model::fk_potts, 2, pc2, 0.0};
  const auto ex = exact_enumerate(*g, c);
  // Oracle: mean of P(x <-> y) over pairs at distance in [1, 2) and [2, 3).
  double want[2] = {0, 0}, cnt[2] = {0, 0};
  for (std::uint32_t x = 0; x < 9; ++x)
    for (std::uint32_t y = x + 1; y < 9; ++y) {
      const int k = static_cast<int>(std::floor(norm(g->pos[x] - g->pos[y]) + 1e-9)) - 1;
      if (k < 0 || k > 1) continue;
      want[k] += ex.p(x, y);
      cnt[k] += 1;
    }
  TwoPointAccumulator acc(g, RandomStream(1, 1), 2.5);
  run_chain(g, c, Schedule{4, 1, 100, 40000, 1}, 0, [&](const Snapshot& s) { acc.observe(s); });
  const auto e = estimate(std::span<const SampleSeries>(&acc.series(), 1));
  REQUIRE(e.size() == 2);
  for (int k = 0; k < 2; ++k) CHECK(std::abs(e[k].mean - want[k] / cnt[k]) < 4 * e[k].stderr);

  // Single bond: tau(1) = sqrt(2) - 1.
  const std::vector<Cell> two = {{0, 0}, {1, 0}};
  const auto g2 = share(build_induced_subgraph(two));
  TwoPointAccumulator acc2(g2, RandomStream(1, 1), 1.0);
  run_chain(g2, c, Schedule{5, 1, 10, 40000, 1}, 0, [&](const Snapshot& s) { acc2.observe(s); });
  const auto e2 = estimate(std::span<const SampleSeries>(&acc2.series(), 1)).front();
  CHECK(std::abs(e2.mean - (std::sqrt(2.0) - 1)) < 4 * e2.stderr);
}

TEST_CASE("bounded arm exploration matches a union-find reference") {
  const auto g = build_lattice({LatticeKind::square, 40, Boundary::periodic});
  const auto t = build_lattice({LatticeKind::triangular, 40, Boundary::periodic});
  for (const auto* gp : {&g, &t}) {
    const auto& G = *gp;
    const auto c = random_bonds(G, G.spec.kind == LatticeKind::square ? 0.5 : 0.35, 3);
    ArmExplorer arm(G, 9.0);
    RandomStream r(1, 5);
    for (int trial = 0; trial < 30; ++trial) {
      const auto o = static_cast<std::uint32_t>(r.below(G.site_count()));
      const double reach = arm.explore(c, o);
      for (double rad : {1.0, 2.5, 4.0, 6.0, 8.0}) {
        // Reference: connected within B(o, rad) to a site with a neighbour outside.
        UnionFind uf(G.site_count());
        std::vector<char> in(G.site_count(), 0);
        for (std::uint32_t s = 0; s < G.site_count(); ++s) in[s] = G.distance(s, G.pos[o]) <= rad + 1e-9;
        for (std::uint32_t e = 0; e < G.bond_count(); ++e)
          if (c.open[e] && in[G.bonds[e].u] && in[G.bonds[e].v]) uf.unite(G.bonds[e].u, G.bonds[e].v);
        bool hit = false;
        for (std::uint32_t s = 0; s < G.site_count(); ++s) {
          if (!in[s] || !uf.connected(s, o)) continue;
          for (auto e : G.incident(s)) hit = hit || !in[G.other(e, s)];
        }
        CHECK((reach > rad + 1e-9) == hit);
      }
    }
  }
}

TEST_CASE("lazy site exploration equals eager labeling") {
  const double p = 0.5;
  LazySiteArm lazy(12.0, p);
  int open = 0;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const double a = lazy.explore(7, 3, s);
    const double b = eager_site_arm(7, 3, s, 12.0, p);
    REQUIRE(a == b);
    open += a >= 0;
  }
  CHECK(open > 100);
  CHECK(open < 200);
  // Chain site sampling uses the same keyed states.
  const auto g = share(build_lattice({LatticeKind::triangular, 4, Boundary::free}));
  Chain chain(g, {Model::independent_site, 2, p, 0.0}, 11, 2);
  chain.sweep();
  for (std::uint32_t x = 0; x < g->site_count(); ++x)
    CHECK((chain.state().spins.color[x] == 0) == site_open(11, 2, 0, g->cells[x], bernoulli_threshold(p)));
}

TEST_CASE("one-arm profiles at trivial densities and boundary ordering") {
  const Schedule s{2, 1, 0, 4, 1};
  for (auto b : {ArmBoundary::free, ArmBoundary::wired, ArmBoundary::bulk}) {
    const auto one = one_arm_profile({2, 4}, b, {Model::fk_potts, 2, 1.0, 0.0}, s);
    const auto zero = one_arm_profile({2, 4}, b, {Model::fk_potts, 2, 0.0, 0.0}, s);
    for (const auto& pt : one.profile.points) CHECK(pt.value == 1.0);
    for (const auto& pt : zero.profile.points) CHECK(pt.value == 0.0);
  }
  const Schedule long_run{3, 1, 200, 4000, 1};
  const CouplingSpec c{Model::fk_potts, 2, pc2, 0.0};
  const auto fr = one_arm_profile({3}, ArmBoundary::free, c, long_run).profile.points[0];
  const auto wi = one_arm_profile({3}, ArmBoundary::wired, c, long_run).profile.points[0];
  CHECK(wi.value > fr.value);
  CHECK(wi.value - fr.value > 2 * std::hypot(wi.stderr, fr.stderr));
}

TEST_CASE("bulk one-arm is increasing in p") {
  OneArmOptions opt;
  opt.origins = 64;
  double prev = -1, prev_err = 0;
  for (double p : {0.4, 0.55, 0.7}) {
    const auto pt = one_arm_profile({6}, ArmBoundary::bulk, {Model::independent_bond, 2, p, 0.0}, Schedule{4, 1, 0, 300, 1}, opt).profile.points[0];
    CHECK(pt.value > prev - 3 * std::hypot(pt.stderr, prev_err));
    prev = pt.value;
    prev_err = pt.stderr;
  }
}

TEST_CASE("annulus circuits agree with a winding oracle") {
  const auto g = share(build_lattice({LatticeKind::square, 32, Boundary::periodic}));
  CircuitDetector det(g, 3.0, 7.0);
  int open = 0, dual = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const double p = 0.35 + 0.3 * (seed % 3) / 2.0;
    const auto c = random_bonds(*g, p, seed);
    for (Point z : {Point{16, 16}, Point{10.5, 20.5}, Point{3.3, 28.1}}) {
      const auto ev = det.detect(c, z);
      const auto want = circuit_oracle(*g, c, z, 3.0, 7.0);
      CHECK(ev.open == want.open);
      CHECK(ev.dual_closed == want.dual_closed);
      CHECK(!(ev.open && ev.dual_closed));
      open += ev.open;
      dual += ev.dual_closed;
    }
  }
  CHECK(open > 5);
  CHECK(dual > 5);
  BondConfig all;
  all.open.assign(g->bond_count(), 1);
  CHECK(det.detect(all, {16, 16}).open);
  CHECK(!det.detect(all, {16, 16}).dual_closed);
  all.open.assign(g->bond_count(), 0);
  CHECK(!det.detect(all, {16, 16}).open);
  CHECK(det.detect(all, {16, 16}).dual_closed);
  CHECK_THROWS_AS(CircuitDetector(g, 7.0, 3.0), Error);
  CHECK_THROWS_AS(CircuitDetector(g, 3.0, 15.0), Error);
  CHECK_THROWS_AS(CircuitDetector(share(build_lattice({LatticeKind::triangular, 32, Boundary::periodic})), 3, 7), Error);
}

TEST_CASE("crossing counts agree with brute force") {
  const auto g = build_lattice({LatticeKind::square, 40, Boundary::periodic});
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = random_bonds(g, 0.5, seed);
    const auto lab = label_clusters(g, c, false);
    CrossingCounter counter(g, 2.0, 8.0);
    RandomStream r(seed, 1);
    for (int t = 0; t < 10; ++t) {
      const auto z = static_cast<std::uint32_t>(r.below(g.site_count()));
      std::set<std::int32_t> inner, outer;
      for (std::uint32_t s = 0; s < g.site_count(); ++s) {
        const double d = g.distance(s, g.pos[z]);
        if (d < 2.0) inner.insert(lab.cluster[s]);
        if (d > 8.0) outer.insert(lab.cluster[s]);
      }
      std::uint32_t n = 0;
      for (auto k : inner) n += outer.count(k);
      CHECK(counter.count(lab, z) == n);
    }
  }
}

TEST_CASE("crossing tail fit recovers a geometric tail") {
  // Synthetic rows: P(N >= k) = 0.5 * 0.4^(k-1), exactly.
  std::vector<SampleSeries> chains(4, SampleSeries(4));
  for (auto& s : chains)
    for (int r = 0; r < 32; ++r) {
      std::vector<double> row;
      for (int k = 1; k <= 4; ++k) row.push_back(0.5 * std::pow(0.4, k - 1) * (1 + 0.01 * ((r % 3) - 1)));
      s.push(row);
    }
  const auto tail = crossing_tail_from_chains(chains, {1000, 400, 160, 10});
  REQUIRE(tail.fit.valid);
  CHECK(tail.fit.ks == std::vector<int>{1, 2, 3});
  CHECK(tail.fit.lambda == Approx(0.4).epsilon(1e-6));
  CHECK(tail.fit.upper95 >= tail.fit.lambda);
  REQUIRE(tail.induction_gap.size() == 3);
  CHECK(tail.induction_gap[0] == Approx(0.2 - 0.25).margin(1e-3));
}

TEST_CASE("small-cluster moments at p = 0") {
  const auto g = share(build_lattice(padded_torus(LatticeKind::square, 8)));
  SmallClusterAccumulator acc(g, {0.05, 0.5});
  run_chain(g, {Model::fk_potts, 2, 0.0, 0.0}, Schedule{1, 1, 0, 3, 1}, 0, [&](const Snapshot& s) { acc.observe(s); });
  CHECK(acc.series().at(0, 0) == 81.0);
  CHECK(acc.series().at(0, 1) == 81.0);
  const auto m = small_cluster_moment(std::span<const SampleSeries>(&acc.series(), 1), acc.eps());
  for (const auto& pt : m.points) CHECK(pt.value == 1.0);
  const auto m2 = small_cluster_moment(std::span<const SampleSeries>(&acc.series(), 1), acc.eps(), 1.0 / 9);
  for (const auto& pt : m2.points) CHECK(pt.value == Approx(1.0));
  const auto e = default_eps_list();
  REQUIRE(e.size() == 6);
  CHECK(e.back() == Approx(std::sqrt(2.0) / 2));
  CHECK(std::is_sorted(e.begin(), e.end()));
}

TEST_CASE("small-cluster moment grows with the cutoff at criticality") {
  const auto g = share(build_lattice(padded_torus(LatticeKind::square, 16)));
  SmallClusterAccumulator acc(g, default_eps_list());
  run_chain(g, {Model::fk_potts, 2, pc2, 0.0}, Schedule{2, 1, 50, 200, 1}, 0, [&](const Snapshot& s) { acc.observe(s); });
  const auto m = small_cluster_moment(std::span<const SampleSeries>(&acc.series(), 1), acc.eps());
  for (std::size_t k = 1; k < m.points.size(); ++k) CHECK(m.points[k].value >= m.points[k - 1].value);
  CHECK(m.points.back().value <= 1.0);
}

TEST_CASE("hypothesis ratios on a pure power law") {
  RadialProfile prof;
  for (double r = 1; r <= 64; r *= 2) prof.points.push_back({r, std::pow(r, -0.25), 0.01 * std::pow(r, -0.25)});
  const auto h = hypothesis_ratio(prof, 0.25, 0.25);
  REQUIRE(h.upper.points.size() == 5);
  for (const auto& p : h.upper.points) CHECK(p.value == Approx(std::pow(0.25, 0.25)));
  for (const auto& p : h.lower.points) CHECK(p.value == Approx(1.0));
  CHECK_THROWS_AS(hypothesis_ratio(prof, 1.5, 0.25), Error);
  CHECK_THROWS_AS(hypothesis_ratio(prof, 0.001, 0.25), Error);
}

TEST_CASE("magnetization against the exact ghost fraction") {
  const LatticeSpec spec{LatticeKind::square, 2, Boundary::free};
  const CouplingSpec c{Model::fk_potts, 2, 0.5, 0.4};
  const auto ex = exact_enumerate(build_lattice(spec), c);
  const auto m = magnetization(spec, c, Schedule{6, 2, 50, 20000, 1});
  CHECK(std::abs(m.mean - ex.ghost_fraction) < 4 * m.stderr);
  CHECK(magnetization(spec, {Model::fk_potts, 2, 0.5, 0.0}, Schedule{}).mean == 0.0);
  const auto curve = magnetization_curve({0.1, 0.2, 0.4}, spec, c, Schedule{6, 1, 20, 2000, 1});
  CHECK(curve.fitted);
  CHECK(curve.curve.points[0].value < curve.curve.points[2].value);
}

TEST_CASE("plateau helpers") {
  const double pc = critical_point(Model::fk_potts, 2);
  const auto flat = near_critical_plateau({1.0 / 8, 1.0 / 16, 1.0 / 32}, 2.0, pc, [](double h, double) {
    return Estimate{std::pow(h, 1.0 / 15), 0.0, 1};
  });
  for (const auto& p : flat.points) CHECK(p.value == Approx(std::pow(2.0, 1.0 / 15)));
  CHECK(flat.points.front().scale == 1.0 / 8);
  CHECK(plateau_ratio(flat) == Approx(1.0));
  const auto zero = near_critical_plateau({0.5, 0.25, 0.125}, 0.0, pc, [](double, double) -> Estimate { throw 1; });
  for (const auto& p : zero.points) CHECK(p.value == 0.0);
  try {
    plateau_field(1e-200, 1.0, pc);
    FAIL("expected underflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::h_underflow);
  }
  CHECK(near_critical_p(2, 0.0, 0.01) == Approx(pc).epsilon(1e-14));
  CHECK(near_critical_p(2, 1.0, 0.01) < pc);
  CHECK(near_critical_p(2, -1.0, 0.01) > pc);
  CHECK(near_critical_p(3, 0.0, 0.1) == Approx(critical_point(Model::fk_potts, 3)).epsilon(1e-14));
}

TEST_CASE("Potts colour sign moments") {
  const auto g = share(build_lattice({LatticeKind::square, 12, Boundary::periodic}));
  PottsSignAccumulator acc(3);
  run_chain(g, {Model::fk_potts, 3, 0.5, 0.0}, Schedule{3, 1, 20, 400, 1}, 0, [&](const Snapshot& s) { acc.observe(s); });
  const auto e = estimate(std::span<const SampleSeries>(&acc.series(), 1));
  REQUIRE(e.size() == 10);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(e[k].mean) < 4 * e[k].stderr + 1e-12);
    CHECK(std::abs(e[3 + k].mean - 0.5) < 4 * e[3 + k].stderr + 1e-12);
    CHECK(std::abs(e[6 + k].mean + 0.25) < 4 * e[6 + k].stderr + 1e-12);
  }
  for (std::size_t r = 0; r < acc.series().rows(); ++r) CHECK(acc.series().at(r, 9) < 1e-15);
}

TEST_CASE("window spin sums") {
  const auto g = share(build_lattice(padded_torus(LatticeKind::square, 8)));
  WindowSpinAccumulator acc(g, RandomStream(1, 1), 4, 3);
  run_chain(g, {Model::fk_potts, 2, 1.0, 0.0}, Schedule{1, 1, 0, 20, 1}, 0, [&](const Snapshot& s) { acc.observe(s); });
  for (std::size_t r = 0; r < acc.series().rows(); ++r) CHECK(acc.series().at(r, 1) == 81.0 * 81.0);
}
