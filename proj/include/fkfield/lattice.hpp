#pragma once
// Finite square and triangular lattices, their planar duals, and the
// continuum regions (windows, discs, annuli) used by the estimators.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fkfield/error.hpp"

namespace fkfield {

enum class LatticeKind : std::uint8_t { square = 0, triangular = 1 };
enum class Boundary : std::uint8_t { free = 0, periodic = 1, wired = 2 };

inline const char* to_string(LatticeKind k) { return k == LatticeKind::square ? "square" : "triangular"; }
inline const char* to_string(Boundary b) {
  switch (b) {
    case Boundary::free: return "free";
    case Boundary::periodic: return "periodic";
    case Boundary::wired: return "wired";
  }
  return "?";
}

struct LatticeSpec {
  LatticeKind kind = LatticeKind::square;
  int n = 1;  // sites per side
  Boundary boundary = Boundary::free;
  double spacing = 1.0;  // continuum length of one lattice step

  void validate() const {
    if (n < 1) throw Error(ErrorCode::invalid_spec, "lattice size n must be >= 1");
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw Error(ErrorCode::invalid_spec, "spacing must be > 0");
  }
  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;
};

/// Periodic torus of side padding*window_n with spacing 1/window_n, so the
/// unit square holds a (window_n+1)^2 block of sites.
inline LatticeSpec padded_torus(LatticeKind kind, int window_n, int padding = 4) {
  return {kind, padding * window_n, Boundary::periodic, 1.0 / window_n};
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }

struct Cell {
  std::int32_t i = 0;
  std::int32_t j = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Continuum displacement of a lattice-coordinate step (unit spacing).
inline Point embed(LatticeKind kind, double di, double dj) {
  if (kind == LatticeKind::square) return {di, dj};
  return {di + 0.5 * dj, dj * (std::sqrt(3.0) / 2.0)};
}

struct Bond {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  std::int8_t di = 0;  // lattice step from u to v (unwrapped)
  std::int8_t dj = 0;
};

/// Planar dual: one dual site per face (plus an outer super-site for free
/// geometries) and one dual bond per primal bond, crossing it.
struct DualGraph {
  std::uint32_t site_count = 0;
  std::int64_t outer = -1;  // index of the outer super-site, -1 if none
  std::vector<Point> pos;
  std::vector<std::array<std::uint32_t, 2>> bonds;  // dual bond endpoints (faces)
  std::vector<std::uint32_t> of_primal;              // primal bond -> dual bond
  std::vector<std::uint32_t> to_primal;              // dual bond -> primal bond
  bool empty() const { return bonds.empty(); }
};

class LatticeGraph {
 public:
  LatticeSpec spec;
  std::vector<Cell> cells;
  std::vector<Point> pos;
  std::vector<Bond> bonds;
  std::vector<std::uint8_t> wired;  // per-site boundary flag, empty if no wiring
  DualGraph dual;
  bool periodic = false;
  int period = 0;  // torus side in lattice units when periodic

  std::size_t site_count() const { return pos.size(); }
  std::size_t bond_count() const { return bonds.size(); }
  bool has_wired() const { return !wired.empty(); }

  /// Incident bonds of a site in counter-clockwise order.
  std::span<const std::uint32_t> incident(std::uint32_t s) const {
    return {adj_.data() + adj_off_[s], adj_.data() + adj_off_[s + 1]};
  }
  std::size_t degree(std::uint32_t s) const { return adj_off_[s + 1] - adj_off_[s]; }
  std::uint32_t other(std::uint32_t bond, std::uint32_t s) const {
    return bonds[bond].u == s ? bonds[bond].v : bonds[bond].u;
  }
  /// Continuum direction of a bond as seen from site s.
  Point direction(std::uint32_t bond, std::uint32_t s) const {
    const Bond& b = bonds[bond];
    const Point d = spec.spacing * embed(spec.kind, b.di, b.dj);
    return b.u == s ? d : Point{-d.x, -d.y};
  }

  /// Site at lattice coordinates, wrapping on the torus; -1 when absent.
  std::int64_t site_at(std::int64_t i, std::int64_t j) const {
    if (periodic) {
      i = ((i % period) + period) % period;
      j = ((j % period) + period) % period;
    }
    if (i < imin_ || j < jmin_ || i >= imin_ + width_ || j >= jmin_ + height_) return -1;
    return lookup_[static_cast<std::size_t>((i - imin_) + width_ * (j - jmin_))];
  }

  /// Minimal-image displacement (plain difference when not periodic).
  Point displacement(Point from, Point to) const {
    Point d = to - from;
    if (!periodic) return d;
    const double L = period * spec.spacing;
    const double s3 = std::sqrt(3.0) / 2.0;
    double u = d.x;
    double v = d.y;
    if (spec.kind == LatticeKind::triangular) {
      v = d.y / s3;
      u = d.x - 0.5 * v;
    }
    u -= L * std::round(u / L);
    v -= L * std::round(v / L);
    Point best{std::numeric_limits<double>::infinity(), 0.0};
    double best_norm = std::numeric_limits<double>::infinity();
    for (int a = -1; a <= 1; ++a) {
      for (int b = -1; b <= 1; ++b) {
        const Point c = embed(spec.kind, u + a * L, v + b * L);
        const double nc = c.x * c.x + c.y * c.y;
        if (nc < best_norm) {
          best_norm = nc;
          best = c;
        }
      }
    }
    return best;
  }
  double distance(std::uint32_t site, Point z) const { return norm(displacement(z, pos[site])); }

  /// Finalize adjacency and the coordinate lookup table. Called by builders.
  void index() {
    const std::size_t n = pos.size();
    adj_off_.assign(n + 1, 0);
    for (const Bond& b : bonds) {
      ++adj_off_[b.u + 1];
      ++adj_off_[b.v + 1];
    }
    std::partial_sum(adj_off_.begin(), adj_off_.end(), adj_off_.begin());
    adj_.assign(adj_off_[n], 0);
    std::vector<std::uint32_t> fill(adj_off_.begin(), adj_off_.end() - 1);
    for (std::uint32_t e = 0; e < bonds.size(); ++e) {
      adj_[fill[bonds[e].u]++] = e;
      adj_[fill[bonds[e].v]++] = e;
    }
    for (std::uint32_t s = 0; s < n; ++s) {
      auto first = adj_.begin() + adj_off_[s];
      auto last = adj_.begin() + adj_off_[s + 1];
      std::sort(first, last, [&](std::uint32_t a, std::uint32_t b) {
        const Point da = direction(a, s);
        const Point db = direction(b, s);
        const double ta = std::atan2(da.y, da.x);
        const double tb = std::atan2(db.y, db.x);
        return ta != tb ? ta < tb : a < b;
      });
    }
    if (cells.empty()) return;
    imin_ = jmin_ = std::numeric_limits<std::int64_t>::max();
    std::int64_t imax = std::numeric_limits<std::int64_t>::min();
    std::int64_t jmax = imax;
    for (const Cell& c : cells) {
      imin_ = std::min<std::int64_t>(imin_, c.i);
      jmin_ = std::min<std::int64_t>(jmin_, c.j);
      imax = std::max<std::int64_t>(imax, c.i);
      jmax = std::max<std::int64_t>(jmax, c.j);
    }
    width_ = imax - imin_ + 1;
    height_ = jmax - jmin_ + 1;
    lookup_.assign(static_cast<std::size_t>(width_ * height_), -1);
    for (std::size_t s = 0; s < cells.size(); ++s)
      lookup_[static_cast<std::size_t>((cells[s].i - imin_) + width_ * (cells[s].j - jmin_))] =
          static_cast<std::int64_t>(s);
  }

 private:
  std::vector<std::uint32_t> adj_off_;
  std::vector<std::uint32_t> adj_;
  std::vector<std::int64_t> lookup_;
  std::int64_t imin_ = 0, jmin_ = 0, width_ = 0, height_ = 0;
};

namespace detail {

inline void add_site(LatticeGraph& g, Cell c) {
  g.cells.push_back(c);
  g.pos.push_back(g.spec.spacing * embed(g.spec.kind, c.i, c.j));
}

// Faces of the regular n x n lattices, indexed by lower-left cell.
// Square: face (i,j) has corners (i,j),(i+1,j),(i,j+1),(i+1,j+1).
// Triangular: up(i,j) = {(i,j),(i+1,j),(i,j+1)}, down(i,j) = {(i+1,j),(i+1,j+1),(i,j+1)}.
inline void build_regular_dual(LatticeGraph& g) {
  const int n = g.spec.n;
  const bool per = g.periodic;
  const bool square = g.spec.kind == LatticeKind::square;
  const int fside = per ? n : n - 1;
  const std::uint32_t faces_per_cell = square ? 1 : 2;
  const std::uint32_t inner = static_cast<std::uint32_t>(std::max(fside, 0)) *
                              static_cast<std::uint32_t>(std::max(fside, 0)) * faces_per_cell;
  DualGraph& d = g.dual;
  d.site_count = inner + (per ? 0 : 1);
  d.outer = per ? -1 : static_cast<std::int64_t>(inner);
  d.pos.resize(d.site_count);
  auto face = [&](int i, int j, int which) -> std::uint32_t {
    if (per) {
      i = ((i % n) + n) % n;
      j = ((j % n) + n) % n;
    } else if (i < 0 || j < 0 || i >= fside || j >= fside) {
      return inner;
    }
    return static_cast<std::uint32_t>((i + fside * j) * static_cast<int>(faces_per_cell) + which);
  };
  for (int j = 0; j < fside; ++j) {
    for (int i = 0; i < fside; ++i) {
      if (square) {
        d.pos[face(i, j, 0)] = g.spec.spacing * embed(g.spec.kind, i + 0.5, j + 0.5);
      } else {
        d.pos[face(i, j, 0)] = g.spec.spacing * embed(g.spec.kind, i + 1.0 / 3.0, j + 1.0 / 3.0);
        d.pos[face(i, j, 1)] = g.spec.spacing * embed(g.spec.kind, i + 2.0 / 3.0, j + 2.0 / 3.0);
      }
    }
  }
  if (!per) d.pos[inner] = g.spec.spacing * Point{-1.0, -1.0};

  std::vector<std::array<std::uint32_t, 2>> raw(g.bonds.size());
  for (std::size_t e = 0; e < g.bonds.size(); ++e) {
    const Bond& b = g.bonds[e];
    const Cell c = g.cells[b.u];
    int i = c.i;
    int j = c.j;
    std::uint32_t f1 = 0;
    std::uint32_t f2 = 0;
    if (square) {
      if (b.dj == 0) {  // horizontal, normalized so u is the left end
        if (b.di < 0) i -= 1;
        f1 = face(i, j - 1, 0);
        f2 = face(i, j, 0);
      } else {
        if (b.dj < 0) j -= 1;
        f1 = face(i - 1, j, 0);
        f2 = face(i, j, 0);
      }
    } else {
      int di = b.di;
      int dj = b.dj;
      if (dj < 0 || (dj == 0 && di < 0)) {  // orient upward / rightward
        i += di;
        j += dj;
        di = -di;
        dj = -dj;
      }
      if (dj == 0) {  // (i,j)-(i+1,j)
        f1 = face(i, j, 0);
        f2 = face(i, j - 1, 1);
      } else if (di == 0) {  // (i,j)-(i,j+1)
        f1 = face(i, j, 0);
        f2 = face(i - 1, j, 1);
      } else {  // (i,j)-(i-1,j+1): diagonal of cell (i-1,j)
        f1 = face(i - 1, j, 0);
        f2 = face(i - 1, j, 1);
      }
    }
    raw[e] = {std::min(f1, f2), std::max(f1, f2)};
  }
  // Dual bonds are stored in lexicographic face order, so the two index maps
  // are genuine inverse permutations.
  std::vector<std::uint32_t> order(g.bonds.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return raw[a] < raw[b]; });
  d.bonds.resize(order.size());
  d.to_primal = order;
  d.of_primal.resize(order.size());
  for (std::uint32_t k = 0; k < order.size(); ++k) {
    d.bonds[k] = raw[order[k]];
    d.of_primal[order[k]] = k;
  }
}

}  // namespace detail

/// Square or triangular lattice with n x n sites. Periodic lattices may carry
/// parallel bonds for n <= 2 (torus degree is always 4 resp. 6).
inline LatticeGraph build_lattice(const LatticeSpec& spec) {
  spec.validate();
  LatticeGraph g;
  g.spec = spec;
  const int n = spec.n;
  g.periodic = spec.boundary == Boundary::periodic;
  g.period = g.periodic ? n : 0;
  g.cells.reserve(static_cast<std::size_t>(n) * n);
  g.pos.reserve(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) detail::add_site(g, {i, j});

  auto idx = [n](int i, int j) { return static_cast<std::uint32_t>(i + n * j); };
  std::vector<std::array<int, 2>> steps = {{1, 0}, {0, 1}};
  if (spec.kind == LatticeKind::triangular) steps.push_back({-1, 1});
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      for (auto [di, dj] : steps) {
        int ti = i + di;
        int tj = j + dj;
        if (g.periodic) {
          ti = (ti + n) % n;
          tj = (tj + n) % n;
        } else if (ti < 0 || tj < 0 || ti >= n || tj >= n) {
          continue;
        }
        g.bonds.push_back({idx(i, j), idx(ti, tj), static_cast<std::int8_t>(di), static_cast<std::int8_t>(dj)});
      }
    }
  }
  if (spec.boundary == Boundary::wired) {
    g.wired.assign(g.pos.size(), 0);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (i == 0 || j == 0 || i == n - 1 || j == n - 1) g.wired[idx(i, j)] = 1;
  }
  g.index();
  detail::build_regular_dual(g);
  return g;
}

/// Sites of the lattice within Euclidean distance `radius` (lattice units) of
/// the origin, with nearest-neighbour bonds between them. With a wired
/// boundary the sites having a lattice neighbour outside the disc are flagged
/// for pre-merging into one boundary cluster.
inline LatticeGraph build_disc(LatticeKind kind, double radius, Boundary boundary, double spacing = 1.0) {
  if (!(radius >= 0.0)) throw Error(ErrorCode::invalid_spec, "disc radius must be >= 0");
  if (boundary == Boundary::periodic) throw Error(ErrorCode::invalid_spec, "disc cannot be periodic");
  LatticeGraph g;
  g.spec = {kind, static_cast<int>(std::ceil(2 * radius + 1)), boundary, spacing};
  const int R = static_cast<int>(std::ceil(radius * 2.0)) + 2;
  auto inside = [&](int i, int j) { return norm(embed(kind, i, j)) <= radius + 1e-9; };
  for (int j = -R; j <= R; ++j)
    for (int i = -R; i <= R; ++i)
      if (inside(i, j)) detail::add_site(g, {i, j});
  g.index();
  std::vector<std::array<int, 2>> steps = {{1, 0}, {0, 1}};
  if (kind == LatticeKind::triangular) steps.push_back({-1, 1});
  for (std::uint32_t s = 0; s < g.cells.size(); ++s) {
    for (auto [di, dj] : steps) {
      const std::int64_t t = g.site_at(g.cells[s].i + di, g.cells[s].j + dj);
      if (t >= 0) g.bonds.push_back({s, static_cast<std::uint32_t>(t), static_cast<std::int8_t>(di), static_cast<std::int8_t>(dj)});
    }
  }
  if (boundary == Boundary::wired) {
    g.wired.assign(g.pos.size(), 0);
    const std::array<std::array<int, 2>, 6> all = {{{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {-1, 1}, {1, -1}}};
    const int dirs = kind == LatticeKind::square ? 4 : 6;
    for (std::uint32_t s = 0; s < g.cells.size(); ++s)
      for (int k = 0; k < dirs; ++k)
        if (!inside(g.cells[s].i + all[k][0], g.cells[s].j + all[k][1])) g.wired[s] = 1;
  }
  g.index();
  return g;
}

/// Arbitrary finite subgraph of the square lattice from explicit cells and
/// bonds (pairs of indices into `cells`, which must be lattice neighbours).
inline LatticeGraph build_subgraph(std::span<const Cell> cells, std::span<const std::array<std::uint32_t, 2>> bonds) {
  LatticeGraph g;
  g.spec = {LatticeKind::square, 1, Boundary::free, 1.0};
  for (const Cell& c : cells) detail::add_site(g, c);
  for (auto [u, v] : bonds) {
    if (u >= cells.size() || v >= cells.size()) throw Error(ErrorCode::invalid_spec, "bond endpoint out of range");
    const int di = cells[v].i - cells[u].i;
    const int dj = cells[v].j - cells[u].j;
    if (std::abs(di) + std::abs(dj) != 1) throw Error(ErrorCode::invalid_spec, "subgraph bond joins non-neighbours");
    g.bonds.push_back({u, v, static_cast<std::int8_t>(di), static_cast<std::int8_t>(dj)});
  }
  g.index();
  return g;
}

/// Induced subgraph of the square lattice on the given cells.
inline LatticeGraph build_induced_subgraph(std::span<const Cell> cells) {
  std::vector<std::array<std::uint32_t, 2>> bonds;
  for (std::uint32_t a = 0; a < cells.size(); ++a)
    for (std::uint32_t b = a + 1; b < cells.size(); ++b)
      if (std::abs(cells[a].i - cells[b].i) + std::abs(cells[a].j - cells[b].j) == 1) bonds.push_back({a, b});
  return build_subgraph(cells, bonds);
}

// ---------------------------------------------------------------------------
// Regions

struct Window {
  Point corner;
  double width = 1.0;
  double height = 1.0;
};
struct Disc {
  Point center;
  double radius = 1.0;
};
struct Annulus {
  Point center;
  double r1 = 0.5;
  double r2 = 1.0;
};
using Region = std::variant<Window, Disc, Annulus>;

inline void validate(const Region& region) {
  if (const auto* w = std::get_if<Window>(&region)) {
    if (!(w->width > 0 && w->height > 0)) throw Error(ErrorCode::invalid_argument, "window sides must be > 0");
  } else if (const auto* d = std::get_if<Disc>(&region)) {
    if (!(d->radius > 0)) throw Error(ErrorCode::invalid_argument, "disc radius must be > 0");
  } else {
    const auto& a = std::get<Annulus>(region);
    if (!(a.r1 > 0 && a.r1 < a.r2)) throw Error(ErrorCode::degenerate_annulus, "need 0 < r1 < r2");
  }
}

enum class Zone : std::uint8_t { inside, outside, inner, annulus, outer };

struct PointClass {
  double distance = 0.0;  // to the centre (disc, annulus) or corner (window)
  Zone zone = Zone::outside;
  bool inside() const { return zone == Zone::inside || zone == Zone::annulus; }
};

/// Membership with the inequalities used for crossing counts: inner means
/// ||y-z|| < r1, outer means ||y-z|| > r2; discs and windows are closed.
inline PointClass classify_point(const LatticeGraph& g, std::uint32_t site, const Region& region) {
  constexpr double tol = 1e-12;
  const Point p = g.pos[site];
  if (const auto* w = std::get_if<Window>(&region)) {
    const Point d = g.displacement(w->corner, p);
    const bool in = d.x >= -tol && d.y >= -tol && d.x <= w->width + tol && d.y <= w->height + tol;
    return {norm(d), in ? Zone::inside : Zone::outside};
  }
  if (const auto* disc = std::get_if<Disc>(&region)) {
    const double r = norm(g.displacement(disc->center, p));
    return {r, r <= disc->radius + tol ? Zone::inside : Zone::outside};
  }
  const auto& a = std::get<Annulus>(region);
  const double r = norm(g.displacement(a.center, p));
  const Zone z = r < a.r1 ? Zone::inner : (r > a.r2 ? Zone::outer : Zone::annulus);
  return {r, z};
}

struct WindowSite {
  std::uint32_t site;
  Point at;  // position of the image lying in the window
};

/// Sites in a closed window, with periodic images resolved, sorted by (y, x).
inline std::vector<WindowSite> sites_in_window(const LatticeGraph& g, const Window& w) {
  validate(Region{w});
  constexpr double tol = 1e-9;
  std::vector<WindowSite> out;
  for (std::uint32_t s = 0; s < g.site_count(); ++s) {
    const Point d = g.periodic ? g.displacement(w.corner + 0.5 * Point{w.width, w.height}, g.pos[s]) +
                                     0.5 * Point{w.width, w.height}
                               : g.pos[s] - w.corner;
    if (!(d.x >= -tol && d.y >= -tol && d.x <= w.width + tol && d.y <= w.height + tol)) continue;
    Point at = g.pos[s];
    if (g.periodic) {
      // Recompute the image from integer coordinates so that positions do not
      // depend on the window.
      const double a = g.spec.spacing;
      const Point rel = (1.0 / a) * (w.corner + d - g.pos[s]);
      const double dj = g.spec.kind == LatticeKind::square ? rel.y : rel.y / (std::sqrt(3.0) / 2.0);
      const double di = rel.x - (g.spec.kind == LatticeKind::square ? 0.0 : 0.5 * dj);
      const auto P = static_cast<double>(g.period);
      const double si = P * std::round(di / P);
      const double sj = P * std::round(dj / P);
      at = a * embed(g.spec.kind, g.cells[s].i + si, g.cells[s].j + sj);
    }
    out.push_back({s, at});
  }
  std::sort(out.begin(), out.end(), [](const WindowSite& a, const WindowSite& b) {
    return a.at.y != b.at.y ? a.at.y < b.at.y : a.at.x < b.at.x;
  });
  return out;
}

/// Continuum extent check: true if the box [lo, hi] lies within the convex
/// hull of site positions (or anywhere, for periodic lattices whose unwrapped
/// extent covers it).
inline bool box_within_lattice(const LatticeGraph& g, Point lo, Point hi) {
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const Point& p : g.pos) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }
  if (g.periodic) {
    const double L = g.period * g.spec.spacing;
    return hi.x - lo.x <= L && hi.y - lo.y <= L * (g.spec.kind == LatticeKind::square ? 1.0 : std::sqrt(3.0) / 2.0);
  }
  constexpr double tol = 1e-9;
  return lo.x >= xmin - tol && lo.y >= ymin - tol && hi.x <= xmax + tol && hi.y <= ymax + tol;
}

}  // namespace fkfield
