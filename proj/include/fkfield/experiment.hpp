#pragma once
// Experiment configuration, oracle verification, pipelines and artifacts.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkfield/estimators.hpp"
#include "fkfield/exact.hpp"
#include "fkfield/field.hpp"
#include "fkfield/fit.hpp"
#include "fkfield/medial.hpp"
#include "fkfield/sampler.hpp"
#include "fkfield/snapshot_io.hpp"

namespace fkfield {

inline constexpr const char* code_version = "fkfield 1.0.0";

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string kind = "twopoint";
  LatticeKind lattice = LatticeKind::square;
  Boundary boundary = Boundary::periodic;
  int n = 64;        // window sites per side; spacing a = 1/n
  int padding = 4;   // torus side / n
  int width = 0;     // oracle grid, 0 means n
  int height = 0;
  Model model = Model::fk_potts;
  int q = 2;
  bool p_critical = true;
  double p = 0.0;
  double h = 0.0;
  std::uint64_t seed = 1;
  int chains = 1;
  int sweeps = 1000;
  int therm = -1;  // -1: adaptive
  int thinning = 1;
  std::vector<double> radii;
  std::vector<double> eps;
  std::vector<double> h_list;
  std::vector<double> a_list;
  double r1 = 0.125;
  double r2 = 0.25;
  int kmax = 5;
  std::string arm_boundary = "bulk";
  double lambda = 1.0;
  double temperature_offset = 0.0;  // T - T_c = temperature_offset * a
  std::string test_function = "unit";
  std::string test_function_g = "unit";
  double eps_prime = 0.25;
  double fit_lo = 0.0;  // 0: range policy default
  double fit_hi = 0.0;
  int base_points = 32;
  int origins = 16;
  bool write_snapshots = false;
  std::string out = "fkfield-out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  double spacing() const { return 1.0 / n; }
  Schedule schedule() const { return {seed, chains, therm, sweeps, thinning}; }
  double resolved_p() const { return p_critical ? critical_point(model, q, lattice) : p; }
  CouplingSpec coupling() const { return {model, q, resolved_p(), h}; }
};

namespace detail {

struct KeyDoc {
  const char* key;
  const char* type;
  const char* doc;
};

inline const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> keys = {
      {"kind", "oracle|twopoint|onearm|rsw|crossings|prop1|field|theta-scaling|offcritical|potts|dc", "experiment pipeline"},
      {"lattice", "square|triangular", "lattice geometry"},
      {"boundary", "free|periodic|wired", "boundary condition (oracle grids are free)"},
      {"n", "int >= 1", "window sites per side; lattice spacing a = 1/n"},
      {"padding", "int >= 1", "torus side in units of the window"},
      {"width", "int >= 0", "oracle grid width in sites (0: n)"},
      {"height", "int >= 0", "oracle grid height in sites (0: n)"},
      {"model", "fk-potts|independent-site|independent-bond", "measure being sampled"},
      {"q", "int >= 1", "number of Potts colours"},
      {"p", "real in [0,1] | critical", "bond (or site) density"},
      {"h", "real >= 0", "external field in units of the coupling"},
      {"seed", "uint64", "master seed"},
      {"chains", "int >= 1", "independent chains"},
      {"sweeps", "int >= 1", "measurement sweeps per chain"},
      {"therm", "int >= 0 | auto", "thermalization sweeps"},
      {"thinning", "int >= 1", "sweeps between snapshots"},
      {"radii", "list of reals", "one-arm radii (continuum units)"},
      {"eps", "list of reals", "diameter cutoffs (default sqrt(2) 2^-m, m = 1..6)"},
      {"h_list", "list of reals", "field values for the magnetization curve"},
      {"a_list", "list of reals", "lattice spacings for scaling series"},
      {"r1", "real > 0", "inner annulus radius"},
      {"r2", "real > r1", "outer annulus radius"},
      {"kmax", "int >= 1", "largest crossing count tabulated"},
      {"arm_boundary", "free|wired|bulk", "one-arm boundary mode"},
      {"lambda", "real >= 0", "plateau field coefficient, h = lambda a^(15/8)"},
      {"temperature_offset", "real", "near-critical offset c in T - T_c = c a"},
      {"test_function", "unit | gaussian:x,y,sigma | square:L", "test function f"},
      {"test_function_g", "unit | gaussian:x,y,sigma | square:L", "second test function g"},
      {"eps_prime", "real in (0,1)", "scale ratio for hypothesis ratios"},
      {"fit_lo", "real >= 0", "lower fit bound (0: default policy)"},
      {"fit_hi", "real >= 0", "upper fit bound (0: default policy)"},
      {"base_points", "int >= 1", "random base points per snapshot"},
      {"origins", "int >= 1", "random origins per snapshot (bulk one-arm)"},
      {"write_snapshots", "true|false", "persist bond snapshots as binary streams"},
      {"out", "path", "output directory"},
  };
  return keys;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void bad_field(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::invalid_config, "field '" + key + "': " + what);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad_field(key, "expected a real number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    bad_field(key, "expected an integer, got '" + v + "'");
  }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

inline std::string list_str(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

}  // namespace detail

/// Parses a test-function description: unit, square:L or gaussian:x,y,sigma.
inline TestFunction parse_test_function(const std::string& desc, const std::string& key = "test_function") {
  if (desc == "unit") return TestFunction::unit_square();
  const auto colon = desc.find(':');
  const std::string head = desc.substr(0, colon);
  const auto args = colon == std::string::npos ? std::vector<double>{} : detail::parse_list(key, desc.substr(colon + 1));
  if (head == "square" && args.size() == 1 && args[0] > 0) return TestFunction::square(args[0]);
  if (head == "gaussian" && args.size() == 3 && args[2] > 0) return TestFunction::gaussian({args[0], args[1]}, args[2]);
  detail::bad_field(key, "expected unit, square:L or gaussian:x,y,sigma, got '" + desc + "'");
}

inline std::string serialize(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "kind = " << c.kind << "\n"
     << "lattice = " << to_string(c.lattice) << "\n"
     << "boundary = " << to_string(c.boundary) << "\n"
     << "n = " << c.n << "\n"
     << "padding = " << c.padding << "\n"
     << "width = " << c.width << "\n"
     << "height = " << c.height << "\n"
     << "model = " << to_string(c.model) << "\n"
     << "q = " << c.q << "\n"
     << "p = " << (c.p_critical ? std::string("critical") : fmt_double(c.p)) << "\n"
     << "h = " << fmt_double(c.h) << "\n"
     << "seed = " << c.seed << "\n"
     << "chains = " << c.chains << "\n"
     << "sweeps = " << c.sweeps << "\n"
     << "therm = " << (c.therm < 0 ? std::string("auto") : std::to_string(c.therm)) << "\n"
     << "thinning = " << c.thinning << "\n"
     << "radii = " << detail::list_str(c.radii) << "\n"
     << "eps = " << detail::list_str(c.eps) << "\n"
     << "h_list = " << detail::list_str(c.h_list) << "\n"
     << "a_list = " << detail::list_str(c.a_list) << "\n"
     << "r1 = " << fmt_double(c.r1) << "\n"
     << "r2 = " << fmt_double(c.r2) << "\n"
     << "kmax = " << c.kmax << "\n"
     << "arm_boundary = " << c.arm_boundary << "\n"
     << "lambda = " << fmt_double(c.lambda) << "\n"
     << "temperature_offset = " << fmt_double(c.temperature_offset) << "\n"
     << "test_function = " << c.test_function << "\n"
     << "test_function_g = " << c.test_function_g << "\n"
     << "eps_prime = " << fmt_double(c.eps_prime) << "\n"
     << "fit_lo = " << fmt_double(c.fit_lo) << "\n"
     << "fit_hi = " << fmt_double(c.fit_hi) << "\n"
     << "base_points = " << c.base_points << "\n"
     << "origins = " << c.origins << "\n"
     << "write_snapshots = " << (c.write_snapshots ? "true" : "false") << "\n"
     << "out = " << c.out << "\n";
  return os.str();
}

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k = {"oracle", "twopoint", "onearm",      "rsw",         "crossings", "prop1",
                                             "field",  "theta-scaling", "offcritical", "potts", "dc"};
  return k;
}

/// Kind-specific completeness and value checks; throws invalid-config.
inline void validate(const ExperimentConfig& c) {
  using detail::bad_field;
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) bad_field("kind", "unknown experiment kind '" + c.kind + "'");
  if (c.n < 1) bad_field("n", "must be >= 1");
  if (c.padding < 1) bad_field("padding", "must be >= 1");
  if (c.width < 0 || c.height < 0) bad_field("width", "must be >= 0");
  if (c.q < 1 || c.q > 255) bad_field("q", "must lie in [1, 255]");
  if (!c.p_critical && !(c.p >= 0 && c.p <= 1)) bad_field("p", "must lie in [0, 1]");
  if (!(c.h >= 0)) bad_field("h", "must be >= 0");
  if (c.model != Model::fk_potts && c.h != 0) bad_field("h", "independent models take h = 0");
  if (c.chains < 1) bad_field("chains", "must be >= 1");
  if (c.sweeps < 1) bad_field("sweeps", "must be >= 1");
  if (c.thinning < 1) bad_field("thinning", "must be >= 1");
  if (c.kmax < 1) bad_field("kmax", "must be >= 1");
  if (c.base_points < 1) bad_field("base_points", "must be >= 1");
  if (c.origins < 1) bad_field("origins", "must be >= 1");
  if (c.p_critical && c.kind != "dc") {
    try {
      (void)critical_point(c.model, c.q, c.lattice);
    } catch (const Error& e) {
      bad_field("p", std::string("'critical' unavailable: ") + e.what());
    }
  }
  for (double e : c.eps)
    if (!(e > 0 && e <= std::sqrt(2.0) + 1e-12)) bad_field("eps", "cutoffs must lie in (0, sqrt 2]");
  if (!std::is_sorted(c.eps.begin(), c.eps.end())) bad_field("eps", "must be increasing");
  for (double a : c.a_list)
    if (!(a > 0 && a <= 1)) bad_field("a_list", "spacings must lie in (0, 1]");
  (void)parse_test_function(c.test_function, "test_function");
  (void)parse_test_function(c.test_function_g, "test_function_g");
  const bool circuits = c.kind == "rsw" || c.kind == "crossings";
  if (circuits && !(c.r1 > 0 && c.r2 > c.r1)) bad_field("r2", "annulus needs 0 < r1 < r2");
  if (c.kind == "oracle") {
    const int w = c.width ? c.width : c.n, h = c.height ? c.height : c.n;
    const int bonds = c.lattice == LatticeKind::square ? w * (h - 1) + h * (w - 1) : w * (h - 1) + h * (w - 1) + (w - 1) * (h - 1);
    if (bonds > 12) bad_field("width", "oracle grids are limited to 12 bonds");
  }
  if (c.kind == "twopoint" && c.h != 0) bad_field("h", "two-point profiles need h = 0");
  if (c.kind == "onearm") {
    if (c.radii.empty()) bad_field("radii", "required for kind=onearm");
    if (c.arm_boundary != "free" && c.arm_boundary != "wired" && c.arm_boundary != "bulk")
      bad_field("arm_boundary", "expected free, wired or bulk");
  }
  if (c.kind == "rsw" && c.lattice != LatticeKind::square) bad_field("lattice", "circuits need the square lattice");
  if (c.kind == "theta-scaling" && c.a_list.size() < 3) bad_field("a_list", "needs at least three spacings");
  if (c.kind == "offcritical" && c.h_list.size() < 3 && c.a_list.size() < 3)
    bad_field("h_list", "needs at least three fields (or a_list for the plateau)");
  if (c.kind == "potts" && c.q < 3) bad_field("q", "kind=potts needs q >= 3");
  if (c.kind == "dc" && c.a_list.size() < 2) bad_field("a_list", "needs at least two spacings");
  if (!(c.eps_prime > 0 && c.eps_prime < 1)) bad_field("eps_prime", "must lie in (0, 1)");
}

/// Parses flat `key = value` text; '#' starts a comment.
inline ExperimentConfig parse_config(const std::string& text) {
  using namespace detail;
  ExperimentConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::invalid_config, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (seen.count(key)) bad_field(key, "given twice (lines " + std::to_string(seen[key]) + " and " + std::to_string(lineno) + ")");
    seen[key] = lineno;
    auto as_int = [&] {
      const auto x = parse_int(key, v);
      if (x < -2147483647LL || x > 2147483647LL) bad_field(key, "out of range");
      return static_cast<int>(x);
    };
    if (key == "kind") c.kind = v;
    else if (key == "lattice") {
      if (v == "square") c.lattice = LatticeKind::square;
      else if (v == "triangular") c.lattice = LatticeKind::triangular;
      else bad_field(key, "expected square or triangular, got '" + v + "'");
    } else if (key == "boundary") {
      if (v == "free") c.boundary = Boundary::free;
      else if (v == "periodic") c.boundary = Boundary::periodic;
      else if (v == "wired") c.boundary = Boundary::wired;
      else bad_field(key, "expected free, periodic or wired, got '" + v + "'");
    } else if (key == "n") c.n = as_int();
    else if (key == "padding") c.padding = as_int();
    else if (key == "width") c.width = as_int();
    else if (key == "height") c.height = as_int();
    else if (key == "model") {
      if (v == "fk-potts") c.model = Model::fk_potts;
      else if (v == "independent-site") c.model = Model::independent_site;
      else if (v == "independent-bond") c.model = Model::independent_bond;
      else bad_field(key, "expected fk-potts, independent-site or independent-bond, got '" + v + "'");
    } else if (key == "q") c.q = as_int();
    else if (key == "p") {
      c.p_critical = v == "critical";
      c.p = c.p_critical ? 0.0 : parse_double(key, v);
    } else if (key == "h") c.h = parse_double(key, v);
    else if (key == "seed") {
      try {
        std::size_t pos = 0;
        c.seed = std::stoull(v, &pos);
        if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
      } catch (const std::exception&) {
        bad_field(key, "expected an unsigned integer, got '" + v + "'");
      }
    } else if (key == "chains") c.chains = as_int();
    else if (key == "sweeps") c.sweeps = as_int();
    else if (key == "therm") {
      if (v == "auto") c.therm = -1;
      else {
        c.therm = as_int();
        if (c.therm < 0) bad_field(key, "must be >= 0 or auto");
      }
    } else if (key == "thinning") c.thinning = as_int();
    else if (key == "radii") c.radii = parse_list(key, v);
    else if (key == "eps") c.eps = parse_list(key, v);
    else if (key == "h_list") c.h_list = parse_list(key, v);
    else if (key == "a_list") c.a_list = parse_list(key, v);
    else if (key == "r1") c.r1 = parse_double(key, v);
    else if (key == "r2") c.r2 = parse_double(key, v);
    else if (key == "kmax") c.kmax = as_int();
    else if (key == "arm_boundary") c.arm_boundary = v;
    else if (key == "lambda") c.lambda = parse_double(key, v);
    else if (key == "temperature_offset") c.temperature_offset = parse_double(key, v);
    else if (key == "test_function") c.test_function = v;
    else if (key == "test_function_g") c.test_function_g = v;
    else if (key == "eps_prime") c.eps_prime = parse_double(key, v);
    else if (key == "fit_lo") c.fit_lo = parse_double(key, v);
    else if (key == "fit_hi") c.fit_hi = parse_double(key, v);
    else if (key == "base_points") c.base_points = as_int();
    else if (key == "origins") c.origins = as_int();
    else if (key == "write_snapshots") {
      if (v != "true" && v != "false") bad_field(key, "expected true or false");
      c.write_snapshots = v == "true";
    } else if (key == "out") c.out = v;
    else throw Error(ErrorCode::invalid_config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::invalid_config, "cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

inline std::string config_schema() {
  std::ostringstream os;
  os << "# fkfield experiment configuration: one 'key = value' per line, '#' comments.\n"
     << "# Lists are comma separated. Unknown keys are rejected.\n";
  const ExperimentConfig defaults;
  std::istringstream def(serialize(defaults));
  std::map<std::string, std::string> dv;
  std::string line;
  while (std::getline(def, line)) {
    const auto eq = line.find('=');
    dv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  for (const auto& k : detail::config_keys())
    os << k.key << " : " << k.type << " (default: " << (dv[k.key].empty() ? "empty" : dv[k.key]) << ") -- " << k.doc << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Oracle verification

struct OracleCheck {
  std::string name;
  double sampled = 0.0;
  double exact = 0.0;
  double stderr = 0.0;
  double sigmas = 0.0;  // |sampled - exact| / stderr (0 when both agree exactly)
  bool ok = true;
};

struct OracleReport {
  bool pass = true;
  double max_abs_deviation = 0.0;
  double max_sigmas = 0.0;
  std::uint64_t samples = 0;
  std::vector<OracleCheck> checks;
};

inline constexpr std::size_t oracle_bond_limit = 12;

/// Samples the graph and compares connectivities, E sum |C|^2, the
/// cluster-count distribution and (where traceable) the loop-count
/// distribution with exact enumeration. A check passes when the deviation is
/// at most `tolerance` standard errors; for probabilities the error is
/// floored at the binomial value sqrt(P (1 - P) / samples).
inline OracleReport verify_against_oracle(std::shared_ptr<const LatticeGraph> g, const CouplingSpec& coupling,
                                          const Schedule& schedule, int jobs = 1, double tolerance = 4.0,
                                          std::size_t batches = 100) {
  if (g->bond_count() > oracle_bond_limit) throw Error(ErrorCode::too_many_bonds, "oracle verification is limited to 12 bonds");
  const auto ex = exact_enumerate(*g, coupling);
  const std::size_t n = g->site_count();
  const bool loops = !ex.loop_count.empty();
  const std::size_t max_loops = n + g->bond_count() + 1;
  // Columns: pairs x < y, moment, P(k = 1..n), P(l = 1..max_loops).
  const std::size_t pairs = n * (n - 1) / 2;
  const std::size_t width = pairs + 1 + n + (loops ? max_loops : 0);
  struct Acc {
    const LatticeGraph* g;
    std::size_t width, n, pairs, max_loops;
    bool loops;
    SampleSeries s;
    void observe(const Snapshot& snap) {
      const auto& lab = snap.labels();
      std::vector<double> row(width, 0.0);
      std::size_t col = 0;
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = x + 1; y < n; ++y) row[col++] = lab.cluster[x] == lab.cluster[y];
      double m = 0.0;
      for (auto sz : lab.sizes) m += static_cast<double>(sz) * sz;
      row[col++] = m;
      const std::size_t k = lab.count;
      if (k >= 1 && k <= n) row[col + k - 1] = 1.0;
      col += n;
      if (loops) {
        const auto l = trace_medial_loops(*g, snap.bonds()).loops.size();
        if (l >= 1 && l <= max_loops) row[col + l - 1] = 1.0;
      }
      s.push(row);
    }
  };
  auto [accs, sums] = run_ensemble(
      g, coupling, schedule, [&](std::uint32_t) { return Acc{g.get(), width, n, pairs, max_loops, loops, SampleSeries(width)}; }, jobs);
  std::vector<SampleSeries> chains;
  for (auto& a : accs) chains.push_back(std::move(a.s));
  const auto est = estimate(chains, batches);
  OracleReport rep;
  rep.samples = est.front().samples;
  auto check = [&](std::string name, const Estimate& e, double exact, bool probability) {
    OracleCheck c{std::move(name), e.mean, exact, e.stderr};
    if (probability) c.stderr = std::max(c.stderr, std::sqrt(std::max(0.0, exact * (1 - exact)) / static_cast<double>(e.samples)));
    const double dev = std::abs(e.mean - exact);
    c.sigmas = dev == 0.0 ? 0.0 : (c.stderr > 0 ? dev / c.stderr : std::numeric_limits<double>::infinity());
    c.ok = dev <= 1e-12 || c.sigmas <= tolerance;
    rep.max_abs_deviation = std::max(rep.max_abs_deviation, dev);
    rep.max_sigmas = std::max(rep.max_sigmas, c.sigmas);
    rep.pass = rep.pass && c.ok;
    rep.checks.push_back(std::move(c));
  };
  std::size_t col = 0;
  for (std::size_t x = 0; x < n; ++x)
    for (std::size_t y = x + 1; y < n; ++y)
      check("P(" + std::to_string(x) + "<->" + std::to_string(y) + ")", est[col++], ex.p(x, y), true);
  check("E sum |C|^2", est[col++], ex.cluster_moment, false);
  for (std::size_t k = 1; k <= n; ++k) {
    const auto it = ex.cluster_count.find(static_cast<std::uint32_t>(k));
    check("P(k=" + std::to_string(k) + ")", est[col++], it == ex.cluster_count.end() ? 0.0 : it->second, true);
  }
  if (loops)
    for (std::size_t l = 1; l <= max_loops; ++l) {
      const auto it = ex.loop_count.find(static_cast<std::uint32_t>(l));
      check("P(loops=" + std::to_string(l) + ")", est[col++], it == ex.loop_count.end() ? 0.0 : it->second, true);
    }
  return rep;
}

inline nlohmann::ordered_json to_json(const OracleReport& r) {
  nlohmann::ordered_json j;
  j["pass"] = r.pass;
  j["max_abs_deviation"] = r.max_abs_deviation;
  j["max_sigmas"] = std::isfinite(r.max_sigmas) ? nlohmann::ordered_json(r.max_sigmas) : nlohmann::ordered_json("inf");
  j["samples"] = r.samples;
  auto& arr = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : r.checks)
    arr.push_back({{"name", c.name}, {"sampled", c.sampled}, {"exact", c.exact}, {"stderr", c.stderr}, {"ok", c.ok}});
  return j;
}

// ---------------------------------------------------------------------------
// Artifacts

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::io_error, "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error(ErrorCode::io_error, "cannot read " + p.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct ArtifactFile {
  std::string name;
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string config;  // serialized configuration
  std::string version = code_version;
  struct ChainSeed {
    std::uint32_t chain;
    std::uint64_t seed;
    std::uint64_t stream;
  };
  std::vector<ChainSeed> chains;
  double wall_clock_seconds = 0.0;
  std::vector<ArtifactFile> files;
  bool oracle_pass = true;
};

class ArtifactSink {
 public:
  explicit ArtifactSink(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    const auto probe = dir_ / ".fkfield-write-test";
    std::ofstream os(probe);
    if (ec || !os) throw Error(ErrorCode::io_error, "output directory " + dir_.string() + " is not writable");
    os.close();
    std::filesystem::remove(probe, ec);
  }

  void write(const std::string& name, const std::string& bytes) {
    std::ofstream os(dir_ / name, std::ios::binary);
    os << bytes;
    if (!os) throw Error(ErrorCode::io_error, "cannot write " + (dir_ / name).string());
    files_.push_back({name, sha256_hex(bytes), bytes.size()});
  }
  void csv(const std::string& name, const ScalingSeries& s) {
    std::ostringstream os;
    s.write_csv(os);
    write(name, os.str());
  }
  void json(const std::string& name, const nlohmann::ordered_json& j) { write(name, j.dump(2) + "\n"); }
  /// Registers a file written directly into the directory.
  void adopt(const std::string& name) {
    const auto bytes = read_file(dir_ / name);
    files_.push_back({name, sha256_hex(bytes), bytes.size()});
  }
  const std::filesystem::path& dir() const { return dir_; }
  const std::vector<ArtifactFile>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<ArtifactFile> files_;
};

inline nlohmann::ordered_json to_json(const FitResult& f, std::uint64_t seed) {
  return {{"exponent", f.exponent},   {"stderr", f.stderr}, {"amplitude", f.amplitude}, {"goodness", f.goodness},
          {"range", {f.lo, f.hi}},    {"points", f.points}, {"chains", f.chains},       {"error_method", f.error_method},
          {"seed", seed}};
}

namespace detail {

/// Fit summary, or the reason no fit was possible.
template <class F>
nlohmann::ordered_json try_fit(F&& fit, std::uint64_t seed) {
  try {
    auto j = to_json(fit(), seed);
    j["fitted"] = true;
    return j;
  } catch (const Error& e) {
    return {{"fitted", false}, {"reason", e.what()}, {"seed", seed}};
  }
}

/// Wraps an accumulator, optionally persisting each snapshot's bonds.
template <class A>
struct Recorded {
  A acc;
  std::shared_ptr<std::ofstream> file;
  std::shared_ptr<SnapshotWriter> writer;
  void observe(const Snapshot& s) {
    acc.observe(s);
    if (writer) writer->write(s.state.sweeps, s.bonds());
  }
};

template <class Make>
auto recorded_ensemble(const ExperimentConfig& cfg, ArtifactSink& sink, std::shared_ptr<const LatticeGraph> g,
                       const CouplingSpec& coupling, const Schedule& schedule, Make make, int jobs, const std::string& tag) {
  using A = decltype(make(std::uint32_t{}));
  std::vector<std::string> names;
  auto result = run_ensemble(
      g, coupling, schedule,
      [&](std::uint32_t c) {
        Recorded<A> r{make(c), nullptr, nullptr};
        if (cfg.write_snapshots) {
          const auto name = tag + "_chain" + std::to_string(c) + ".fksn";
          r.file = std::make_shared<std::ofstream>(sink.dir() / name, std::ios::binary);
          r.writer = std::make_shared<SnapshotWriter>(*r.file, SnapshotHeader{g->spec, coupling, schedule.seed, c});
        }
        return r;
      },
      jobs);
  std::vector<A> accs;
  for (auto& r : result.first) {
    if (r.file) r.file->flush();
    accs.push_back(std::move(r.acc));
  }
  if (cfg.write_snapshots)
    for (int c = 0; c < schedule.chains; ++c) sink.adopt(tag + "_chain" + std::to_string(c) + ".fksn");
  return std::make_pair(std::move(accs), std::move(result.second));
}

template <class A>
std::vector<SampleSeries> series_of(const std::vector<A>& accs) {
  std::vector<SampleSeries> out;
  for (const auto& a : accs) out.push_back(a.series());
  return out;
}

inline Schedule reseeded(Schedule s, std::uint64_t salt) {
  s.seed = s.seed ^ (0x9E3779B97F4A7C15ULL * (salt + 1));
  return s;
}

inline nlohmann::ordered_json estimate_json(const Estimate& e) { return {{"value", e.mean}, {"stderr", e.stderr}}; }

inline int n_from_spacing(double a) { return static_cast<int>(std::lround(1.0 / a)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipelines

struct ThetaFieldResult {
  ThetaEstimate theta;      // from the normalization ensemble
  Estimate field_variance;  // Theta^2 Var(window spin sum), from a second ensemble
};

/// Theta from one ensemble (cluster-moment route) and the variance of
/// Phi(1_[0,1]^2) from an independent ensemble normalized with it.
inline ThetaFieldResult theta_and_field_variance(int n, const ExperimentConfig& cfg, const Schedule& schedule, int jobs,
                                                 std::uint64_t salt) {
  const auto spec = padded_torus(cfg.lattice, n, cfg.padding);
  auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
  const auto coupling = cfg.coupling();
  const auto s1 = detail::reseeded(schedule, 2 * salt);
  auto [ta, ts] = run_ensemble(
      g, coupling, s1, [&](std::uint32_t c) { return ThetaAccumulator(g, RandomStream(s1.seed, chain_stream(c)).substream(3), 4, 0); },
      jobs);
  const auto tchains = detail::series_of(ta);
  ThetaFieldResult r;
  r.theta = theta_estimate(tchains, ThetaMethod::cluster_moment, spec.spacing);
  r.theta.same_data = false;
  const auto s2 = detail::reseeded(schedule, 2 * salt + 1);
  auto [fa, fs] = run_ensemble(
      g, coupling, s2, [&](std::uint32_t c) { return WindowSpinAccumulator(g, RandomStream(s2.seed, chain_stream(c)).substream(4)); }, jobs);
  const auto fchains = detail::series_of(fa);
  const double t2 = r.theta.value * r.theta.value;
  const auto var = jackknife(std::span<const SampleSeries>(fchains), [](const std::vector<double>& m) { return m[1] - m[0] * m[0]; });
  // Theta error propagates into the variance multiplicatively.
  const double rel = std::hypot(var.mean > 0 ? var.stderr / var.mean : 0.0, 2 * r.theta.stderr / r.theta.value);
  r.field_variance = {t2 * var.mean, std::abs(t2 * var.mean) * rel, var.samples};
  return r;
}

struct ContrastResult {
  ScalingSeries pair;         // <Phi(f) Phi(g)> vs a
  ScalingSeries spin_moment;  // Theta^2 E sum_{diam <= eps} |S^|^2 over spin clusters vs a
  double overlap = 0.0;       // integral of f g
};

/// Infinite-temperature contrasts on padded tori of window size 1/a: the FK
/// field pairing <Phi(f) Phi(g)> and the small spin-cluster moment, both
/// normalized with the FK Theta (here Theta^-2 is the window site count).
inline ContrastResult infinite_temperature_contrast(std::vector<double> as, LatticeKind lattice, int padding, const TestFunction& f,
                                                    const TestFunction& gf, double eps, const Schedule& schedule, int jobs) {
  ContrastResult out;
  out.overlap = overlap_integral(f, gf);
  std::sort(as.begin(), as.end(), std::greater<>());
  out.pair.observable = "phi_f_phi_g";
  out.spin_moment.observable = "spin-cluster-small-moment";
  out.pair.scale_name = out.spin_moment.scale_name = "a";
  const CouplingSpec hot{Model::fk_potts, 2, 0.0, 0.0};
  const std::vector<double> eps_list{eps};
  for (std::size_t k = 0; k < as.size(); ++k) {
    const int nk = detail::n_from_spacing(as[k]);
    auto g = std::make_shared<const LatticeGraph>(build_lattice(padded_torus(lattice, nk, padding)));
    const double m = static_cast<double>(sites_in_window(*g, Window{{0, 0}, 1, 1}).size());
    const double theta = 1.0 / std::sqrt(m);
    const auto fs = support_sites(*g, f);
    const auto gs = support_sites(*g, gf);
    std::vector<double> fv, gv;
    for (const auto& w : fs) fv.push_back(f(w.at));
    for (const auto& w : gs) gv.push_back(gf(w.at));
    struct Acc {
      SmallClusterAccumulator small;
      const std::vector<WindowSite>*fs, *gs;
      const std::vector<double>*fv, *gv;
      double theta;
      std::vector<double> signs = ising_signs(2);
      SampleSeries s{1};
      void observe(const Snapshot& snap) {
        small.observe(snap);
        const double row = field_value(snap.spins(), theta, *fs, *fv, signs) * field_value(snap.spins(), theta, *gs, *gv, signs);
        s.push(row);
      }
    };
    const auto s = detail::reseeded(schedule, k);
    auto [accs, sums] = run_ensemble(
        g, hot, s,
        [&](std::uint32_t) {
          return Acc{SmallClusterAccumulator(g, eps_list, 1, SmallClusterAccumulator::Clusters::spin), &fs, &gs, &fv, &gv, theta, ising_signs(2),
                     SampleSeries(1)};
        },
        jobs);
    std::vector<SampleSeries> pc, sc;
    for (auto& acc : accs) {
      pc.push_back(acc.s);
      sc.push_back(acc.small.series());
    }
    const auto pe = estimate(pc).front();
    const auto se = estimate(sc);
    out.pair.points.push_back({as[k], pe.mean, pe.stderr});
    out.spin_moment.points.push_back({as[k], se[1].mean / m, se[1].stderr / m});
  }
  return out;
}

/// Runs one experiment, writing artifacts and `manifest.json` into `out_dir`.
inline RunManifest run_experiment(const ExperimentConfig& cfg, int jobs = 1, std::filesystem::path out_dir = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  if (out_dir.empty()) out_dir = cfg.out;
  ArtifactSink sink(out_dir);
  RunManifest man;
  man.config = serialize(cfg);
  for (int c = 0; c < cfg.chains; ++c) man.chains.push_back({static_cast<std::uint32_t>(c), cfg.seed, chain_stream(static_cast<std::uint32_t>(c))});
  const auto schedule = cfg.schedule();
  schedule.validate();
  const double a = cfg.spacing();
  const double lo = cfg.fit_lo > 0 ? cfg.fit_lo : 4 * a;
  const double hi = cfg.fit_hi > 0 ? cfg.fit_hi : 0.25;
  // The dc pipeline samples infinite temperature regardless of p.
  const auto coupling = cfg.kind == "dc" ? CouplingSpec{Model::fk_potts, 2, 0.0, 0.0} : cfg.coupling();
  using J = nlohmann::ordered_json;

  if (cfg.kind == "oracle") {
    const int w = cfg.width ? cfg.width : cfg.n, h = cfg.height ? cfg.height : cfg.n;
    std::vector<Cell> cells;
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) cells.push_back({i, j});
    auto g = std::make_shared<const LatticeGraph>(cfg.lattice == LatticeKind::square
                                                      ? build_induced_subgraph(cells)
                                                      : build_lattice({cfg.lattice, std::max(w, h), Boundary::free}));
    const auto rep = verify_against_oracle(g, coupling, schedule, jobs);
    sink.json("oracle_report.json", to_json(rep));
    man.oracle_pass = rep.pass;
  } else if (cfg.kind == "twopoint") {
    const auto spec = padded_torus(cfg.lattice, cfg.n, cfg.padding);
    auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
    const double rmax = std::min(hi, 0.5 * cfg.padding - 2 * a);
    auto [accs, sums] = detail::recorded_ensemble(
        cfg, sink, g, coupling, schedule,
        [&](std::uint32_t c) { return TwoPointAccumulator(g, RandomStream(cfg.seed, chain_stream(c)).substream(1), rmax, cfg.base_points); },
        jobs, "twopoint");
    const auto chains = detail::series_of(accs);
    auto prof = profile_from_chains(chains, accs.front().radii(), "tau", a);
    sink.csv("tau_profile.csv", prof);
    const auto radii = prof.scales();
    sink.json("fit.json", detail::try_fit([&] { return fit_power_law_jackknife(chains, radii, [](const std::vector<double>& m) { return m; }, lo, hi); },
                                          cfg.seed));
    try {
      const auto hr = hypothesis_ratio(prof, cfg.eps_prime, 0.25);
      sink.csv("hypothesis_lower.csv", hr.lower);
      sink.csv("hypothesis_upper.csv", hr.upper);
    } catch (const Error&) {
    }
  } else if (cfg.kind == "onearm") {
    ProfileRun run;
    if (cfg.model == Model::independent_site) {
      if (cfg.lattice != LatticeKind::triangular) detail::bad_field("lattice", "site percolation arms use the triangular lattice");
      std::vector<double> lat;
      for (double r : cfg.radii) lat.push_back(r / a);
      run = site_percolation_one_arm(lat, coupling.p, cfg.seed, cfg.chains, static_cast<std::uint64_t>(cfg.sweeps));
      for (auto& pt : run.profile.points) pt.scale *= a;
      run.profile.spacing = a;
    } else {
      OneArmOptions opt;
      opt.kind = cfg.lattice;
      opt.spacing = a;
      opt.padding = cfg.padding;
      opt.origins = cfg.origins;
      opt.jobs = jobs;
      const ArmBoundary b = cfg.arm_boundary == "free" ? ArmBoundary::free : (cfg.arm_boundary == "wired" ? ArmBoundary::wired : ArmBoundary::bulk);
      run = one_arm_profile(cfg.radii, b, coupling, schedule, opt);
    }
    sink.csv("onearm_" + cfg.arm_boundary + ".csv", run.profile);
    sink.json("fit.json", detail::try_fit([&] { return fit_power_law(run.profile, cfg.fit_lo, cfg.fit_hi > 0 ? cfg.fit_hi : 1e300); }, cfg.seed));
  } else if (cfg.kind == "rsw") {
    auto as = cfg.a_list.empty() ? std::vector<double>{a} : cfg.a_list;
    J rows = J::array();
    ScalingSeries open, dual;
    open.observable = "open-circuit";
    dual.observable = "dual-closed-circuit";
    open.scale_name = dual.scale_name = "a";
    std::sort(as.begin(), as.end());
    for (std::size_t k = 0; k < as.size(); ++k) {
      const int nk = detail::n_from_spacing(as[k]);
      const auto spec = padded_torus(LatticeKind::square, nk, cfg.padding);
      const auto s = detail::reseeded(schedule, k);
      const auto o = annulus_circuit_prob(cfg.r1, cfg.r2, spec, coupling, s, CircuitSpecies::open, jobs);
      const auto d = annulus_circuit_prob(cfg.r1, cfg.r2, spec, coupling, detail::reseeded(schedule, 1000 + k), CircuitSpecies::dual_closed, jobs,
                                          {0.5 / nk, 0.5 / nk});
      open.points.push_back({as[k], o.mean, o.stderr});
      dual.points.push_back({as[k], d.mean, d.stderr});
    }
    sink.csv("circuit_open.csv", open);
    sink.csv("circuit_dual.csv", dual);
  } else if (cfg.kind == "crossings") {
    const auto tail = crossing_count_tail(cfg.r1, cfg.r2, padded_torus(cfg.lattice, cfg.n, cfg.padding), coupling, schedule, cfg.kmax, 0.0, jobs);
    sink.csv("crossing_tail.csv", tail.tail);
    J j{{"lambda", tail.fit.lambda}, {"stderr", tail.fit.stderr}, {"upper95", tail.fit.upper95}, {"fitted", tail.fit.valid},
        {"k_used", tail.fit.ks}, {"seed", cfg.seed}};
    J ind = J::array();
    for (std::size_t k = 0; k < tail.induction_gap.size(); ++k)
      ind.push_back({{"k", k + 2}, {"gap", tail.induction_gap[k]}, {"sigma", tail.induction_sigma[k]},
                     {"holds", tail.induction_gap[k] <= 4 * tail.induction_sigma[k]}});
    j["induction"] = ind;
    sink.json("fit.json", j);
  } else if (cfg.kind == "prop1") {
    const auto spec = padded_torus(cfg.lattice, cfg.n, cfg.padding);
    auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
    const auto eps = cfg.eps.empty() ? default_eps_list() : cfg.eps;
    auto [accs, sums] = detail::recorded_ensemble(cfg, sink, g, coupling, schedule, [&](std::uint32_t) { return SmallClusterAccumulator(g, eps); }, jobs,
                                                  "prop1");
    const auto chains = detail::series_of(accs);
    const auto s = small_cluster_moment(chains, eps);
    sink.csv("small_cluster.csv", s);
    sink.json("fit.json", detail::try_fit([&] { return fit_power_law_jackknife(
        chains, eps,
        [k = eps.size()](const std::vector<double>& m) {
          std::vector<double> v(k);
          for (std::size_t i = 0; i < k; ++i) v[i] = m[i + 1] / m[0];
          return v;
        },
        cfg.fit_lo, cfg.fit_hi > 0 ? cfg.fit_hi : 1e300); }, cfg.seed));
  } else if (cfg.kind == "field") {
    const auto spec = padded_torus(cfg.lattice, cfg.n, cfg.padding);
    auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
    const auto f = parse_test_function(cfg.test_function);
    const auto sites = support_sites(*g, f);
    std::vector<double> fvals;
    for (const auto& ws : sites) fvals.push_back(f(ws.at));
    const auto window = sites_in_window(*g, Window{{0, 0}, 1, 1});
    const auto signs = ising_signs(cfg.q);
    struct Acc {
      const LatticeGraph* g;
      const std::vector<WindowSite>* window;
      const std::vector<WindowSite>* sites;
      const std::vector<double>* fvals;
      const std::vector<double>* signs;
      std::vector<std::uint32_t> scratch;
      SampleSeries s{2};  // window moment, raw spin sum weighted by f
      std::optional<AreaMeasureFamily> first;
      void observe(const Snapshot& snap) {
        const double m = window_cluster_moment(snap.labels(), *window, scratch);
        const double raw = field_value(snap.spins(), 1.0, *sites, *fvals, *signs);
        const double row[2] = {m, raw};
        s.push(row);
        if (!first) {
          const auto stats = cluster_stats(snap.labels(), *g, *window);
          first = rescaled_area_family(snap.labels(), &snap.spins(), stats, *window, 1.0, 0.0, {}, nullptr);
        }
      }
      const SampleSeries& series() const { return s; }
    };
    auto [accs, sums] = detail::recorded_ensemble(
        cfg, sink, g, coupling, schedule, [&](std::uint32_t) { return Acc{g.get(), &window, &sites, &fvals, &signs, {}, SampleSeries(2), {}}; }, jobs,
        "field");
    const auto chains = detail::series_of(accs);
    const auto est = estimate(chains);
    const auto theta = theta_from_inverse_square(est[0], ThetaMethod::cluster_moment, a);
    // Var Phi(f) = Theta^2 Var(sum f S), a ratio of means with jackknife errors.
    std::vector<SampleSeries> sqc;
    for (const auto& c : chains) {
      SampleSeries part(3);
      for (std::size_t r = 0; r < c.rows(); ++r) {
        const double row[3] = {c.at(r, 0), c.at(r, 1), c.at(r, 1) * c.at(r, 1)};
        part.push(row);
      }
      sqc.push_back(std::move(part));
    }
    const auto v = jackknife(std::span<const SampleSeries>(sqc), [](const std::vector<double>& m) { return (m[2] - m[1] * m[1]) / m[0]; });
    const auto mean_phi = jackknife(std::span<const SampleSeries>(sqc), [](const std::vector<double>& m) { return m[1] / std::sqrt(m[0]); });
    auto fam = *accs.front().first;
    for (auto& e : fam.entries) e.weight *= theta.value;
    fam.theta = theta.value;
    std::ostringstream os;
    fam.write_csv(os);
    sink.write("area_family.csv", os.str());
    sink.json("field.json", J{{"test_function", cfg.test_function},
                              {"theta", detail::estimate_json({theta.value, theta.stderr, 0})},
                              {"mean", detail::estimate_json(mean_phi)},
                              {"variance", detail::estimate_json(v)},
                              {"seed", cfg.seed}});
  } else if (cfg.kind == "theta-scaling") {
    auto as = cfg.a_list;
    std::sort(as.begin(), as.end());
    ScalingSeries th, var;
    th.observable = "theta";
    var.observable = "field-variance";
    th.scale_name = var.scale_name = "a";
    for (std::size_t k = 0; k < as.size(); ++k) {
      const auto r = theta_and_field_variance(detail::n_from_spacing(as[k]), cfg, schedule, jobs, k);
      th.points.push_back({as[k], r.theta.value, r.theta.stderr});
      var.points.push_back({as[k], r.field_variance.mean, r.field_variance.stderr});
    }
    sink.csv("theta.csv", th);
    sink.csv("field_variance.csv", var);
    sink.json("fit.json", detail::try_fit([&] { return fit_power_law(th); }, cfg.seed));
  } else if (cfg.kind == "offcritical") {
    J j{{"seed", cfg.seed}};
    if (cfg.h_list.size() >= 3) {
      auto c = coupling;
      if (cfg.p_critical && cfg.temperature_offset != 0) c.p = near_critical_p(cfg.q, cfg.temperature_offset, a);
      const auto curve = magnetization_curve(cfg.h_list, padded_torus(cfg.lattice, cfg.n, cfg.padding), c, schedule, jobs);
      sink.csv("magnetization.csv", curve.curve);
      if (curve.fitted) j["inverse_delta"] = to_json(curve.fit, cfg.seed);
    }
    if (cfg.a_list.size() >= 3) {
      const auto plateau = near_critical_plateau(cfg.a_list, cfg.lambda, schedule, cfg.padding, jobs);
      sink.csv("plateau.csv", plateau);
      j["plateau_ratio"] = plateau_ratio(plateau);
    }
    sink.json("fit.json", j);
  } else if (cfg.kind == "potts") {
    const auto spec = padded_torus(cfg.lattice, cfg.n, cfg.padding);
    auto g = std::make_shared<const LatticeGraph>(build_lattice(spec));
    auto [accs, sums] = detail::recorded_ensemble(cfg, sink, g, coupling, schedule, [&](std::uint32_t) { return PottsSignAccumulator(cfg.q); }, jobs,
                                                  "potts");
    const auto chains = detail::series_of(accs);
    const auto est = estimate(chains);
    std::string csv = "moment,value,stderr,expected\n";
    const int q = cfg.q;
    std::size_t col = 0;
    auto line = [&](const std::string& name, double expected) {
      csv += name + "," + detail::fmt_double(est[col].mean) + "," + detail::fmt_double(est[col].stderr) + "," + detail::fmt_double(expected) + "\n";
      ++col;
    };
    for (int k = 1; k <= q; ++k) line("mean_" + std::to_string(k), 0.0);
    for (int k = 1; k <= q; ++k) line("var_" + std::to_string(k), 1.0 / (q - 1));
    for (int k = 1; k <= q; ++k)
      for (int l = k + 1; l <= q; ++l) line("cov_" + std::to_string(k) + "_" + std::to_string(l), -1.0 / ((q - 1.0) * (q - 1.0)));
    double worst = 0.0;
    for (const auto& c : chains)
      for (std::size_t r = 0; r < c.rows(); ++r) worst = std::max(worst, c.at(r, col));
    sink.write("potts_signs.csv", csv);
    sink.json("potts.json", J{{"q", q}, {"max_abs_sign_sum", worst}, {"seed", cfg.seed}});
  } else if (cfg.kind == "dc") {
    const auto f = parse_test_function(cfg.test_function);
    const auto gf = parse_test_function(cfg.test_function_g, "test_function_g");
    const auto eps = cfg.eps.empty() ? 0.1 : cfg.eps.front();
    const auto r = infinite_temperature_contrast(cfg.a_list, cfg.lattice, cfg.padding, f, gf, eps, schedule, jobs);
    sink.csv("phi_pair.csv", r.pair);
    sink.csv("spin_cluster_moment.csv", r.spin_moment);
    sink.json("dc.json", J{{"overlap_integral", r.overlap}, {"eps", eps}, {"seed", cfg.seed}});
  }

  man.files = sink.files();
  man.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  J j;
  j["version"] = man.version;
  j["config"] = man.config;
  J chains = J::array();
  for (const auto& c : man.chains) chains.push_back({{"chain", c.chain}, {"seed", c.seed}, {"stream", c.stream}});
  j["chains"] = chains;
  j["wall_clock_seconds"] = man.wall_clock_seconds;
  J files = J::array();
  for (const auto& f : man.files) files.push_back({{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  j["files"] = files;
  if (cfg.kind == "oracle") j["oracle_pass"] = man.oracle_pass;
  std::ofstream os(sink.dir() / "manifest.json");
  os << j.dump(2) << "\n";
  if (!os) throw Error(ErrorCode::io_error, "cannot write manifest");
  return man;
}

/// Recomputes the digest of every manifest entry; returns the names that differ.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
  std::vector<std::string> bad;
  for (const auto& f : j.at("files")) {
    const auto name = f.at("name").get<std::string>();
    std::error_code ec;
    if (!std::filesystem::exists(dir / name, ec) || sha256_hex(read_file(dir / name)) != f.at("sha256").get<std::string>()) bad.push_back(name);
  }
  return bad;
}

}  // namespace fkfield
