#include <catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "fkfield/experiment.hpp"

using namespace fkfield;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fkfield_test_" + name);
  fs::remove_all(p);
  return p;
}

ErrorCode parse_error(const std::string& text, std::string* message = nullptr) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected a parse error for: " << text);
  return ErrorCode::invalid_argument;
}

std::map<std::string, std::string> digests(const RunManifest& m) {
  std::map<std::string, std::string> d;
  for (const auto& f : m.files) d[f.name] = f.sha256;
  return d;
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c;
  CHECK(parse_config(serialize(c)) == c);
  c.kind = "onearm";
  c.lattice = LatticeKind::triangular;
  c.model = Model::independent_site;
  c.p_critical = false;
  c.p = 0.1 + 0.2;
  c.radii = {0.015625, 1.0 / 3, 0.25};
  c.eps = {0.1, 0.7};
  c.therm = 17;
  c.seed = 18446744073709551615ULL;
  c.test_function = "gaussian:0.45,0.5,0.1";
  c.write_snapshots = true;
  c.arm_boundary = "wired";
  const auto back = parse_config(serialize(c));
  CHECK(back == c);
  CHECK(serialize(back) == serialize(c));
}

TEST_CASE("config errors name the field") {
  std::string msg;
  CHECK(parse_error("kind = twopoint\nbogus = 1\n", &msg) == ErrorCode::invalid_config);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(parse_error("n = sixty\n", &msg) == ErrorCode::invalid_config);
  CHECK(msg.find("'n'") != std::string::npos);
  CHECK(parse_error("kind = onearm\n", &msg) == ErrorCode::invalid_config);
  CHECK(msg.find("radii") != std::string::npos);
  CHECK(parse_error("n = 4\nn = 5\n", &msg) == ErrorCode::invalid_config);
  CHECK(parse_error("kind = nope\n") == ErrorCode::invalid_config);
  CHECK(parse_error("p = 1.5\n") == ErrorCode::invalid_config);
  CHECK(parse_error("lattice = triangular\nkind = rsw\n") == ErrorCode::invalid_config);
  CHECK(parse_error("model = fk-potts\nlattice = triangular\np = critical\n") == ErrorCode::invalid_config);
  CHECK(parse_error("kind = oracle\nn = 4\n") == ErrorCode::invalid_config);
  CHECK(parse_error("eps = 0.5,0.1\n") == ErrorCode::invalid_config);
  CHECK(parse_error("test_function = gaussian:1,2\n") == ErrorCode::invalid_config);
  CHECK(parse_error("just words\n") == ErrorCode::invalid_config);
  // Comments and blank lines are ignored.
  const auto c = parse_config("# comment\n\n n = 12   # trailing\nkind=prop1\n");
  CHECK(c.n == 12);
  CHECK(c.kind == "prop1");
}

TEST_CASE("schema lists every key") {
  const auto s = config_schema();
  std::istringstream is(serialize(ExperimentConfig{}));
  std::string line;
  while (std::getline(is, line)) {
    const auto key = line.substr(0, line.find(' '));
    CHECK(s.find("\n" + key + " : ") != std::string::npos);
  }
}

TEST_CASE("oracle verification at trivial and critical densities") {
  const std::vector<Cell> cells = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {2, 1}};
  const auto g = std::make_shared<const LatticeGraph>(build_induced_subgraph(cells));
  for (double p : {0.0, 1.0}) {
    const auto rep = verify_against_oracle(g, {Model::fk_potts, 2, p, 0.0}, Schedule{1, 1, 0, 200, 1});
    CHECK(rep.pass);
    CHECK(rep.max_abs_deviation == 0.0);
  }
  const std::vector<Cell> two = {{0, 0}, {1, 0}};
  const auto g2 = std::make_shared<const LatticeGraph>(build_induced_subgraph(two));
  const auto rep = verify_against_oracle(g2, {Model::fk_potts, 2, critical_point(Model::fk_potts), 0.0}, Schedule{2, 1, 10, 100000, 1});
  CHECK(rep.pass);
  CHECK(std::abs(rep.checks.front().sampled - (std::sqrt(2.0) - 1)) <= 4 * rep.checks.front().stderr);
  const auto big = std::make_shared<const LatticeGraph>(build_lattice({LatticeKind::square, 4, Boundary::free}));
  try {
    verify_against_oracle(big, {Model::fk_potts, 2, 0.5, 0.0}, Schedule{});
    FAIL("expected too-many-bonds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::too_many_bonds);
  }
}

TEST_CASE("reruns reproduce artifact digests") {
  ExperimentConfig c;
  c.kind = "twopoint";
  c.n = 8;
  c.sweeps = 40;
  c.therm = 10;
  c.chains = 2;
  c.write_snapshots = true;
  const auto d1 = scratch("rerun1"), d2 = scratch("rerun2");
  const auto m1 = run_experiment(c, 1, d1);
  const auto m2 = run_experiment(c, 2, d2);
  CHECK(digests(m1) == digests(m2));
  CHECK(digests(m1).count("tau_profile.csv") == 1);
  CHECK(digests(m1).count("fit.json") == 1);
  CHECK(digests(m1).count("twopoint_chain1.fksn") == 1);
  CHECK(verify_manifest(d1).empty());
  CHECK(fs::exists(d1 / "manifest.json"));
  // Tampering is detected.
  std::ofstream(d1 / "tau_profile.csv", std::ios::app) << "x";
  CHECK(verify_manifest(d1) == std::vector<std::string>{"tau_profile.csv"});
  // CSV dialect: header row then 17-digit numbers.
  const auto csv = read_file(d2 / "tau_profile.csv");
  CHECK(csv.rfind("scale,value,stderr\n", 0) == 0);
}

TEST_CASE("snapshot streams round trip") {
  ExperimentConfig c;
  c.kind = "prop1";
  c.n = 6;
  c.sweeps = 7;
  c.therm = 0;
  c.write_snapshots = true;
  const auto dir = scratch("snap");
  run_experiment(c, 1, dir);
  std::ifstream is(dir / "prop1_chain0.fksn", std::ios::binary);
  SnapshotReader reader(is);
  CHECK(reader.header().spec == padded_torus(LatticeKind::square, 6));
  CHECK(reader.header().coupling == c.coupling());
  CHECK(reader.header().seed == c.seed);
  // Regenerate the chain and compare every record.
  auto g = std::make_shared<const LatticeGraph>(build_lattice(reader.header().spec));
  std::vector<BondConfig> want;
  run_chain(g, c.coupling(), c.schedule(), 0, [&](const Snapshot& s) { want.push_back(s.bonds()); });
  std::size_t k = 0;
  while (auto r = reader.next()) {
    REQUIRE(k < want.size());
    CHECK(r->bonds.open == want[k].open);
    ++k;
  }
  CHECK(k == want.size());
  std::istringstream junk("FKSX....");
  CHECK_THROWS_AS(SnapshotReader(junk), Error);
}

TEST_CASE("every experiment kind runs at toy size") {
  auto base = [] {
    ExperimentConfig c;
    c.n = 8;
    c.sweeps = 20;
    c.therm = 5;
    return c;
  };
  std::vector<std::pair<ExperimentConfig, std::string>> runs;
  {
    auto c = base();
    c.kind = "oracle";
    c.width = 2;
    c.height = 3;
    c.sweeps = 2000;
    runs.push_back({c, "oracle_report.json"});
  }
  {
    auto c = base();
    c.kind = "onearm";
    c.radii = {0.25, 0.5};
    c.arm_boundary = "wired";
    runs.push_back({c, "onearm_wired.csv"});
  }
  {
    auto c = base();
    c.kind = "onearm";
    c.lattice = LatticeKind::triangular;
    c.model = Model::independent_site;
    c.radii = {0.25, 0.5, 1.0};
    runs.push_back({c, "fit.json"});
  }
  {
    auto c = base();
    c.kind = "rsw";
    c.a_list = {0.125, 0.0625};
    runs.push_back({c, "circuit_dual.csv"});
  }
  {
    auto c = base();
    c.kind = "crossings";
    c.n = 16;
    runs.push_back({c, "crossing_tail.csv"});
  }
  {
    auto c = base();
    c.kind = "prop1";
    runs.push_back({c, "small_cluster.csv"});
  }
  {
    auto c = base();
    c.kind = "field";
    c.test_function = "gaussian:0.5,0.5,0.1";
    runs.push_back({c, "area_family.csv"});
  }
  {
    auto c = base();
    c.kind = "theta-scaling";
    c.a_list = {0.25, 0.125, 0.0625};
    runs.push_back({c, "theta.csv"});
  }
  {
    auto c = base();
    c.kind = "offcritical";
    c.h_list = {0.01, 0.1, 1.0};
    c.a_list = {0.25, 0.125, 0.0625};
    runs.push_back({c, "plateau.csv"});
  }
  {
    auto c = base();
    c.kind = "potts";
    c.q = 3;
    runs.push_back({c, "potts_signs.csv"});
  }
  {
    auto c = base();
    c.kind = "dc";
    c.lattice = LatticeKind::triangular;
    c.padding = 1;
    c.a_list = {0.125, 0.0625};
    c.test_function = "gaussian:0.45,0.5,0.1";
    c.test_function_g = "gaussian:0.55,0.5,0.1";
    runs.push_back({c, "phi_pair.csv"});
  }
  for (const auto& [c, file] : runs) {
    INFO("kind " << c.kind);
    validate(c);
    const auto dir = scratch("kind_" + c.kind);
    const auto m = run_experiment(c, 1, dir);
    CHECK(fs::exists(dir / file));
    CHECK(verify_manifest(dir).empty());
    CHECK(!m.files.empty());
  }
}

TEST_CASE("unwritable output directory is reported") {
  ExperimentConfig c;
  c.n = 4;
  c.sweeps = 2;
  try {
    run_experiment(c, 1, "/proc/fkfield-cannot-write");
    FAIL("expected an I/O error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io_error);
  }
}
