// Command-line front end: run experiments, verify against the exact oracle,
// print the configuration schema.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "fkfield/experiment.hpp"

namespace {

enum Exit { ok = 0, invalid_config = 1, runtime_failure = 2, oracle_failure = 3 };

int exit_code(const fkfield::Error& e) {
  switch (e.code()) {
    case fkfield::ErrorCode::invalid_config:
    case fkfield::ErrorCode::invalid_spec:
    case fkfield::ErrorCode::no_known_critical_point:
      return invalid_config;
    default:
      return runtime_failure;
  }
}

std::filesystem::path output_dir(const std::string& flag, const fkfield::ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FKFIELD_OUT"); env && *env) return env;
  return cfg.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice Monte Carlo for the critical Ising magnetization field and FK area measures"};
  app.require_subcommand(1);

  std::string config_path, out_flag;
  int jobs = 1;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "run an experiment and write its artifacts");
  run->add_option("config", config_path, "configuration file")->required();
  run->add_option("--jobs,-j", jobs, "parallel chains (0: hardware concurrency)")->check(CLI::NonNegativeNumber);
  run->add_option("--out,-o", out_flag, "output directory (overrides FKFIELD_OUT and the config)");
  run->add_option("--seed", seed, "override the configured seed");

  std::string oracle_path;
  auto* oracle = app.add_subcommand("oracle", "compare sampled observables with exact enumeration");
  oracle->add_option("config", oracle_path, "configuration file")->required();
  oracle->add_option("--jobs,-j", jobs, "parallel chains")->check(CLI::NonNegativeNumber);
  oracle->add_option("--out,-o", out_flag, "output directory");

  app.add_subcommand("schema", "print the configuration schema");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : invalid_config;
  }

  try {
    if (app.got_subcommand("schema")) {
      std::cout << fkfield::config_schema();
      return ok;
    }
    const bool is_oracle = app.got_subcommand("oracle");
    auto cfg = fkfield::load_config(is_oracle ? oracle_path : config_path);
    if (seed) cfg.seed = *seed;
    if (is_oracle) {
      cfg.kind = "oracle";
      fkfield::validate(cfg);
    }
    const auto dir = output_dir(out_flag, cfg);
    const auto man = fkfield::run_experiment(cfg, jobs, dir);
    for (const auto& f : man.files) std::cout << (dir / f.name).string() << "  " << f.sha256 << "\n";
    std::cout << (dir / "manifest.json").string() << "\n";
    if (cfg.kind == "oracle") {
      std::cout << "oracle: " << (man.oracle_pass ? "pass" : "FAIL") << "\n";
      if (!man.oracle_pass) return oracle_failure;
    }
    return ok;
  } catch (const fkfield::Error& e) {
    std::cerr << "fkfield: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "fkfield: " << e.what() << "\n";
    return runtime_failure;
  }
}
