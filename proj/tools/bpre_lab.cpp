// bpre-lab: run experiment configs and list the experiment catalog.
//
// Exit codes: 0 all checks passed, 1 some check failed, 2 invalid config or
// arguments, 3 runtime failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification lab for branching processes in random environment"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "List experiments and the statements they check");

  auto* run = app.add_subcommand("run", "Run the experiment described by a YAML config");
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  unsigned threads = 0;
  std::string out_dir;
  bool quiet = false;
  run->add_option("config", config_path, "Experiment config (YAML)")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  auto* rep_opt = run->add_option("--replicates", replicates, "Override the replicate budget");
  auto* out_opt = run->add_option("--out-dir", out_dir, "Directory for the JSON report and CSV dumps");
  auto* thr_opt = run->add_option("--threads", threads, "Worker threads (results do not depend on it)");
  run->add_flag("-q,--quiet", quiet, "Only print the report path and verdict");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*list) {
    for (const auto& e : bpre::lab::list_experiments()) {
      std::cout << e.name << "\n  checks: " << e.statement << "\n  " << e.summary << "\n  parameters:";
      for (const auto& p : e.parameters) std::cout << ' ' << p;
      std::cout << "\n";
    }
    return 0;
  }

  bpre::lab::ExperimentConfig config;
  try {
    config = bpre::lab::load_config(config_path);
    bpre::lab::Overrides overrides;
    if (*seed_opt) overrides.seed = seed;
    if (*rep_opt) overrides.replicates = replicates;
    if (*thr_opt) overrides.threads = threads;
    if (*out_opt) overrides.out_dir = out_dir;
    bpre::lab::apply_overrides(config, overrides);
  } catch (const bpre::lab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto outcome = bpre::lab::run(config);
    if (!quiet) {
      for (const auto& check : outcome.report["checks"]) {
        std::cout << (check["passed"].get<bool>() ? "PASS " : "FAIL ") << check["name"].get<std::string>();
        if (check.contains("value")) std::cout << "  value=" << check["value"].dump();
        if (check.contains("threshold")) std::cout << "  threshold=" << check["threshold"].dump();
        std::cout << '\n';
      }
    }
    for (const auto& f : outcome.files) std::cout << "wrote " << f << '\n';
    std::cout << config.experiment << ": " << (outcome.passed ? "PASSED" : "FAILED") << " ("
              << outcome.report["wall_time_seconds"].get<double>() << " s, seed " << config.seed
              << ", config " << config.hash << ")\n";
    return outcome.passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
