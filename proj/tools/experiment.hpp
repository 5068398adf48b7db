#pragma once

// Experiment configs (YAML), the experiment catalog, and the runner that
// writes JSON reports and CSV dumps.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bpre/bpre_sim.hpp"
#include "bpre/environment.hpp"
#include "bpre/limit_verify.hpp"
#include "bpre/stable_laws.hpp"
#include "bpre/walk.hpp"

namespace bpre::lab {

/// Invalid configuration. `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& origin, int line, const std::string& message);
  int line() const noexcept { return line_; }

 private:
  int line_;
};

struct ExperimentInfo {
  std::string name;
  std::string statement;   // what the experiment verifies
  std::string summary;
  std::vector<std::string> parameters;
};

const std::vector<ExperimentInfo>& list_experiments();

struct Thresholds {
  double ks_short = 0.07;
  double ks_end = 0.05;
  double ks_trend_slack = 0.01;
  double control_min = 0.15;
  double correlation_max = 0.05;
  double chi_square_min_p = 0.01;
  double ks_meander = 0.02;
  double slope_tolerance = 0.07;
  double c0_tolerance = 0.05;
  double lemma1_tolerance = 0.01;
  double stay_ratio_tolerance = 0.05;
};

struct ConditionsSpec {
  double alpha = 2.0;
  double epsilon = 0.1;
  std::uint64_t a = 0;
  std::size_t samples = 100000;
};

struct ExperimentConfig {
  std::string origin = "<string>";
  std::string experiment;
  std::uint64_t seed = 1;
  std::size_t replicates = 0;       // 0: experiment default
  unsigned threads = 1;

  std::optional<EnvironmentModel> environment;
  std::optional<IncrementModel> increments;
  nlohmann::json environment_spec;  // as written, for the echo
  nlohmann::json increments_spec;
  StableParams stable;

  std::size_t n = 2000;
  std::size_t p = 200;
  double U = 1.0;
  std::size_t grid_points = 5;
  std::vector<std::size_t> n_grid;
  std::vector<std::size_t> q_grid;
  std::size_t baseline_n = 250;
  std::size_t min_survivors = 20000;
  std::size_t reference_samples = 100000;
  std::size_t reference_steps = 10000;
  std::size_t walk_replicates = 2000000;
  double x_max = 0.0;               // 0: experiment default
  std::vector<double> harmonic_x;
  std::size_t stay_n = 10000;
  double stay_w = 5.0;
  double population_cap = 1e15;
  bool dump_ensembles = false;

  Thresholds thresholds;
  ConditionsSpec conditions;

  std::string out_dir = "results";
  std::string prefix;               // output file stem, default: experiment name

  nlohmann::json echo;              // effective config (defaults filled in)
  std::string hash;                 // FNV-1a of the echo without threads and output paths

  /// Recomputes echo and hash after fields change.
  void refresh();
};

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");
ExperimentConfig load_config(const std::string& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<unsigned> threads;
  std::optional<std::string> out_dir;
};

/// Applies command line overrides and refreshes the echo and hash.
void apply_overrides(ExperimentConfig& config, const Overrides& overrides);

struct RunOutcome {
  bool passed = false;
  nlohmann::json report;
  std::vector<std::string> files;
};

/// Runs the experiment and writes <out_dir>/<prefix>.json plus CSV dumps.
/// With write_files = false nothing touches the filesystem.
RunOutcome run(const ExperimentConfig& config, bool write_files = true);

/// Budget and thresholds of a BPRE experiment in the form the verifiers take.
VerifyConfig to_verify_config(const ExperimentConfig& config);

/// The report without wall time, thread count and timestamps.
nlohmann::json deterministic_part(const nlohmann::json& report);

}  // namespace bpre::lab
