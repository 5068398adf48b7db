#pragma once

// Branching process in random environment simulated jointly with its
// associated walk: single trajectories, survival probabilities, ensembles of
// rescaled paths conditioned on survival, and the flattening of e^{-S} Z.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bpre/conditioned.hpp"
#include "bpre/environment.hpp"
#include "bpre/rng.hpp"
#include "bpre/stats.hpp"

namespace bpre {

struct SimulationOptions {
  /// Above this population the next generation is drawn from a Gaussian
  /// approximation in log space (relative error of order Z^{-1/2}).
  double population_cap = 1e15;
  bool allow_approximation = true;
};

inline constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

struct BpreTrajectory {
  std::vector<std::int64_t> sizes;   // Z_k, or -1 once only log Z_k is tracked
  std::vector<double> log_sizes;     // log Z_k, -inf after extinction
  std::vector<double> walk;          // S_k
  std::uint64_t env_seed = 0;
  std::uint64_t repro_seed = 0;
  bool survived = false;             // Z_n > 0
  std::size_t extinction_time = kNever;
  std::size_t approximated_from = kNever;

  void write_csv(std::ostream& out) const;
};

/// n generations from Z_0 = 1. The walk is continued after extinction so that
/// S_0..S_n is always complete. Environment and reproduction randomness come
/// from separate engines, so a fixed environment can be replayed with fresh
/// reproduction. Throws std::overflow_error when the cap is hit with the
/// approximation disabled.
BpreTrajectory simulate(const EnvironmentModel& model, std::size_t n, Engine& environment,
                        Engine& reproduction, const SimulationOptions& options = {});

/// Replicate `index` of a seeded experiment.
BpreTrajectory simulate_replicate(const EnvironmentModel& model, std::size_t n,
                                  std::uint64_t seed, std::uint64_t index,
                                  const SimulationOptions& options = {});

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleRequest {
  std::size_t n = 1000;
  /// Replicates to run. With min_survivors > 0 this is the upper limit and the
  /// run stops after the first batch that reaches min_survivors.
  std::size_t replicates = 100000;
  std::size_t min_survivors = 0;
  std::size_t batch = 1 << 16;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SimulationOptions simulation;

  /// Generations at which survivors record (log Z_k, S_k).
  std::vector<std::size_t> record_steps;
  /// Generations k at which P(Z_k > 0) is counted over all replicates.
  std::vector<std::size_t> survival_steps;

  /// Flattening of D_k = log Z_k - S_k: sup over k in [q, martingale_end] of
  /// |e^{D_k - D_q} - 1| for each q, and over [tail_start, n] from tail_start.
  std::vector<std::size_t> martingale_starts;
  std::size_t martingale_end = 0;
  std::size_t tail_start = 0;
};

struct EnsembleResult {
  std::size_t replicates = 0;
  std::size_t survivors = 0;
  std::size_t approximated = 0;                 // survivors that used the log-space approximation
  std::vector<std::size_t> survival_steps;
  std::vector<std::size_t> alive;               // counts matching survival_steps
  std::vector<std::size_t> record_steps;
  std::vector<double> log_sizes;                // survivors x record_steps
  std::vector<double> walk;                     // survivors x record_steps
  std::vector<std::uint64_t> survivor_ids;
  std::vector<std::size_t> martingale_starts;
  std::vector<double> martingale_sup;           // survivors x martingale_starts
  std::vector<double> tail_sup;                 // one per survivor
  std::vector<double> head_tail_gap;            // D_n - D_{martingale_end}, one per survivor
  double min_normalized = std::numeric_limits<double>::infinity();  // smallest e^{D_k} seen

  Estimate acceptance() const { return proportion(survivors, replicates); }
  double log_size(std::size_t survivor, std::size_t step_index) const {
    return log_sizes[survivor * record_steps.size() + step_index];
  }
  double walk_value(std::size_t survivor, std::size_t step_index) const {
    return walk[survivor * record_steps.size() + step_index];
  }
};

EnsembleResult run_ensemble(const EnvironmentModel& model, const EnsembleRequest& request);

// ---------------------------------------------------------------------------
// Survival

struct SurvivalEstimate {
  std::size_t n = 0;
  std::size_t replicates = 0;
  std::size_t survivors = 0;
  Estimate probability;
  Interval wilson;
};

SurvivalEstimate survival_probability(const EnvironmentModel& model, std::size_t n,
                                      std::size_t replicates, std::uint64_t seed,
                                      unsigned threads = 1);

/// P(Z_k > 0) at every k of `ns` from one set of runs to max(ns).
std::vector<SurvivalEstimate> survival_curve(const EnvironmentModel& model,
                                             std::span<const std::size_t> ns,
                                             std::size_t replicates, std::uint64_t seed,
                                             unsigned threads = 1);

// ---------------------------------------------------------------------------
// Conditional ensembles

struct ConditionalRequest {
  std::size_t n = 4000;
  std::size_t p = 200;
  double U = 1.0;
  std::size_t grid_points = 5;      // per scale, endpoints included
  std::size_t replicates = 1000000; // upper limit
  std::size_t min_survivors = 20000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SimulationOptions simulation;
};

/// H^p, Q^p on [0, U] (scaled by c_p) and G^n, S^n on [0, 1] (scaled by c_n)
/// from the same surviving runs. The end grid also holds the time pU/n so
/// that short and end scales can be compared on a shared segment.
struct ConditionalEnsembles {
  PathEnsemble H;
  PathEnsemble Q;
  PathEnsemble G;
  PathEnsemble S;
  double c_p = 1.0;
  double c_n = 1.0;
  Estimate acceptance;
  std::size_t replicates = 0;
  std::size_t approximated = 0;
};

/// c_p and c_n come from the scaling sequence of the induced increment law.
/// Throws std::invalid_argument unless p <= n/10 and pU <= n, and
/// std::runtime_error when no replicate survives.
ConditionalEnsembles conditional_ensembles(const EnvironmentModel& model,
                                           const ConditionalRequest& request);

// ---------------------------------------------------------------------------
// e^{-S} Z flattening

struct MartingaleRequest {
  std::vector<std::size_t> qs{25, 50, 100};
  std::size_t p = 500;
  std::size_t n = 5000;
  double U = 1.0;
  std::size_t replicates = 2000000;
  std::size_t min_survivors = 5000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SimulationOptions simulation;
};

struct MartingaleRow {
  std::size_t q = 0;
  Estimate exceed_small;   // P(sup |X_u - X_0| / X_0 > 0.1 | Z_n > 0)
  Estimate exceed_large;   // same with 0.5
};

struct MartingaleReport {
  std::vector<MartingaleRow> rows;
  Estimate tail_exceed_large;  // Y^{p,n}: relative sup-fluctuation > 0.5
  Estimate agreement;          // |Y_1 / X_1 - 1| <= 0.1
  bool positive = true;        // every conditional X value > 0
  std::size_t survivors = 0;
  std::size_t replicates = 0;
};

/// Throws std::invalid_argument unless every q < p, p <= n/10 and pU <= n.
MartingaleReport martingale_limit_check(const EnvironmentModel& model,
                                        const MartingaleRequest& request);

}  // namespace bpre
