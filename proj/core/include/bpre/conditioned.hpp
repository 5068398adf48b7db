#pragma once

// Walks conditioned to stay nonnegative: the h-transform P+ built from the
// renewal function, the finite-horizon meander, the constant C0, reweighting
// between the two, and a lattice approximation of the Brownian meander.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bpre/rng.hpp"
#include "bpre/stats.hpp"
#include "bpre/walk.hpp"

namespace bpre {

enum class ConditionedLaw { h_transform, meander_rejection, meander_importance };

std::string to_string(ConditionedLaw law);

struct ConditionedPath {
  WalkPath path;
  ConditionedLaw law = ConditionedLaw::h_transform;
  double weight = 1.0;
  std::size_t attempts = 1;          // proposals used (rejection samplers)
  std::size_t extrapolated = 0;      // V evaluations beyond the table
  std::size_t bound_exceeded = 0;    // continuous P+: proposals past the acceptance bound
};

/// One-step P+ law from lattice state x: (target, probability) pairs for
/// targets y >= 0. Throws std::runtime_error when the probabilities do not sum
/// to 1 within 1e-9, and std::out_of_range when the table is too short.
std::vector<std::pair<double, double>> plus_transitions(const Lattice& lattice,
                                                        const RenewalTable& table, double x);

/// n steps of P+(x, dy) = V(y)/V(x) P(x + X in dy) started at x0. Lattice
/// models use the exact kernel; continuous models propose y = x + X and accept
/// with probability V(y) / V(x + b), b = model.upper_bound().
ConditionedPath sample_plus_walk(const IncrementModel& model, const RenewalTable& table,
                                 double x0, std::size_t n, Engine& rng);

struct MeanderOptions {
  std::size_t max_attempts = 100000;
  double floor = 0.0;                       // condition on L_n >= -floor
  bool allow_fallback = true;
  const RenewalTable* table = nullptr;      // needed by the fallback for continuous models
};

/// Path conditioned on L_n >= -floor. Rejection first; when max_attempts are
/// used up the path is drawn from P+ started at `floor` and carries the
/// weight 1 / V(S_n + floor) (law tag meander_importance).
ConditionedPath sample_meander(const IncrementModel& model, std::size_t n, Engine& rng,
                               const MeanderOptions& options = {});

/// Meander of the simple symmetric walk by rejection, written into `out`
/// (size n + 1). Returns the number of attempts, or 0 if max_attempts ran out.
std::size_t simple_meander(std::size_t n, Engine& rng, std::vector<double>& out,
                           std::size_t max_attempts = static_cast<std::size_t>(-1));

struct C0Budget {
  std::size_t replicates = 200000;  // Monte Carlo stay probabilities (non-lattice)
  std::uint64_t seed = 4;
  unsigned threads = 1;
};

struct C0Estimate {
  std::vector<std::size_t> ns;
  std::vector<double> scaling;            // c_n
  std::vector<double> renewal;            // V(c_n)
  std::vector<Estimate> stay;             // P(L_n >= 0)
  std::vector<Estimate> products;         // V(c_n) P(L_n >= 0)
  Estimate limit;                         // intercept of products ~ C0 + b n^{-1/2}
  bool exact = false;
};

/// V(c_n) P(L_n >= 0) along n_grid. Lattice models use the exact stay curve and
/// exact V; others use Monte Carlo with V from `table`.
C0Estimate estimate_C0(const IncrementModel& model, const RenewalTable* table,
                       std::span<const std::size_t> n_grid, const C0Budget& budget = {});

struct Reweighting {
  std::vector<double> weights;  // self-normalised, sum 1
  double effective_sample_size = 0.0;
  std::size_t zero_terminals = 0;
};

/// Weights proportional to terminal^{alpha (1 - rho)}. Throws
/// std::invalid_argument for a negative terminal value and std::domain_error
/// when every terminal is zero.
Reweighting reweight_meander_to_plus(std::span<const double> terminals, double alpha, double rho);

/// Many rescaled conditioned paths on a common grid, stored row-major.
struct PathEnsemble {
  ScaleTag tag = ScaleTag::meander;
  double normalizer = 1.0;
  std::vector<double> times;
  std::vector<double> values;     // paths x times
  std::vector<double> weights;    // one per path
  std::size_t attempts = 0;
  std::uint64_t seed = 0;

  std::size_t size() const { return weights.size(); }
  double at(std::size_t path, std::size_t time) const { return values[path * times.size() + time]; }
  std::vector<double> column(std::size_t time) const;
  std::vector<double> terminals() const { return column(times.size() - 1); }
  /// path_id,time,value,weight
  void write_csv(std::ostream& out) const;
};

/// One approximate Brownian meander on `grid_points` equally spaced times of
/// [0, 1]: a simple-walk meander of `steps` steps, S_[tN] / sqrt(N).
ScaledProcess brownian_meander_reference(std::size_t grid_points, Engine& rng,
                                         std::size_t steps = 10000);

/// `samples` independent Brownian meander references on [0, horizon] (time t
/// maps to walk step [t N / horizon], values divided by sqrt(N / horizon)).
PathEnsemble brownian_meander_ensemble(std::size_t grid_points, std::size_t samples,
                                       std::uint64_t seed, unsigned threads = 1,
                                       std::size_t steps = 10000, double horizon = 1.0);

/// Meanders of a general increment model on [0, horizon]: walks of `steps`
/// steps conditioned on L >= 0, time t -> step [t steps / horizon], values
/// divided by c_{steps / horizon}.
PathEnsemble meander_ensemble(const IncrementModel& model, std::size_t grid_points,
                              std::size_t samples, std::size_t steps, double horizon,
                              std::uint64_t seed, unsigned threads = 1);

}  // namespace bpre
