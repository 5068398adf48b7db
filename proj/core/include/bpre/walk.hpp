#pragma once

// The associated random walk: increment models, path functionals, the renewal
// function V of the strict descending ladder process, the harmonic identity
// E[V(x + X); x + X >= 0] = V(x), and probabilities of staying above a level.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/rng.hpp"
#include "bpre/stable_laws.hpp"
#include "bpre/stats.hpp"

namespace bpre {

/// Increments living on span * {integers}.
struct Lattice {
  double span = 1.0;
  std::vector<int> steps;  // sorted, distinct
  std::vector<double> probs;

  int min_step() const { return steps.front(); }
  int max_step() const { return steps.back(); }
  double mean_steps() const;
  /// Two equally likely steps -1 and +1.
  bool simple_symmetric() const;
};

enum class IncrementKind { discrete, gaussian, stable, shifted_pareto };

std::string to_string(IncrementKind kind);

/// Law of one walk increment X.
class IncrementModel {
 public:
  static IncrementModel discrete(std::vector<double> points, std::vector<double> probs);
  /// +-1 with probability 1/2 each.
  static IncrementModel simple_symmetric();
  static IncrementModel gaussian(double sigma, double mean = 0.0);
  static IncrementModel stable(StableParams params);
  /// P - a/(a-1) with P ~ Pareto(1, a): centred, right tail index a.
  static IncrementModel shifted_pareto(double tail_index);
  /// Law of log_mean(Q) under the environment model.
  static IncrementModel from_environment(const EnvironmentModel& model);

  IncrementKind kind() const noexcept { return kind_; }
  double sample(Engine& rng) const;

  /// Mean of X, NaN when it does not exist.
  double mean() const;
  bool degenerate() const;
  /// Lattice structure of a discrete model, if its atoms are integer
  /// multiples of a common span.
  const std::optional<Lattice>& lattice() const noexcept { return lattice_; }

  /// Truncated second moment used for the scaling sequence. Laws without a
  /// closed form use 10^6 samples from a fixed internal stream.
  TruncatedSecondMoment truncated_moment() const;
  ScalingSequence scaling_sequence() const { return ScalingSequence(truncated_moment()); }

  /// b with P(X > b) below ~1e-12 (finite for every model; heavy tails make
  /// it large).
  double upper_bound() const;

  std::string describe() const;

 private:
  IncrementModel() = default;

  IncrementKind kind_ = IncrementKind::discrete;
  std::vector<double> points_;
  std::vector<double> cumulative_;
  double sigma_ = 1.0;
  double mean_ = 0.0;
  double tail_index_ = 0.0;
  StableParams stable_{};
  std::optional<Lattice> lattice_;
};

/// A realisation S_0..S_n.
struct WalkPath {
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string source = "synthetic";

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
};

WalkPath sample_walk(const IncrementModel& model, std::size_t n, Engine& rng,
                     double start = 0.0);

/// L_n, M_n, tau_n and the shifted minima hat L_{k,n}.
struct PathFunctionals {
  double min = 0.0;          // L_n = min(S_0..S_n)
  double max = 0.0;          // M_n = max(S_1..S_n); -inf when n = 0
  std::size_t argmin = 0;    // tau_n: first index attaining L_n
  std::vector<double> values;
  std::vector<double> suffix_min;

  /// hat L_{k,n} = min_{0 <= j <= n-k} (S_{k+j} - S_k).
  double shifted_min(std::size_t k) const;
};

PathFunctionals path_functionals(std::span<const double> path);

/// Time-rescaled path on a grid.
enum class ScaleTag { H, G, Q, S, X, Y, meander, plus };

std::string to_string(ScaleTag tag);

struct ScaledProcess {
  ScaleTag tag = ScaleTag::meander;
  double normalizer = 1.0;
  std::vector<double> times;
  std::vector<double> values;
};

// ---------------------------------------------------------------------------
// Renewal function

enum class RenewalMethod { exact_lattice, series_mc };

std::string to_string(RenewalMethod method);

struct RenewalBudget {
  std::size_t replicates = 20000;        // Monte Carlo ladder processes
  std::size_t max_steps = 10'000'000;    // per ladder process
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool force_monte_carlo = false;        // use ladder counting on a lattice too
  bool keep_ladder_heights = true;       // needed for unbiased harmonic checks
};

/// V(x) = 1 + Sum_{k>=1} P(-S_k <= x, M_k < 0) for x >= 0, 0 for x < 0.
class RenewalTable {
 public:
  std::vector<double> grid;
  std::vector<double> values;
  std::vector<double> std_errors;
  std::size_t horizon = 0;       // largest ladder-process length (MC only)
  double tail_bound = 0.0;       // 1 - total mass of the computed ladder law (lattice)
  RenewalMethod method = RenewalMethod::exact_lattice;
  double lattice_span = 0.0;     // > 0: grid is span * {0, 1, ...} and V is a step function
  double extrapolation_exponent = 1.0;
  std::size_t censored = 0;      // MC ladder processes stopped by max_steps
  /// Per-replicate ladder depths -S at strict new minima, in increasing order.
  std::vector<std::vector<double>> ladder_heights;

  /// V(x). Lattice tables are exact step functions and throw std::out_of_range
  /// beyond the table. Monte Carlo tables interpolate log V linearly and
  /// extrapolate by a power law; `extrapolated` reports the latter.
  double operator()(double x, bool* extrapolated = nullptr) const;

  double max_x() const { return grid.empty() ? 0.0 : grid.back(); }
  bool exact() const { return method == RenewalMethod::exact_lattice; }

  void write_csv(std::ostream& out) const;
};

/// Builds V on [0, max(x_grid)]. Lattice models: exact ladder-height renewal
/// equation. Continuous models: mean count of strict descending ladder points,
/// with standard errors. Throws std::domain_error for a non-oscillating model.
RenewalTable renewal_function(const IncrementModel& model, std::span<const double> x_grid,
                              const RenewalBudget& budget = {});

/// Exact lattice table on the states 0..max_state.
RenewalTable exact_lattice_renewal(const Lattice& lattice, std::size_t max_state);

/// Literal partial sums of the renewal series on a lattice:
/// 1 + Sum_{k=1}^{K} P(-S_k <= x, M_k < 0) for K = 1..k_max, at one x.
/// `alive` receives P(M_K < 0) after the last step.
std::vector<double> renewal_series_partial(const Lattice& lattice, double x,
                                           std::size_t k_max, double* alive = nullptr);

struct HarmonicResidual {
  double x = 0.0;
  double residual = 0.0;     // E[V(x + X); x + X >= 0] - V(x)
  double std_error = 0.0;
  double studentized = 0.0;  // residual / std_error (0 for an exact zero)
  bool exact = false;
  std::size_t samples = 0;
};

struct HarmonicBudget {
  std::size_t samples = 1'000'000;
  std::uint64_t seed = 2;
};

HarmonicResidual check_harmonic(const RenewalTable& table, const IncrementModel& model,
                                double x, const HarmonicBudget& budget = {});

// ---------------------------------------------------------------------------
// Staying above a level

enum class StayMethod { exact, monte_carlo };

struct StayBudget {
  std::size_t replicates = 100000;
  std::uint64_t seed = 3;
  unsigned threads = 1;
};

struct StayEstimate {
  std::size_t n = 0;
  double w = 0.0;
  StayMethod method = StayMethod::exact;
  Estimate nonnegative;    // P(L_n >= 0)
  Estimate above;          // P(L_n >= -w)
  double renewal_at_w = 0.0;
  Estimate ratio;          // P(L_n >= -w) / (V(w) P(L_n >= 0))
};

/// Exact DP for lattice models (any n), Monte Carlo otherwise. `table`
/// supplies V(w) for continuous models; lattice models compute it exactly.
StayEstimate min_stay_probability(const IncrementModel& model, std::size_t n, StayMethod method,
                                  double w = 0.0, const StayBudget& budget = {},
                                  const RenewalTable* table = nullptr);

/// P(L_k >= -w) for k = 0..n_max on a lattice, by one DP pass.
std::vector<double> stay_probability_curve(const Lattice& lattice, std::size_t n_max,
                                           double w = 0.0);

/// Monte Carlo P(L_k >= 0) at each requested k, from one set of walks.
std::vector<Estimate> stay_probability_curve_mc(const IncrementModel& model,
                                                std::span<const std::size_t> ns,
                                                const StayBudget& budget);

}  // namespace bpre
