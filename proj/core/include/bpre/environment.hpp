#pragma once

// One-generation offspring laws, the i.i.d. environment that generates them,
// and empirical checks of the moment and tail conditions on the environment.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "bpre/rng.hpp"
#include "bpre/stats.hpp"

namespace bpre {

enum class OffspringFamily { geometric, poisson, linear_fractional, finite_support };

std::string to_string(OffspringFamily family);

/// Reproduction law Q of a single generation. Cheap to copy.
class OffspringLaw {
 public:
  /// Geometric on {0, 1, ...} with the given mean: Q({y}) = (1-s) s^y,
  /// s = m / (1 + m).
  static OffspringLaw geometric(double mean);
  static OffspringLaw poisson(double mean);
  /// Q({0}) = zero_prob and Q({y}) = (1 - zero_prob)(1 - s) s^{y-1} for y >= 1,
  /// with s chosen to give the requested mean (requires mean >= 1 - zero_prob).
  static OffspringLaw linear_fractional(double zero_prob, double mean);
  /// probs[y] = Q({y}); must sum to 1 within 1e-9 (it is renormalised).
  static OffspringLaw finite_support(std::vector<double> probs);
  /// Exactly `children` offspring per individual.
  static OffspringLaw dirac(std::uint64_t children);

  OffspringFamily family() const noexcept { return family_; }
  double mean() const noexcept { return mean_; }
  /// Offspring-count variance of one individual.
  double variance() const noexcept { return variance_; }
  double pmf(std::uint64_t y) const;
  /// Sum_{y >= a} y^2 Q({y}).
  double tail_second_moment(std::uint64_t a) const;

  /// Largest y with positive mass for finite_support; 0 otherwise.
  std::uint64_t max_support() const noexcept;
  const std::vector<double>& support_probs() const;

  /// Offspring of one individual.
  std::uint64_t sample(Engine& rng) const;

  std::string describe() const;

 private:
  OffspringLaw() = default;
  void finish();

  OffspringFamily family_ = OffspringFamily::finite_support;
  double mean_ = 0.0;
  double variance_ = 0.0;
  double zero_prob_ = 0.0;   // linear_fractional
  double ratio_ = 0.0;       // s for geometric / linear_fractional
  std::shared_ptr<const std::vector<double>> probs_;
};

/// log of the mean offspring number; the increment of the associated walk.
/// Throws std::invalid_argument for a law with mean 0 or infinite mean.
double log_mean(const OffspringLaw& q);

/// zeta(a) = Sum_{y >= a} y^2 Q({y}) / (Sum_y y Q({y}))^2. May be +inf.
double zeta(const OffspringLaw& q, std::uint64_t a);

/// Total offspring of `parents` i.i.d. individuals. Parametric families use
/// closed-form aggregation (negative binomial or Poisson totals) and cost O(1)
/// in `parents`; finite-support laws use a multinomial split over the support.
std::uint64_t sample_offspring_total(const OffspringLaw& q, std::uint64_t parents,
                                     Engine& rng);

/// Exact pmf of the total offspring of `parents` individuals for the
/// geometric, Poisson and linear-fractional families.
double offspring_total_pmf(const OffspringLaw& q, std::uint64_t parents,
                           std::uint64_t total);

enum class EnvironmentKind {
  fixed,                // the same law every generation
  geometric_lognormal,  // geometric with mean exp(N(mu, sigma^2))
  poisson_lognormal,    // Poisson with mean exp(N(mu, sigma^2))
  geometric_pareto,     // geometric with mean exp(P - E P), P ~ Pareto(1, a)
  mixture,              // one of finitely many laws, drawn i.i.d.
};

std::string to_string(EnvironmentKind kind);

/// Law of the random environment: generations draw i.i.d. copies of Q.
class EnvironmentModel {
 public:
  static EnvironmentModel fixed(OffspringLaw law);
  static EnvironmentModel geometric_lognormal(double mu, double sigma);
  static EnvironmentModel poisson_lognormal(double mu, double sigma);
  static EnvironmentModel geometric_pareto(double tail_index);
  static EnvironmentModel mixture(std::vector<OffspringLaw> laws, std::vector<double> weights);

  EnvironmentKind kind() const noexcept { return kind_; }
  double mu() const noexcept { return mu_; }
  double sigma() const noexcept { return sigma_; }
  double tail_index() const noexcept { return tail_index_; }
  const std::vector<OffspringLaw>& laws() const noexcept { return laws_; }
  const std::vector<double>& weights() const noexcept { return weights_; }

  OffspringLaw draw(Engine& rng) const;
  /// Increment X = log_mean(draw(rng)) without building the law.
  double draw_log_mean(Engine& rng) const;

  std::string describe() const;

 private:
  EnvironmentModel() = default;

  EnvironmentKind kind_ = EnvironmentKind::fixed;
  double mu_ = 0.0;
  double sigma_ = 0.0;
  double tail_index_ = 0.0;
  std::vector<OffspringLaw> laws_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

/// Hill estimate of the tail index from the k largest |x|.
struct TailIndexEstimate {
  double index = 0.0;
  double std_error = 0.0;
  std::size_t k = 0;
};
TailIndexEstimate hill_tail_index(std::vector<double> samples, std::size_t k);

/// Empirical check of the domain-of-attraction condition (A1) and the
/// log-moment condition on zeta(a) (A2).
struct ConditionReport {
  std::size_t samples = 0;
  double alpha = 2.0;
  double epsilon = 0.1;
  std::uint64_t a = 0;

  Estimate increment_mean;
  double increment_variance = 0.0;
  bool degenerate = false;
  TailIndexEstimate tail;

  double a2_moment = 0.0;       // mean of (log+ zeta(a))^{alpha + epsilon}
  double dominance_ratio = 0.0; // largest summand / total
  bool a2_stable = false;

  bool a1_pass = false;
  bool a2_pass = false;
  bool passed = false;
  std::vector<std::string> notes;
};

ConditionReport check_conditions(const EnvironmentModel& model, double alpha,
                                 double epsilon, std::uint64_t a,
                                 std::size_t sample_count, Engine& rng);

}  // namespace bpre
