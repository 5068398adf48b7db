#pragma once

// Desk-scale checks of the conditional limit theorems: Kolmogorov-Smirnov
// distances against reference laws, finite-dimensional marginals, asymptotic
// independence of short and end scales, and the survival exponent.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bpre/bpre_sim.hpp"
#include "bpre/conditioned.hpp"
#include "bpre/environment.hpp"
#include "bpre/stats.hpp"

namespace bpre {

using Cdf = std::function<double(double)>;

/// sup_z |F_N(z) - F(z)| over the sample. Needs at least 100 samples.
double ks_distance(std::span<const double> samples, const Cdf& reference);

/// Same for a weighted empirical CDF; weights need not be normalised.
double weighted_ks_distance(std::span<const double> samples, std::span<const double> weights,
                            const Cdf& reference);

/// Reference laws on the real line (0 below the origin).
Cdf rayleigh_cdf(double scale = 1.0);
Cdf maxwell_cdf(double scale = 1.0);

struct CdfPoint {
  double z = 0.0;
  double empirical = 0.0;
  double reference = 0.0;
};

struct DistributionalCheck {
  std::string name;
  std::string reference;        // reference law tag
  std::string mode = "closed-form";
  std::size_t samples = 0;
  double ks = 0.0;
  double threshold = 0.0;
  bool passed = false;
  Estimate mean;
  std::vector<CdfPoint> grid;

  void write_csv(std::ostream& out) const;
};

/// KS check with a 41-point CDF dump between 0 and the 99.9% sample quantile.
DistributionalCheck distributional_check(std::string name, std::span<const double> samples,
                                         const Cdf& reference, std::string reference_tag,
                                         double threshold, std::span<const double> weights = {});

struct CorrelationTest {
  double r = 0.0;
  Interval ci;            // Fisher z, 95%
  std::size_t samples = 0;
};

CorrelationTest pearson_correlation(std::span<const double> x, std::span<const double> y);

struct ChiSquareTest {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Contingency test on quartile bins of x and y (4 x 4 when no ties collapse
/// bins).
ChiSquareTest independence_chi_square(std::span<const double> x, std::span<const double> y,
                                      int bins = 4);

// ---------------------------------------------------------------------------
// Experiments

struct VerifyConfig {
  std::size_t n = 2000;
  std::size_t p = 200;
  double U = 1.0;
  std::size_t grid_points = 5;
  std::size_t replicates = 20000000;   // upper limit on BPRE replicates
  std::size_t min_survivors = 20000;
  std::size_t reference_samples = 100000;
  std::size_t reference_steps = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  SimulationOptions simulation;

  double ks_short = 0.07;      // short-scale marginals vs Maxwell
  double ks_end = 0.05;        // end-scale marginals vs Rayleigh
  double ks_trend_slack = 0.01;
  double control_min = 0.15;   // unconditioned control must stay this far from Maxwell
  double correlation_max = 0.05;
  double chi_square_min_p = 0.01;
  double ks_meander = 0.02;
};

/// Throws std::invalid_argument for an environment whose walk is not centred
/// with finite variance (the closed-form references need alpha = 2).
void require_finite_variance_critical(const EnvironmentModel& model);

struct Remark1Report {
  DistributionalCheck end;       // log Z_n / c_n | Z_n > 0 vs Rayleigh
  DistributionalCheck baseline;  // same at the comparison horizon
  bool trend_ok = false;
  Estimate acceptance;
  std::size_t replicates = 0;
  bool passed = false;
};

Remark1Report verify_remark1(const EnvironmentModel& model, const VerifyConfig& config,
                             std::size_t baseline_n = 250);

struct ShortScaleReport {
  DistributionalCheck marginal;                 // value at U vs Maxwell(./sqrt U)
  std::vector<DistributionalCheck> marginals;   // at U/4, U/2, U
  Estimate reference_mean;                      // meander reference at U
  bool dominance = false;                       // conditional mean above the meander mean
  bool ordering = false;                        // ECDF below the Rayleigh CDF within 2 SE
  double worst_ordering_gap = 0.0;              // max of (ECDF - F_meander) / SE
  bool passed = false;
};

struct Theorem1Report {
  ShortScaleReport short_scale;   // H^p
  Estimate acceptance;
  std::size_t survivors = 0;
  std::size_t replicates = 0;
  bool passed = false;
};

struct Theorem2Report {
  ShortScaleReport short_scale;   // Q^p
  DistributionalCheck end;        // S_n / c_n | Z_n > 0 vs Rayleigh
  DistributionalCheck control;    // S_p / c_p unconditioned vs Maxwell
  bool control_ok = false;
  Estimate acceptance;
  std::size_t survivors = 0;
  std::size_t replicates = 0;
  bool passed = false;
};

struct CorollaryReport {
  CorrelationTest log_size;    // (H^p(U), G^n(1))
  CorrelationTest walk;        // (Q^p(U), S^n(1))
  ChiSquareTest log_size_chi;
  ChiSquareTest walk_chi;
  CorrelationTest overlap;     // (Q^p(U), S^n(pU/n)): same walk segment
  std::size_t survivors = 0;
  bool passed = false;
};

/// Meander reference ensemble on [0, U] (alpha = 2: simple-walk meanders).
PathEnsemble meander_reference(const VerifyConfig& config);

Theorem1Report verify_theorem1(const ConditionalEnsembles& ensembles,
                               const PathEnsemble& reference, const VerifyConfig& config);
Theorem1Report verify_theorem1(const EnvironmentModel& model, const VerifyConfig& config);

Theorem2Report verify_theorem2(const EnvironmentModel& model, const ConditionalEnsembles& ensembles,
                               const PathEnsemble& reference, const VerifyConfig& config);
Theorem2Report verify_theorem2(const EnvironmentModel& model, const VerifyConfig& config);

CorollaryReport verify_corollaries(const ConditionalEnsembles& ensembles, const VerifyConfig& config);
CorollaryReport verify_corollaries(const EnvironmentModel& model, const VerifyConfig& config);

/// Runs conditional_ensembles with the config's n, p, U and budget.
ConditionalEnsembles conditional_run(const EnvironmentModel& model, const VerifyConfig& config);

struct SurvivalFit {
  std::vector<SurvivalEstimate> survival;
  std::vector<Estimate> stay;       // P(L_n >= 0)
  std::vector<Estimate> ratio;      // P(Z_n > 0) / P(L_n >= 0)
  LineFit fit;                      // log P(Z_n > 0) on log n
  double slope_target = -0.5;
  double slope_tolerance = 0.07;
  bool slope_ok = false;
  bool ratio_stable = false;
  bool passed = false;
};

/// Weighted least squares of log P(Z_n > 0) on log n over n_grid (one set of
/// runs), with the ratio to P(L_n >= 0) from `walk_replicates` walks.
/// Throws std::runtime_error when a grid point has no survivors.
SurvivalFit survival_exponent_fit(const EnvironmentModel& model, std::span<const std::size_t> n_grid,
                                  std::size_t replicates, std::size_t walk_replicates,
                                  std::uint64_t seed, unsigned threads = 1,
                                  double slope_target = -0.5, double slope_tolerance = 0.07);

struct MeanderLawReport {
  DistributionalCheck rayleigh;   // terminal vs 1 - exp(-z^2/2)
  DistributionalCheck maxwell;    // terminal reweighted by itself vs Maxwell
  Estimate terminal_mean;         // vs sqrt(pi/2)
  double effective_sample_size = 0.0;
  bool ordered = false;           // weighted ECDF <= Rayleigh CDF + 2 SE on a grid
  bool nonnegative = false;
  bool passed = false;
};

/// Simple-walk meanders of `steps` steps rescaled to [0, 1].
MeanderLawReport verify_meander_laws(const PathEnsemble& ensemble, double threshold = 0.02);

}  // namespace bpre
