#include <gtest/gtest.h>

#include <cmath>

#include "bpre/limit_verify.hpp"
#include "oracles.hpp"

using namespace bpre;

TEST(KsDistance, MatchesBruteForce) {
  Engine rng(3);
  std::vector<double> xs(700);
  for (auto& x : xs) x = std::sqrt(-2.0 * std::log(rng.uniform_open())) * 1.1;
  const auto cdf = rayleigh_cdf();
  EXPECT_NEAR(ks_distance(xs, cdf), oracle::ks_brute_force(xs, cdf), 1e-12);

  // Ties on a lattice.
  for (auto& x : xs) x = std::round(x * 4) / 4;
  EXPECT_NEAR(ks_distance(xs, cdf), oracle::ks_brute_force(xs, cdf), 1e-12);
  const auto mx = maxwell_cdf();
  EXPECT_NEAR(ks_distance(xs, mx), oracle::ks_brute_force(xs, mx), 1e-12);
}

TEST(KsDistance, UnitWeightsMatchUnweighted) {
  Engine rng(4);
  std::vector<double> xs(500), w(500, 2.5);
  for (auto& x : xs) x = 3 * rng.uniform();
  const auto cdf = maxwell_cdf(1.2);
  EXPECT_NEAR(weighted_ks_distance(xs, w, cdf), ks_distance(xs, cdf), 1e-12);
  EXPECT_THROW(ks_distance(std::vector<double>(10, 1.0), cdf), std::invalid_argument);
}

TEST(ReferenceLaws, Scaling) {
  for (double z : {0.3, 1.0, 2.2}) {
    EXPECT_NEAR(maxwell_cdf(2.0)(z), oracle::maxwell_cdf(z / 2.0), 1e-9);
    EXPECT_NEAR(rayleigh_cdf(0.5)(z), oracle::rayleigh_cdf(z / 0.5), 1e-15);
  }
  EXPECT_EQ(maxwell_cdf()(-1.0), 0.0);
}

TEST(Correlation, LinearAndIndependent) {
  Engine rng(5);
  std::vector<double> x(20000), y(20000), z(20000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    y[i] = 2 * x[i] + 1;
    z[i] = rng.uniform();
  }
  EXPECT_NEAR(pearson_correlation(x, y).r, 1.0, 1e-12);
  const auto ind = pearson_correlation(x, z);
  EXPECT_LT(std::abs(ind.r), 0.03);
  EXPECT_LT(ind.ci.lower, ind.r);
  EXPECT_GT(ind.ci.upper, ind.r);
}

TEST(ChiSquare, DetectsDependence) {
  Engine rng(6);
  std::vector<double> x(8000), y(8000), z(8000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    y[i] = rng.uniform();
    z[i] = x[i] + 0.3 * rng.uniform();
  }
  const auto ind = independence_chi_square(x, y);
  EXPECT_EQ(ind.dof, 9);
  EXPECT_GT(ind.p_value, 1e-3);
  EXPECT_LT(independence_chi_square(x, z).p_value, 1e-10);
}

TEST(DistributionalCheck, GridAndVerdict) {
  Engine rng(7);
  std::vector<double> xs(5000);
  for (auto& x : xs) x = std::sqrt(-2.0 * std::log(rng.uniform_open()));
  const auto check = distributional_check("terminal", xs, rayleigh_cdf(), "rayleigh", 0.05);
  EXPECT_TRUE(check.passed);
  EXPECT_EQ(check.grid.size(), 41u);
  EXPECT_NEAR(check.mean.value, std::sqrt(std::numbers::pi / 2), 5 * check.mean.std_error);
  const auto wrong = distributional_check("terminal", xs, maxwell_cdf(), "maxwell", 0.05);
  EXPECT_FALSE(wrong.passed);
}

TEST(MeanderLaws, SmallEnsemble) {
  const auto ensemble = brownian_meander_ensemble(3, 20000, 8, 1, 2000);
  const auto report = verify_meander_laws(ensemble, 0.03);
  EXPECT_TRUE(report.nonnegative);
  EXPECT_LT(report.rayleigh.ks, 0.03);
  EXPECT_LT(report.maxwell.ks, 0.03);
  EXPECT_TRUE(report.ordered);
}

TEST(Verify, RejectsNonCriticalEnvironment) {
  EXPECT_THROW(require_finite_variance_critical(EnvironmentModel::geometric_lognormal(0.3, 1.0)),
               std::invalid_argument);
  EXPECT_THROW(require_finite_variance_critical(EnvironmentModel::geometric_pareto(1.5)),
               std::invalid_argument);
  EXPECT_NO_THROW(require_finite_variance_critical(EnvironmentModel::geometric_lognormal(0.0, 1.0)));
}

TEST(SurvivalFit, SlopeOnSmallGrid) {
  const std::vector<std::size_t> ns{50, 100, 200, 400};
  const auto fit = survival_exponent_fit(EnvironmentModel::geometric_lognormal(0.0, 1.0), ns, 100000,
                                         200000, 9);
  EXPECT_EQ(fit.survival.size(), 4u);
  EXPECT_NEAR(fit.fit.slope, -0.5, 0.1);
  for (const auto& r : fit.ratio) EXPECT_GT(r.value, 0.0);
}
