#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bpre/rng.hpp"
#include "bpre/stable_laws.hpp"
#include "oracles.hpp"

using namespace bpre;

TEST(PositivityRho, SymmetricPointsAreOneHalf) {
  EXPECT_EQ(positivity_rho(2.0, 0.0), 0.5);
  EXPECT_EQ(positivity_rho(1.0, 0.0), 0.5);
  EXPECT_EQ(positivity_rho(1.5, 0.0), 0.5);
}

TEST(PositivityRho, AntisymmetricInBeta) {
  for (double alpha : {0.2, 0.5, 0.8, 0.95, 1.1, 1.3, 1.5, 1.7, 1.9}) {
    for (double beta : {-0.9, -0.5, -0.1, 0.0, 0.3, 0.7, 0.99}) {
      EXPECT_NEAR(positivity_rho(alpha, -beta), 1.0 - positivity_rho(alpha, beta), 1e-12)
          << alpha << ' ' << beta;
    }
  }
}

TEST(PositivityRho, StaysInAdmissibleRange) {
  for (double alpha : {0.3, 0.9, 1.2, 1.8}) {
    for (double beta : {-0.99, -0.4, 0.4, 0.99}) {
      const double rho = positivity_rho(alpha, beta);
      EXPECT_GT(rho, 0.0);
      EXPECT_LT(rho, 1.0);
      if (alpha > 1) {
        EXPECT_GE(rho, 1.0 - 1.0 / alpha - 1e-12);
        EXPECT_LE(rho, 1.0 / alpha + 1e-12);
      }
    }
  }
}

TEST(StableParams, RejectsInadmissiblePairs) {
  EXPECT_THROW((StableParams{1.0, 0.5, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((StableParams{2.0, 0.3, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((StableParams{1.5, 1.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((StableParams{2.5, 0.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((StableParams{1.5, 0.5, 1.0}.validate()));
  EXPECT_DOUBLE_EQ(invariant_exponent(StableParams{2.0, 0.0, 0.5}), 1.0);
}

TEST(TruncatedMoment, GaussianMatchesQuadrature) {
  const auto g = TruncatedSecondMoment::gaussian(1.3);
  for (double u : {0.2, 0.7, 1.0, 2.5, 6.0, 40.0}) {
    EXPECT_NEAR(g(u), oracle::gaussian_truncated_moment(1.3, u), 1e-10) << u;
  }
}

TEST(ScalingConstant, SimpleWalkIsSqrtN) {
  const auto g = TruncatedSecondMoment::discrete({-1.0, 1.0}, {0.5, 0.5});
  for (double n : {1.0, 4.0, 100.0, 12345.0}) {
    EXPECT_NEAR(scaling_constant(g, n), std::sqrt(n), 1e-8 * std::sqrt(n));
  }
}

TEST(ScalingConstant, GaussianSolvesDefiningEquation) {
  const double sigma = 0.8;
  const auto g = TruncatedSecondMoment::gaussian(sigma);
  for (double n : {10.0, 200.0, 4000.0}) {
    const double c = scaling_constant(g, n);
    EXPECT_NEAR(oracle::gaussian_truncated_moment(sigma, c), 1.0 / n, 1e-8 / n);
    EXPECT_NEAR(c / (sigma * std::sqrt(n)), 1.0, 0.05);
  }
}

TEST(ScalingConstant, SearchStartsAtArgmax) {
  // Mass only at +-3: G vanishes below 3, so the infimum must not be taken there.
  const auto g = TruncatedSecondMoment::discrete({-3.0, 3.0}, {0.5, 0.5});
  EXPECT_NEAR(g.search_start(), 3.0, 1e-12);
  EXPECT_NEAR(scaling_constant(g, 100.0), 30.0, 1e-6);
}

TEST(StableSample, PositivityMatchesRho) {
  const StableParams params{1.5, 0.6, 1.0};
  Engine rng(11);
  const int n = 200000;
  int positive = 0;
  for (int i = 0; i < n; ++i) positive += stable_sample(params, rng) > 0;
  const double rho = positivity_rho(params);
  const double se = std::sqrt(rho * (1 - rho) / n);
  EXPECT_NEAR(static_cast<double>(positive) / n, rho, 4 * se);
}

TEST(StableSample, GaussianCaseHasVarianceTwiceScale) {
  const StableParams params{2.0, 0.0, 0.7};
  Engine rng(12);
  const int n = 200000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = stable_sample(params, rng);
    sum += x;
    sum2 += x * x;
  }
  const double var = sum2 / n - (sum / n) * (sum / n);
  EXPECT_NEAR(var, 1.4, 0.02);
}

TEST(LimitLaws, ClosedForms) {
  for (double z : {-1.0, 0.0, 0.1, 0.5, 1.0, 1.7, 3.0, 6.0}) {
    EXPECT_NEAR(limit_cdf_plus(z), oracle::maxwell_cdf(z), 1e-9) << z;
    EXPECT_NEAR(limit_cdf_meander(z), oracle::rayleigh_cdf(z), 1e-15) << z;
  }
  // The conditioned law is stochastically larger than the meander.
  for (double z = 0.1; z < 5; z += 0.1) EXPECT_LT(limit_cdf_plus(z), limit_cdf_meander(z));
}
