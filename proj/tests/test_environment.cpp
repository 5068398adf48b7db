#include <gtest/gtest.h>

#include <cmath>

#include "bpre/environment.hpp"
#include "oracles.hpp"

using namespace bpre;

namespace {

std::vector<double> single_pmf(const OffspringLaw& q, std::size_t size) {
  std::vector<double> pmf(size);
  for (std::size_t y = 0; y < size; ++y) pmf[y] = q.pmf(y);
  return pmf;
}

void expect_total_pmf_matches_convolution(const OffspringLaw& q) {
  const std::size_t size = 60;
  const auto base = single_pmf(q, size);
  for (int k = 1; k <= 6; ++k) {
    const auto conv = oracle::convolution_power(base, k, size);
    for (std::size_t t = 0; t < 40; ++t)
      EXPECT_NEAR(offspring_total_pmf(q, k, t), conv[t], 1e-12) << q.describe() << " k=" << k << " t=" << t;
  }
}

}  // namespace

TEST(OffspringLaw, MeansAndVariances) {
  const auto g = OffspringLaw::geometric(1.5);
  EXPECT_NEAR(g.mean(), 1.5, 1e-15);
  EXPECT_NEAR(g.variance(), 1.5 * 2.5, 1e-12);
  double total = 0;
  for (int y = 0; y < 400; ++y) total += g.pmf(y);
  EXPECT_NEAR(total, 1.0, 1e-12);

  const auto lf = OffspringLaw::linear_fractional(0.3, 1.2);
  double mean = 0;
  for (int y = 0; y < 2000; ++y) mean += y * lf.pmf(y);
  EXPECT_NEAR(mean, 1.2, 1e-10);

  const auto f = OffspringLaw::finite_support({0.25, 0.25, 0.5});
  EXPECT_NEAR(f.mean(), 1.25, 1e-15);
  EXPECT_EQ(f.max_support(), 2u);
  EXPECT_NEAR(log_mean(OffspringLaw::geometric(std::exp(1.0))), 1.0, 1e-14);
  EXPECT_NEAR(zeta(f, 2), 4 * 0.5 / (1.25 * 1.25), 1e-14);
  EXPECT_THROW(OffspringLaw::finite_support({0.5, 0.2}), std::invalid_argument);
}

TEST(OffspringTotal, NegativeBinomialMatchesConvolution) {
  expect_total_pmf_matches_convolution(OffspringLaw::geometric(0.7));
  expect_total_pmf_matches_convolution(OffspringLaw::geometric(2.0));
}

TEST(OffspringTotal, PoissonMatchesConvolution) {
  expect_total_pmf_matches_convolution(OffspringLaw::poisson(1.3));
}

TEST(OffspringTotal, LinearFractionalMatchesConvolution) {
  expect_total_pmf_matches_convolution(OffspringLaw::linear_fractional(0.4, 1.1));
}

TEST(OffspringTotal, SampledMomentsMatch) {
  Engine rng(5);
  for (const auto& q : {OffspringLaw::geometric(1.4), OffspringLaw::poisson(0.8),
                        OffspringLaw::linear_fractional(0.5, 0.9),
                        OffspringLaw::finite_support({0.2, 0.3, 0.1, 0.4})}) {
    const std::uint64_t parents = 37;
    RunningMoments m;
    for (int i = 0; i < 40000; ++i) m.add(static_cast<double>(sample_offspring_total(q, parents, rng)));
    const double mean = parents * q.mean();
    const double var = parents * q.variance();
    EXPECT_NEAR(m.mean(), mean, 5 * std::sqrt(var / 40000)) << q.describe();
    EXPECT_NEAR(m.variance() / var, 1.0, 0.05) << q.describe();
  }
}

TEST(OffspringTotal, ZeroParentsAndDirac) {
  Engine rng(1);
  EXPECT_EQ(sample_offspring_total(OffspringLaw::geometric(3.0), 0, rng), 0u);
  EXPECT_EQ(sample_offspring_total(OffspringLaw::dirac(3), 5, rng), 15u);
}

TEST(EnvironmentModel, LogMeanIncrementsAreGaussian) {
  const auto env = EnvironmentModel::geometric_lognormal(0.2, 0.9);
  Engine rng(9);
  RunningMoments m;
  for (int i = 0; i < 100000; ++i) m.add(env.draw_log_mean(rng));
  EXPECT_NEAR(m.mean(), 0.2, 4 * 0.9 / std::sqrt(100000.0));
  EXPECT_NEAR(std::sqrt(m.variance()), 0.9, 0.01);

  Engine a(3), b(3);
  EXPECT_NEAR(log_mean(env.draw(a)), env.draw_log_mean(b), 1e-12);
}

TEST(EnvironmentModel, MixtureWeights) {
  const auto env = EnvironmentModel::mixture({OffspringLaw::geometric(2.0), OffspringLaw::geometric(0.5)},
                                             {0.25, 0.75});
  Engine rng(4);
  int high = 0;
  for (int i = 0; i < 40000; ++i) high += env.draw_log_mean(rng) > 0;
  EXPECT_NEAR(high / 40000.0, 0.25, 0.01);
}

TEST(Conditions, CanonicalEnvironmentPasses) {
  Engine rng(17);
  const auto report = check_conditions(EnvironmentModel::geometric_lognormal(0.0, 1.0), 2.0, 0.1, 0, 50000, rng);
  EXPECT_TRUE(report.a1_pass);
  EXPECT_TRUE(report.a2_pass);
  EXPECT_TRUE(report.passed);
}

TEST(Conditions, HeavyTailFailsFiniteVarianceCheck) {
  Engine rng(18);
  const auto report = check_conditions(EnvironmentModel::geometric_pareto(1.5), 2.0, 0.1, 0, 50000, rng);
  EXPECT_FALSE(report.a1_pass);
}

TEST(Conditions, HillEstimatorRecoversParetoIndex) {
  Engine rng(19);
  std::vector<double> xs(200000);
  for (auto& x : xs) x = std::pow(rng.uniform_open(), -1.0 / 1.7);
  const auto est = hill_tail_index(xs, 2000);
  EXPECT_NEAR(est.index, 1.7, 4 * est.std_error);
}
