#include <gtest/gtest.h>

#include <cmath>

#include "bpre/bpre_sim.hpp"

using namespace bpre;

TEST(Simulate, DiracOneStaysAtOne) {
  const auto env = EnvironmentModel::fixed(OffspringLaw::dirac(1));
  const auto t = simulate_replicate(env, 50, 1, 0);
  ASSERT_EQ(t.sizes.size(), 51u);
  for (auto z : t.sizes) EXPECT_EQ(z, 1);
  for (double s : t.walk) EXPECT_EQ(s, 0.0);
  EXPECT_TRUE(t.survived);
  EXPECT_EQ(t.extinction_time, kNever);
}

TEST(Simulate, DiracTwoDoubles) {
  const auto env = EnvironmentModel::fixed(OffspringLaw::dirac(2));
  const auto t = simulate_replicate(env, 40, 1, 0);
  for (std::size_t k = 0; k <= 40; ++k) {
    EXPECT_EQ(t.sizes[k], std::int64_t{1} << k);
    EXPECT_NEAR(t.walk[k], k * std::log(2.0), 1e-12);
    EXPECT_NEAR(t.log_sizes[k], t.walk[k], 1e-12);
  }
}

TEST(Simulate, LogModeAboveCap) {
  const auto env = EnvironmentModel::fixed(OffspringLaw::dirac(2));
  SimulationOptions options;
  options.population_cap = 1e6;
  const auto t = simulate_replicate(env, 80, 1, 0, options);
  EXPECT_NE(t.approximated_from, kNever);
  EXPECT_NEAR(t.log_sizes[80], 80 * std::log(2.0), 1e-6);
  options.allow_approximation = false;
  EXPECT_THROW(simulate_replicate(env, 80, 1, 0, options), std::overflow_error);
}

TEST(Simulate, WalkContinuesAfterExtinction) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  bool seen = false;
  for (std::uint64_t i = 0; i < 50 && !seen; ++i) {
    const auto t = simulate_replicate(env, 100, 7, i);
    ASSERT_EQ(t.walk.size(), 101u);
    if (t.extinction_time == kNever) continue;
    seen = true;
    EXPECT_FALSE(t.survived);
    for (std::size_t k = t.extinction_time; k <= 100; ++k) EXPECT_EQ(t.sizes[k], 0);
  }
  EXPECT_TRUE(seen);
}

TEST(Simulate, EnvironmentReplaysWithFreshReproduction) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  Engine e1(5), e2(5), r1(6), r2(7);
  const auto a = simulate(env, 30, e1, r1);
  const auto b = simulate(env, 30, e2, r2);
  EXPECT_EQ(a.walk, b.walk);
}

TEST(Survival, CriticalGeometricGaltonWatson) {
  // Fixed geometric law with mean 1: P(Z_n > 0) = 1 / (1 + n).
  const auto env = EnvironmentModel::fixed(OffspringLaw::geometric(1.0));
  const auto est = survival_probability(env, 20, 200000, 3);
  EXPECT_NEAR(est.probability.value, 1.0 / 21.0, 4 * est.probability.std_error);
  EXPECT_LE(est.wilson.lower, 1.0 / 21.0);
  EXPECT_GE(est.wilson.upper, 1.0 / 21.0);
}

TEST(Survival, CurveIsConsistentWithSingleHorizon) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  const std::vector<std::size_t> ns{10, 50};
  const auto curve = survival_curve(env, ns, 20000, 4);
  const auto single = survival_probability(env, 50, 20000, 4);
  EXPECT_EQ(curve[1].survivors, single.survivors);
  EXPECT_GE(curve[0].survivors, curve[1].survivors);
}

TEST(Ensemble, IndependentOfThreadCount) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  EnsembleRequest request;
  request.n = 300;
  request.replicates = 20000;
  request.min_survivors = 150;
  request.batch = 4096;
  request.record_steps = {0, 10, 150, 300};
  request.survival_steps = {100, 300};
  request.martingale_starts = {5, 10};
  request.martingale_end = 30;
  request.tail_start = 30;
  request.seed = 8;
  request.threads = 1;
  const auto a = run_ensemble(env, request);
  request.threads = 3;
  const auto b = run_ensemble(env, request);
  EXPECT_EQ(a.replicates, b.replicates);
  EXPECT_EQ(a.survivors, b.survivors);
  EXPECT_EQ(a.survivor_ids, b.survivor_ids);
  EXPECT_EQ(a.log_sizes, b.log_sizes);
  EXPECT_EQ(a.walk, b.walk);
  EXPECT_EQ(a.alive, b.alive);
  EXPECT_EQ(a.martingale_sup, b.martingale_sup);
  EXPECT_EQ(a.tail_sup, b.tail_sup);
  EXPECT_GE(a.survivors, 150u);
  EXPECT_LT(a.replicates, 20000u);  // stopped after the batch that reached the target
  EXPECT_EQ(a.replicates % 4096, 0u);
}

TEST(Ensemble, SurvivorsMatchReplay) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  EnsembleRequest request;
  request.n = 100;
  request.replicates = 3000;
  request.record_steps = {100};
  request.seed = 12;
  const auto result = run_ensemble(env, request);
  ASSERT_GT(result.survivors, 0u);
  for (std::size_t s = 0; s < std::min<std::size_t>(result.survivors, 5); ++s) {
    const auto t = simulate_replicate(env, 100, 12, result.survivor_ids[s]);
    EXPECT_TRUE(t.survived);
    EXPECT_NEAR(t.log_sizes[100], result.log_size(s, 0), 1e-9);
    EXPECT_NEAR(t.walk[100], result.walk_value(s, 0), 1e-12);
  }
}

TEST(Conditional, RegimeValidation) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  ConditionalRequest request;
  request.n = 1000;
  request.p = 200;
  EXPECT_THROW(conditional_ensembles(env, request), std::invalid_argument);
  request.p = 50;
  request.U = 30;
  EXPECT_THROW(conditional_ensembles(env, request), std::invalid_argument);
}

TEST(Conditional, SmallRunShapes) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  ConditionalRequest request;
  request.n = 400;
  request.p = 20;
  request.replicates = 40000;
  request.min_survivors = 200;
  request.seed = 3;
  const auto e = conditional_ensembles(env, request);
  EXPECT_GE(e.H.size(), 200u);
  EXPECT_EQ(e.H.times.size(), 5u);
  EXPECT_EQ(e.G.times.back(), 1.0);
  EXPECT_NEAR(e.c_p, std::sqrt(20.0), 0.05 * std::sqrt(20.0));
  for (std::size_t i = 0; i < e.S.size(); ++i) EXPECT_EQ(e.S.at(i, 0), 0.0);
}

TEST(Martingale, RequiresShortStarts) {
  const auto env = EnvironmentModel::geometric_lognormal(0.0, 1.0);
  MartingaleRequest request;
  request.qs = {600};
  EXPECT_THROW(martingale_limit_check(env, request), std::invalid_argument);
}
