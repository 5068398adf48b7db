#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "bpre/conditioned.hpp"
#include "oracles.hpp"

using namespace bpre;

namespace {

const std::vector<int> kPm1{-1, 1};
const std::vector<double> kHalf{0.5, 0.5};

// P+ path probabilities built from the kernel, one transition at a time.
double kernel_path_probability(const Lattice& lattice, const RenewalTable& table,
                               const std::vector<int>& path) {
  double prob = 1.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    if (path[k - 1] < 0) return 0.0;  // the kernel never leaves [0, inf)
    double step = 0.0;
    for (const auto& [y, p] : plus_transitions(lattice, table, path[k - 1] * lattice.span))
      if (std::lround(y / lattice.span) == path[k]) step = p;
    prob *= step;
  }
  return prob;
}

}  // namespace

TEST(PlusKernel, TransitionsSumToOne) {
  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const auto table = exact_lattice_renewal(*model.lattice(), 60);
  for (double x : {0.0, 1.0, 4.0, 20.0}) {
    double total = 0.0;
    for (const auto& [y, p] : plus_transitions(*model.lattice(), table, x)) {
      EXPECT_GE(y, 0.0);
      total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PlusKernel, PathLawMatchesEnumerationAtSixSteps) {
  // P+(path) = 2^{-n} V(S_n) / V(0) on nonnegative paths.
  const auto model = IncrementModel::simple_symmetric();
  const Lattice& lat = *model.lattice();
  const auto table = exact_lattice_renewal(lat, 20);
  double tv = 0.0;
  double mass = 0.0;
  oracle::enumerate_paths(kPm1, kHalf, 6, 0, [&](const std::vector<int>& path, double p) {
    const double exact = oracle::stays_above(path, 0) ? p * (path.back() + 1.0) : 0.0;
    const double kernel = kernel_path_probability(lat, table, path);
    tv += std::abs(exact - kernel);
    mass += kernel;
  });
  EXPECT_LE(tv / 2, 1e-12);
  EXPECT_NEAR(mass, 1.0, 1e-12);
}

TEST(PlusKernel, PathLawMatchesEnumerationForSkewedLattice) {
  const auto model = IncrementModel::discrete({-1, 2}, {2.0 / 3, 1.0 / 3});
  const Lattice& lat = *model.lattice();
  const auto table = exact_lattice_renewal(lat, 40);
  double tv = 0.0;
  oracle::enumerate_paths(lat.steps, lat.probs, 6, 0, [&](const std::vector<int>& path, double p) {
    const double exact = oracle::stays_above(path, 0) ? p * table(path.back()) / table(0.0) : 0.0;
    tv += std::abs(exact - kernel_path_probability(lat, table, path));
  });
  EXPECT_LE(tv / 2, 1e-12);
}

TEST(ChangeOfMeasure, MeanderIsPlusReweightedByInverseRenewal) {
  // Meander law on nonnegative paths of length n equals the P+ law times
  // 1 / V(S_n), renormalised. Exact round trip for n <= 8.
  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const Lattice& lat = *model.lattice();
  const auto table = exact_lattice_renewal(lat, 40);
  for (int n = 1; n <= 8; ++n) {
    const double stay = oracle::stay_probability(lat.steps, lat.probs, n);
    double norm = 0.0;
    std::vector<std::pair<double, double>> pairs;
    oracle::enumerate_paths(lat.steps, lat.probs, n, 0, [&](const std::vector<int>& path, double p) {
      if (!oracle::stays_above(path, 0)) return;
      const double plus = kernel_path_probability(lat, table, path);
      const double back = plus / table(path.back());
      norm += back;
      pairs.emplace_back(p / stay, back);
    });
    double tv = 0.0;
    for (const auto& [meander, back] : pairs) tv += std::abs(meander - back / norm);
    EXPECT_LE(tv / 2, 1e-12) << n;
    // The normaliser is P(L_n >= 0) / V(0).
    EXPECT_NEAR(norm, stay, 1e-12);
  }
}

TEST(PlusWalk, SampledEndpointsFollowKernel) {
  const auto model = IncrementModel::simple_symmetric();
  const auto table = exact_lattice_renewal(*model.lattice(), 30);
  Engine rng(31);
  const int n = 6, samples = 100000;
  std::map<int, int> counts;
  for (int i = 0; i < samples; ++i) {
    const auto path = sample_plus_walk(model, table, 0.0, n, rng);
    for (double v : path.path.values) ASSERT_GE(v, 0.0);
    ++counts[static_cast<int>(path.path.values.back())];
  }
  std::map<int, double> exact;
  oracle::enumerate_paths(kPm1, kHalf, n, 0, [&](const std::vector<int>& path, double p) {
    if (oracle::stays_above(path, 0)) exact[path.back()] += p * (path.back() + 1.0);
  });
  for (const auto& [y, p] : exact) {
    const double se = std::sqrt(p * (1 - p) / samples);
    EXPECT_NEAR(counts[y] / static_cast<double>(samples), p, 4.5 * se) << y;
  }
}

TEST(Meander, RejectionAndFallback) {
  Engine rng(2);
  std::vector<double> out;
  const auto attempts = simple_meander(100, rng, out);
  ASSERT_GT(attempts, 0u);
  ASSERT_EQ(out.size(), 101u);
  for (double v : out) EXPECT_GE(v, 0.0);

  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  MeanderOptions options;
  options.max_attempts = 1;
  const auto path = sample_meander(model, 2000, rng, options);
  for (double v : path.path.values) EXPECT_GE(v, 0.0);
  if (path.law == ConditionedLaw::meander_importance) {
    EXPECT_GT(path.weight, 0.0);
  }

  options.allow_fallback = false;
  options.max_attempts = 1;
  bool threw = false;
  for (int i = 0; i < 20 && !threw; ++i) {
    try {
      sample_meander(model, 2000, rng, options);
    } catch (const std::runtime_error&) {
      threw = true;
    }
  }
  EXPECT_TRUE(threw);
}

TEST(Reweighting, WeightsProportionalToTerminal) {
  const std::vector<double> terminals{0.0, 1.0, 3.0};
  const auto r = reweight_meander_to_plus(terminals, 2.0, 0.5);
  EXPECT_NEAR(r.weights[0], 0.0, 1e-15);
  EXPECT_NEAR(r.weights[1], 0.25, 1e-15);
  EXPECT_NEAR(r.weights[2], 0.75, 1e-15);
  EXPECT_EQ(r.zero_terminals, 1u);
  EXPECT_NEAR(r.effective_sample_size, 1.0 / (0.0625 + 0.5625), 1e-12);
  EXPECT_THROW(reweight_meander_to_plus(std::vector<double>{-1.0}, 2.0, 0.5), std::invalid_argument);
  EXPECT_THROW(reweight_meander_to_plus(std::vector<double>{0.0, 0.0}, 2.0, 0.5), std::domain_error);
}

TEST(C0, ExactSimpleWalkConverges) {
  const std::vector<std::size_t> ns{100, 1600, 10000};
  const auto est = estimate_C0(IncrementModel::simple_symmetric(), nullptr, ns);
  EXPECT_TRUE(est.exact);
  const double target = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(est.products.back().value / target, 1.0, 0.02);
  EXPECT_NEAR(est.limit.value / target, 1.0, 0.01);
  EXPECT_DOUBLE_EQ(est.scaling[0], 10.0);
  EXPECT_DOUBLE_EQ(est.renewal[0], 11.0);
}

TEST(MeanderEnsemble, IndependentOfThreadCount) {
  const auto a = brownian_meander_ensemble(5, 300, 99, 1, 400);
  const auto b = brownian_meander_ensemble(5, 300, 99, 3, 400);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.attempts, b.attempts);
  EXPECT_EQ(a.times.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.at(i, 0), 0.0);
}

TEST(MeanderEnsemble, GeneralModelUsesScaling) {
  const auto e = meander_ensemble(IncrementModel::gaussian(2.0), 3, 200, 400, 1.0, 5, 2);
  EXPECT_EQ(e.size(), 200u);
  for (double v : e.values) EXPECT_GE(v, 0.0);
  const auto terminal = mean_estimate(e.terminals());
  EXPECT_NEAR(terminal.value, std::sqrt(std::numbers::pi / 2), 5 * terminal.std_error + 0.05);
}
