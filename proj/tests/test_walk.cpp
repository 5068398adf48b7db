#include <gtest/gtest.h>

#include <cmath>

#include "bpre/walk.hpp"
#include "oracles.hpp"

using namespace bpre;

namespace {
const std::vector<int> kPm1{-1, 1};
const std::vector<double> kHalf{0.5, 0.5};
}  // namespace

TEST(Lattice, Detection) {
  const auto a = IncrementModel::discrete({-2.0, 2.0}, {0.5, 0.5});
  ASSERT_TRUE(a.lattice());
  EXPECT_DOUBLE_EQ(a.lattice()->span, 2.0);
  EXPECT_EQ(a.lattice()->steps, (std::vector<int>{-1, 1}));

  const auto b = IncrementModel::discrete({-1.0, 0.5}, {1.0 / 3, 2.0 / 3});
  ASSERT_TRUE(b.lattice());
  EXPECT_DOUBLE_EQ(b.lattice()->span, 0.5);
  EXPECT_EQ(b.lattice()->steps, (std::vector<int>{-2, 1}));
  EXPECT_NEAR(b.mean(), 0.0, 1e-15);

  EXPECT_TRUE(IncrementModel::simple_symmetric().lattice()->simple_symmetric());
  EXPECT_FALSE(IncrementModel::gaussian(1.0).lattice());
}

TEST(PathFunctionals, HandPath) {
  const std::vector<double> path{0, 1, -1, 0, -2, 1};
  const auto f = path_functionals(path);
  EXPECT_EQ(f.min, -2);
  EXPECT_EQ(f.max, 1);
  EXPECT_EQ(f.argmin, 4u);
  EXPECT_EQ(f.shifted_min(1), -3);
  EXPECT_EQ(f.shifted_min(4), 0);
  EXPECT_EQ(f.shifted_min(0), -2);
}

TEST(StayProbability, FourStepsIsThreeEighths) {
  const auto curve = stay_probability_curve(*IncrementModel::simple_symmetric().lattice(), 4);
  EXPECT_DOUBLE_EQ(curve[4], 3.0 / 8.0);
  const auto est = min_stay_probability(IncrementModel::simple_symmetric(), 4, StayMethod::exact);
  EXPECT_DOUBLE_EQ(est.nonnegative.value, 0.375);
}

TEST(StayProbability, MatchesEnumeration) {
  const Lattice simple = *IncrementModel::simple_symmetric().lattice();
  const auto skewed_model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const Lattice skewed = *skewed_model.lattice();
  for (int w : {0, 1, 3}) {
    const auto c1 = stay_probability_curve(simple, 12, w);
    const auto c2 = stay_probability_curve(skewed, 8, w);
    for (int n = 0; n <= 12; ++n)
      EXPECT_NEAR(c1[n], oracle::stay_probability(kPm1, kHalf, n, w), 1e-15);
    for (int n = 0; n <= 8; ++n)
      EXPECT_NEAR(c2[n], oracle::stay_probability(skewed.steps, skewed.probs, n, w), 1e-12);
  }
}

TEST(StayProbability, BallotCounts) {
  const auto curve = stay_probability_curve(*IncrementModel::simple_symmetric().lattice(), 200);
  for (int m = 1; m <= 100; ++m) {
    const double exact = oracle::binomial(2 * m, m) / std::pow(4.0, m);
    EXPECT_NEAR(curve[2 * m] / exact, 1.0, 1e-12) << m;
    EXPECT_NEAR(curve[2 * m - 1], curve[2 * m], 1e-15);
  }
}

TEST(StayProbability, SparreAndersenForContinuousSymmetricWalk) {
  StayBudget budget;
  budget.replicates = 200000;
  budget.seed = 21;
  const std::vector<std::size_t> ns{1, 5, 10, 20};
  const auto mc = stay_probability_curve_mc(IncrementModel::gaussian(1.0), ns, budget);
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const int n = static_cast<int>(ns[i]);
    const double exact = oracle::binomial(2 * n, n) / std::pow(4.0, n);
    EXPECT_NEAR(mc[i].value, exact, 4 * mc[i].std_error + 1e-12) << n;
  }
}

TEST(Renewal, SimpleWalkIsFloorPlusOne) {
  const auto table = renewal_function(IncrementModel::simple_symmetric(),
                                      std::vector<double>{0, 2.5, 10});
  EXPECT_TRUE(table.exact());
  for (double x = 0; x <= 10.0; x += 0.25) EXPECT_DOUBLE_EQ(table(x), std::floor(x) + 1) << x;
  EXPECT_EQ(table(-0.5), 0.0);
}

TEST(Renewal, HarmonicResidualIsExactlyZeroOnLattices) {
  for (const auto& model : {IncrementModel::simple_symmetric(),
                            IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2}),
                            IncrementModel::discrete({-1, 2}, {2.0 / 3, 1.0 / 3}),
                            IncrementModel::discrete({-2, 1}, {1.0 / 3, 2.0 / 3})}) {
    const auto table = renewal_function(model, std::vector<double>{0, 40});
    for (double x : {0.0, 1.0, 3.0, 7.0}) {
      const auto h = check_harmonic(table, model, x);
      EXPECT_TRUE(h.exact);
      EXPECT_NEAR(h.residual, 0.0, 1e-12) << model.describe() << " x=" << x;
    }
  }
}

TEST(Renewal, SeriesPartialSumsMatchEnumeration) {
  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const Lattice& lat = *model.lattice();
  for (int x : {0, 1, 3}) {
    const auto partial = renewal_series_partial(lat, x, 7);
    for (int k = 1; k <= 7; ++k)
      EXPECT_NEAR(partial[k - 1], oracle::renewal_partial(lat.steps, lat.probs, x, k), 1e-13)
          << "x=" << x << " K=" << k;
  }
}

TEST(Renewal, SeriesConvergesToExactTable) {
  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const auto table = exact_lattice_renewal(*model.lattice(), 10);
  double alive = 0;
  const auto partial = renewal_series_partial(*model.lattice(), 3.0, 20000, &alive);
  EXPECT_LE(partial.back(), table(3.0) + 1e-12);
  EXPECT_NEAR(partial.back(), table(3.0), 0.02 * table(3.0));
  EXPECT_LT(table.tail_bound, 1e-12);
}

TEST(Renewal, LadderCountingAgreesWithExactLattice) {
  const auto model = IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  std::vector<double> grid{0, 1, 2, 3, 4, 5, 6};
  RenewalBudget budget;
  budget.replicates = 4000;
  budget.max_steps = 100'000;
  budget.force_monte_carlo = true;
  const auto mc = renewal_function(model, grid, budget);
  const auto exact = exact_lattice_renewal(*model.lattice(), 6);
  EXPECT_FALSE(mc.exact());
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(mc.values[i], exact(grid[i]), 4 * mc.std_errors[i] + 0.02 * exact(grid[i])) << grid[i];
}

TEST(Renewal, ContinuousTableIsHarmonic) {
  const auto model = IncrementModel::gaussian(1.0);
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(i * 0.25);
  RenewalBudget budget;
  budget.replicates = 20000;
  const auto table = renewal_function(model, grid, budget);
  EXPECT_DOUBLE_EQ(table(0.0), 1.0);
  for (double x : {0.5, 2.0}) {
    HarmonicBudget hb;
    hb.samples = 200000;
    const auto h = check_harmonic(table, model, x, hb);
    EXPECT_LT(std::abs(h.studentized), 4.0) << x;
  }
  // V(x) ~ sqrt(2) x / sigma for a centred Gaussian walk.
  EXPECT_NEAR(table(10.0) / (std::sqrt(2.0) * 10.0), 1.0, 0.1);
}

TEST(Renewal, RejectsDriftingWalk) {
  EXPECT_THROW(renewal_function(IncrementModel::discrete({-1, 1}, {0.4, 0.6}), std::vector<double>{0, 5}),
               std::domain_error);
}

TEST(StayProbability, RatioToRenewalApproachesOne) {
  const auto est = min_stay_probability(IncrementModel::simple_symmetric(), 10000, StayMethod::exact, 5.0);
  EXPECT_DOUBLE_EQ(est.renewal_at_w, 6.0);
  EXPECT_NEAR(est.ratio.value, 1.0, 0.01);
}

TEST(SampleWalk, Deterministic) {
  Engine a(77), b(77);
  const auto p = sample_walk(IncrementModel::gaussian(1.0), 50, a);
  const auto q = sample_walk(IncrementModel::gaussian(1.0), 50, b);
  EXPECT_EQ(p.values, q.values);
  EXPECT_EQ(p.steps(), 50u);
  EXPECT_EQ(p.values.front(), 0.0);
}
