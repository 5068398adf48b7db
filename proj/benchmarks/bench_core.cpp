#include <benchmark/benchmark.h>

#include <vector>

#include "bpre/bpre_sim.hpp"
#include "bpre/conditioned.hpp"
#include "bpre/limit_verify.hpp"
#include "bpre/stable_laws.hpp"
#include "bpre/walk.hpp"

namespace {

void BM_SimulateTrajectory(benchmark::State& state) {
  const auto model = bpre::EnvironmentModel::geometric_lognormal(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::uint64_t index = 0;
  for (auto _ : state) benchmark::DoNotOptimize(bpre::simulate_replicate(model, n, 7, index++));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateTrajectory)->Arg(1000)->Arg(4000);

void BM_ExactLatticeRenewal(benchmark::State& state) {
  const auto model = bpre::IncrementModel::discrete({-2, -1, 1, 2}, {0.2, 0.3, 0.3, 0.2});
  const auto states = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bpre::exact_lattice_renewal(*model.lattice(), states));
}
BENCHMARK(BM_ExactLatticeRenewal)->Arg(100)->Arg(10000);

void BM_StayProbabilityCurve(benchmark::State& state) {
  const auto lattice = *bpre::IncrementModel::simple_symmetric().lattice();
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bpre::stay_probability_curve(lattice, n));
}
BENCHMARK(BM_StayProbabilityCurve)->Arg(1000)->Arg(10000);

void BM_MeanderEnsemble(benchmark::State& state) {
  const auto samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(bpre::brownian_meander_ensemble(5, samples, 3, 1, 1000));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MeanderEnsemble)->Arg(1000);

void BM_KsDistance(benchmark::State& state) {
  bpre::Engine rng(11);
  std::vector<double> xs(static_cast<std::size_t>(state.range(0)));
  for (auto& x : xs) x = rng.uniform();
  const bpre::Cdf rayleigh = [](double z) { return bpre::limit_cdf_meander(z); };
  for (auto _ : state) benchmark::DoNotOptimize(bpre::ks_distance(xs, rayleigh));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KsDistance)->Arg(1 << 12)->Arg(1 << 16);

}  // namespace

BENCHMARK_MAIN();
