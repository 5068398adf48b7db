#include "bpre/bpre_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "bpre/parallel.hpp"
#include "bpre/walk.hpp"

namespace bpre {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Totals must stay well inside uint64 even after one more generation.
constexpr double kHardCap = 1e17;

struct Population {
  std::uint64_t z = 1;
  double log_z = 0.0;
  bool approximate = false;
  bool ever_approximate = false;

  bool extinct() const { return !approximate && z == 0; }
};

void check_options(const SimulationOptions& options) {
  if (!(options.population_cap >= 1e6))
    throw std::invalid_argument("simulation: population cap must be >= 1e6");
}

void advance(Population& pop, const OffspringLaw& q, double x, Engine& reproduction,
             const SimulationOptions& options) {
  if (!pop.approximate &&
      static_cast<double>(pop.z) > std::min(options.population_cap, kHardCap)) {
    if (!options.allow_approximation)
      throw std::overflow_error("simulation: population " + std::to_string(pop.z) +
                                " above cap and approximation disabled");
    pop.approximate = true;
    pop.ever_approximate = true;
  }
  if (pop.approximate) {
    // Sum of Z i.i.d. offspring ~ Z m (1 + sd / (m sqrt Z) N).
    const double relative = std::sqrt(q.variance() * std::exp(-pop.log_z)) / q.mean();
    std::normal_distribution<double> normal;
    const double factor = std::max(1e-300, 1.0 + relative * normal(reproduction));
    pop.log_z += x + std::log(factor);
    // Back to exact sampling once the population is small enough to die out.
    const double z = std::exp(pop.log_z);
    if (z < 0.5 * std::min(options.population_cap, kHardCap)) {
      pop.approximate = false;
      pop.z = static_cast<std::uint64_t>(std::llround(z));
    }
    return;
  }
  pop.z = sample_offspring_total(q, pop.z, reproduction);
  pop.log_z = pop.z > 0 ? std::log(static_cast<double>(pop.z)) : kNegInf;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

BpreTrajectory simulate(const EnvironmentModel& model, std::size_t n, Engine& environment,
                        Engine& reproduction, const SimulationOptions& options) {
  check_options(options);
  BpreTrajectory t;
  t.sizes.reserve(n + 1);
  t.log_sizes.reserve(n + 1);
  t.walk.reserve(n + 1);
  t.sizes.push_back(1);
  t.log_sizes.push_back(0.0);
  t.walk.push_back(0.0);
  Population pop;
  double s = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    const OffspringLaw q = model.draw(environment);
    const double x = log_mean(q);
    s += x;
    if (!pop.extinct()) {
      advance(pop, q, x, reproduction, options);
      if (pop.approximate && t.approximated_from == kNever) t.approximated_from = k;
      if (pop.extinct()) t.extinction_time = k;
    }
    t.walk.push_back(s);
    t.sizes.push_back(pop.approximate ? -1 : static_cast<std::int64_t>(pop.z));
    t.log_sizes.push_back(pop.log_z);
  }
  t.survived = !pop.extinct();
  return t;
}

BpreTrajectory simulate_replicate(const EnvironmentModel& model, std::size_t n,
                                  std::uint64_t seed, std::uint64_t index,
                                  const SimulationOptions& options) {
  Engine environment = make_engine(seed, Stream::environment, index);
  Engine reproduction = make_engine(seed, Stream::reproduction, index);
  auto t = simulate(model, n, environment, reproduction, options);
  t.env_seed = derive_seed(seed, Stream::environment, index);
  t.repro_seed = derive_seed(seed, Stream::reproduction, index);
  return t;
}

void BpreTrajectory::write_csv(std::ostream& out) const {
  out << "k,Z,logZ,S\n";
  out.precision(17);
  for (std::size_t k = 0; k < walk.size(); ++k)
    out << k << ',' << sizes[k] << ',' << log_sizes[k] << ',' << walk[k] << '\n';
}

// ---------------------------------------------------------------------------
// Ensembles

namespace {

struct ChunkResult {
  std::size_t survivors = 0;
  std::size_t approximated = 0;
  std::vector<std::size_t> alive;
  std::vector<double> log_sizes;
  std::vector<double> walk;
  std::vector<std::uint64_t> ids;
  std::vector<double> martingale_sup;
  std::vector<double> tail_sup;
  std::vector<double> gap;
  double min_d = std::numeric_limits<double>::infinity();
};

}  // namespace

EnsembleResult run_ensemble(const EnvironmentModel& model, const EnsembleRequest& request) {
  check_options(request.simulation);
  if (request.n < 1) throw std::invalid_argument("ensemble: n must be >= 1");
  if (request.replicates < 1) throw std::invalid_argument("ensemble: replicates must be >= 1");

  const std::size_t n = request.n;
  const auto record = sorted_unique(request.record_steps);
  const auto survival = sorted_unique(request.survival_steps);
  const auto starts = sorted_unique(request.martingale_starts);
  const std::size_t end = request.martingale_end;
  const bool martingale = !starts.empty();
  if (!record.empty() && record.back() > n)
    throw std::invalid_argument("ensemble: record step beyond n");
  if (!survival.empty() && survival.back() > n)
    throw std::invalid_argument("ensemble: survival step beyond n");
  if (martingale && (starts.back() > end || end > n || request.tail_start > n))
    throw std::invalid_argument("ensemble: martingale window outside [0, n]");

  auto run_range = [&](std::size_t first, std::size_t last) {
    ChunkResult chunk;
    chunk.alive.assign(survival.size(), 0);
    std::vector<double> rec_log(record.size()), rec_walk(record.size());
    std::vector<double> d(martingale ? end + 1 : 0);
    for (std::size_t id = first; id < last; ++id) {
      Engine environment = make_engine(request.seed, Stream::environment, id);
      Engine reproduction = make_engine(request.seed, Stream::reproduction, id);
      Population pop;
      double s = 0;
      std::size_t r = 0;
      if (r < record.size() && record[r] == 0) {
        rec_log[r] = 0;
        rec_walk[r] = 0;
        ++r;
      }
      if (martingale) d[0] = 0;
      double tail_start_d = 0, tail_max = kNegInf, tail_min = -kNegInf;
      if (martingale && request.tail_start == 0) tail_max = tail_min = 0;
      std::size_t k = 1;
      for (; k <= n; ++k) {
        const OffspringLaw q = model.draw(environment);
        const double x = log_mean(q);
        s += x;
        advance(pop, q, x, reproduction, request.simulation);
        if (pop.extinct()) break;
        if (r < record.size() && record[r] == k) {
          rec_log[r] = pop.log_z;
          rec_walk[r] = s;
          ++r;
        }
        if (martingale) {
          const double dk = pop.log_z - s;
          if (k <= end) d[k] = dk;
          if (k == request.tail_start) tail_start_d = dk;
          if (k >= request.tail_start) {
            tail_max = std::max(tail_max, dk);
            tail_min = std::min(tail_min, dk);
          }
        }
      }
      // Z_j > 0 exactly for j < k
      for (std::size_t i = 0; i < survival.size(); ++i)
        if (survival[i] < k) ++chunk.alive[i];
      if (k <= n) continue;

      ++chunk.survivors;
      chunk.approximated += pop.ever_approximate ? 1 : 0;
      chunk.ids.push_back(id);
      chunk.log_sizes.insert(chunk.log_sizes.end(), rec_log.begin(), rec_log.end());
      chunk.walk.insert(chunk.walk.end(), rec_walk.begin(), rec_walk.end());
      if (martingale) {
        double hi = kNegInf, lo = -kNegInf;
        std::size_t next = starts.size();
        std::vector<double> sup(starts.size());
        for (std::size_t j = end + 1; j-- > starts.front();) {
          hi = std::max(hi, d[j]);
          lo = std::min(lo, d[j]);
          while (next > 0 && starts[next - 1] == j) {
            --next;
            sup[next] = std::max(std::expm1(hi - d[j]), -std::expm1(lo - d[j]));
          }
        }
        chunk.min_d = std::min({chunk.min_d, lo, tail_min});
        chunk.martingale_sup.insert(chunk.martingale_sup.end(), sup.begin(), sup.end());
        chunk.tail_sup.push_back(
            std::max(std::expm1(tail_max - tail_start_d), -std::expm1(tail_min - tail_start_d)));
        chunk.gap.push_back(pop.log_z - s - d[end]);
      }
    }
    return chunk;
  };

  EnsembleResult result;
  result.survival_steps = survival;
  result.alive.assign(survival.size(), 0);
  result.record_steps = record;
  result.martingale_starts = starts;

  const std::size_t batch = std::max<std::size_t>(request.batch, 1);
  std::size_t done = 0;
  while (done < request.replicates) {
    const std::size_t stop = std::min(request.replicates, done + batch);
    auto chunks = parallel_chunks(stop - done, 1024, request.threads,
                                  [&](std::size_t b, std::size_t e) {
                                    return run_range(done + b, done + e);
                                  });
    for (auto& c : chunks) {
      result.survivors += c.survivors;
      result.approximated += c.approximated;
      for (std::size_t i = 0; i < survival.size(); ++i) result.alive[i] += c.alive[i];
      result.log_sizes.insert(result.log_sizes.end(), c.log_sizes.begin(), c.log_sizes.end());
      result.walk.insert(result.walk.end(), c.walk.begin(), c.walk.end());
      result.survivor_ids.insert(result.survivor_ids.end(), c.ids.begin(), c.ids.end());
      result.martingale_sup.insert(result.martingale_sup.end(), c.martingale_sup.begin(),
                                   c.martingale_sup.end());
      result.tail_sup.insert(result.tail_sup.end(), c.tail_sup.begin(), c.tail_sup.end());
      result.head_tail_gap.insert(result.head_tail_gap.end(), c.gap.begin(), c.gap.end());
      result.min_normalized = std::min(result.min_normalized, std::exp(c.min_d));
    }
    done = stop;
    if (request.min_survivors > 0 && result.survivors >= request.min_survivors) break;
  }
  result.replicates = done;
  return result;
}

// ---------------------------------------------------------------------------
// Survival

std::vector<SurvivalEstimate> survival_curve(const EnvironmentModel& model,
                                             std::span<const std::size_t> ns,
                                             std::size_t replicates, std::uint64_t seed,
                                             unsigned threads) {
  if (ns.empty()) return {};
  if (replicates < 1) throw std::invalid_argument("survival: replicates must be >= 1");
  const std::size_t n_max = *std::max_element(ns.begin(), ns.end());
  std::vector<SurvivalEstimate> out;
  if (n_max == 0) {
    for (std::size_t n : ns) out.push_back({n, replicates, replicates, {1.0, 0.0}, {1.0, 1.0}});
    return out;
  }
  EnsembleRequest request;
  request.n = n_max;
  request.replicates = replicates;
  request.seed = seed;
  request.threads = threads;
  request.survival_steps.assign(ns.begin(), ns.end());
  const auto result = run_ensemble(model, request);
  for (std::size_t n : ns) {
    const auto it = std::lower_bound(result.survival_steps.begin(), result.survival_steps.end(), n);
    const std::size_t alive = result.alive[static_cast<std::size_t>(it - result.survival_steps.begin())];
    out.push_back({n, result.replicates, alive, proportion(alive, result.replicates),
                   wilson_interval(alive, result.replicates)});
  }
  return out;
}

SurvivalEstimate survival_probability(const EnvironmentModel& model, std::size_t n,
                                      std::size_t replicates, std::uint64_t seed,
                                      unsigned threads) {
  const std::size_t ns[] = {n};
  return survival_curve(model, ns, replicates, seed, threads).front();
}

// ---------------------------------------------------------------------------
// Conditional ensembles

namespace {

std::vector<double> grid_on(double horizon, std::size_t points) {
  if (points < 2) throw std::invalid_argument("conditional ensembles: need >= 2 grid points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = horizon * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

std::size_t to_step(double t, double scale) {
  return static_cast<std::size_t>(std::floor(t * scale + 1e-9));
}

void check_regime(std::size_t n, std::size_t p, double U) {
  if (!(U > 0)) throw std::invalid_argument("U must be > 0");
  if (p < 1) throw std::invalid_argument("p must be >= 1");
  if (10 * p > n)
    throw std::invalid_argument("p <= n/10 violated (p = " + std::to_string(p) +
                                ", n = " + std::to_string(n) +
                                "): the short scale must be small against n");
  if (static_cast<double>(p) * U > static_cast<double>(n))
    throw std::invalid_argument("pU <= n violated");
}

}  // namespace

ConditionalEnsembles conditional_ensembles(const EnvironmentModel& model,
                                           const ConditionalRequest& request) {
  check_regime(request.n, request.p, request.U);
  const ScalingSequence scaling = IncrementModel::from_environment(model).scaling_sequence();
  ConditionalEnsembles out;
  out.c_p = scaling(static_cast<double>(request.p));
  out.c_n = scaling(static_cast<double>(request.n));

  const auto short_times = grid_on(request.U, request.grid_points);
  auto end_times = grid_on(1.0, request.grid_points);
  const double shared = static_cast<double>(request.p) * request.U / static_cast<double>(request.n);
  if (std::find(end_times.begin(), end_times.end(), shared) == end_times.end()) {
    end_times.push_back(shared);
    std::sort(end_times.begin(), end_times.end());
  }

  const auto p = static_cast<double>(request.p);
  const auto n = static_cast<double>(request.n);
  EnsembleRequest ens;
  ens.n = request.n;
  ens.replicates = request.replicates;
  ens.min_survivors = request.min_survivors;
  ens.seed = request.seed;
  ens.threads = request.threads;
  ens.simulation = request.simulation;
  for (double u : short_times) ens.record_steps.push_back(to_step(u, p));
  for (double t : end_times) ens.record_steps.push_back(to_step(t, n));
  const auto result = run_ensemble(model, ens);
  if (result.survivors == 0)
    throw std::runtime_error("conditional ensembles: no survivors among " +
                             std::to_string(result.replicates) + " replicates (acceptance 0)");

  out.acceptance = result.acceptance();
  out.replicates = result.replicates;
  out.approximated = result.approximated;

  auto index_of = [&](std::size_t step) {
    return static_cast<std::size_t>(
        std::lower_bound(result.record_steps.begin(), result.record_steps.end(), step) -
        result.record_steps.begin());
  };
  auto fill = [&](PathEnsemble& e, ScaleTag tag, const std::vector<double>& times, double scale,
                  double normalizer, bool use_log) {
    e.tag = tag;
    e.normalizer = normalizer;
    e.times = times;
    e.seed = request.seed;
    e.attempts = result.replicates;
    e.weights.assign(result.survivors, 1.0);
    e.values.reserve(result.survivors * times.size());
    std::vector<std::size_t> idx;
    for (double t : times) idx.push_back(index_of(to_step(t, scale)));
    for (std::size_t s = 0; s < result.survivors; ++s)
      for (std::size_t i : idx)
        e.values.push_back((use_log ? result.log_size(s, i) : result.walk_value(s, i)) / normalizer);
  };
  fill(out.H, ScaleTag::H, short_times, p, out.c_p, true);
  fill(out.Q, ScaleTag::Q, short_times, p, out.c_p, false);
  fill(out.G, ScaleTag::G, end_times, n, out.c_n, true);
  fill(out.S, ScaleTag::S, end_times, n, out.c_n, false);
  return out;
}

// ---------------------------------------------------------------------------
// Martingale flattening

MartingaleReport martingale_limit_check(const EnvironmentModel& model,
                                        const MartingaleRequest& request) {
  check_regime(request.n, request.p, request.U);
  if (request.qs.empty()) throw std::invalid_argument("martingale check: no q values");
  for (std::size_t q : request.qs)
    if (q >= request.p)
      throw std::invalid_argument("martingale check: q < p violated (q = " + std::to_string(q) +
                                  ", p = " + std::to_string(request.p) + ")");

  EnsembleRequest ens;
  ens.n = request.n;
  ens.replicates = request.replicates;
  ens.min_survivors = request.min_survivors;
  ens.seed = request.seed;
  ens.threads = request.threads;
  ens.simulation = request.simulation;
  ens.martingale_starts = request.qs;
  ens.martingale_end = request.p;
  ens.tail_start = to_step(request.U, static_cast<double>(request.p));
  const auto result = run_ensemble(model, ens);
  if (result.survivors == 0)
    throw std::runtime_error("martingale check: no survivors among " +
                             std::to_string(result.replicates) + " replicates");

  MartingaleReport report;
  report.survivors = result.survivors;
  report.replicates = result.replicates;
  report.positive = result.min_normalized > 0;
  const std::size_t width = result.martingale_starts.size();
  for (std::size_t j = 0; j < width; ++j) {
    std::size_t small = 0, large = 0;
    for (std::size_t s = 0; s < result.survivors; ++s) {
      const double sup = result.martingale_sup[s * width + j];
      small += sup > 0.1 ? 1 : 0;
      large += sup > 0.5 ? 1 : 0;
    }
    report.rows.push_back({result.martingale_starts[j], proportion(small, result.survivors),
                           proportion(large, result.survivors)});
  }
  std::size_t tail_large = 0, agree = 0;
  for (std::size_t s = 0; s < result.survivors; ++s) {
    tail_large += result.tail_sup[s] > 0.5 ? 1 : 0;
    agree += std::abs(std::expm1(result.head_tail_gap[s])) <= 0.1 ? 1 : 0;
  }
  report.tail_exceed_large = proportion(tail_large, result.survivors);
  report.agreement = proportion(agree, result.survivors);
  return report;
}

}  // namespace bpre
