#include "bpre/conditioned.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "bpre/parallel.hpp"

namespace bpre {

std::string to_string(ConditionedLaw law) {
  switch (law) {
    case ConditionedLaw::h_transform: return "h_transform";
    case ConditionedLaw::meander_rejection: return "meander_rejection";
    case ConditionedLaw::meander_importance: return "meander_importance";
  }
  return "unknown";
}

std::vector<std::pair<double, double>> plus_transitions(const Lattice& lattice,
                                                        const RenewalTable& table, double x) {
  if (x < 0) throw std::invalid_argument("plus_transitions: state must be >= 0");
  const double vx = table(x);
  std::vector<std::pair<double, double>> out;
  out.reserve(lattice.steps.size());
  double total = 0;
  for (std::size_t i = 0; i < lattice.steps.size(); ++i) {
    const double y = x + lattice.span * lattice.steps[i];
    if (y < -1e-9 * lattice.span) continue;
    const double p = lattice.probs[i] * table(std::max(0.0, y)) / vx;
    if (p <= 0) continue;
    out.emplace_back(std::max(0.0, y), p);
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::runtime_error("plus_transitions: kernel mass " + std::to_string(total) +
                             " at x=" + std::to_string(x) + "; renewal table is not harmonic");
  return out;
}

ConditionedPath sample_plus_walk(const IncrementModel& model, const RenewalTable& table,
                                 double x0, std::size_t n, Engine& rng) {
  if (x0 < 0) throw std::invalid_argument("sample_plus_walk: x0 must be >= 0");
  ConditionedPath result;
  result.law = ConditionedLaw::h_transform;
  auto& values = result.path.values;
  values.reserve(n + 1);
  values.push_back(x0);
  double x = x0;

  if (model.lattice() && table.exact()) {
    const auto& lattice = *model.lattice();
    for (std::size_t k = 0; k < n; ++k) {
      const auto moves = plus_transitions(lattice, table, x);
      double u = rng.uniform();
      std::size_t pick = moves.size() - 1;
      for (std::size_t i = 0; i < moves.size(); ++i) {
        if (u < moves[i].second) {
          pick = i;
          break;
        }
        u -= moves[i].second;
      }
      x = moves[pick].first;
      values.push_back(x);
    }
    return result;
  }

  const double reach = model.upper_bound();
  constexpr std::size_t kMaxProposals = 1'000'000;
  for (std::size_t k = 0; k < n; ++k) {
    bool extrapolated = false;
    const double ceiling = table(x + reach, &extrapolated);
    result.extrapolated += extrapolated ? 1 : 0;
    std::size_t proposals = 0;
    for (;;) {
      if (++proposals > kMaxProposals)
        throw std::runtime_error("sample_plus_walk: acceptance rate too small at x=" +
                                 std::to_string(x));
      const double y = x + model.sample(rng);
      if (y < 0) continue;
      const double vy = table(y, &extrapolated);
      result.extrapolated += extrapolated ? 1 : 0;
      if (y > x + reach) ++result.bound_exceeded;
      if (rng.uniform() * ceiling < vy) {
        x = y;
        break;
      }
    }
    result.attempts += proposals;
    values.push_back(x);
  }
  return result;
}

std::size_t simple_meander(std::size_t n, Engine& rng, std::vector<double>& out,
                           std::size_t max_attempts) {
  out.resize(n + 1);
  out[0] = 0;
  for (std::size_t attempts = 1; attempts <= max_attempts; ++attempts) {
    long s = 0;
    std::uint64_t bits = 0;
    int left = 0;
    std::size_t k = 1;
    for (; k <= n; ++k) {
      if (left == 0) {
        bits = rng();
        left = 64;
      }
      s += (bits & 1) ? 1 : -1;
      bits >>= 1;
      --left;
      if (s < 0) break;
      out[k] = static_cast<double>(s);
    }
    if (k > n) return attempts;
  }
  return 0;
}

ConditionedPath sample_meander(const IncrementModel& model, std::size_t n, Engine& rng,
                               const MeanderOptions& options) {
  if (n < 1) throw std::invalid_argument("sample_meander: n must be >= 1");
  if (options.floor < 0) throw std::invalid_argument("sample_meander: floor must be >= 0");
  ConditionedPath result;
  result.law = ConditionedLaw::meander_rejection;

  auto& values = result.path.values;
  if (options.floor == 0 && model.lattice() && model.lattice()->simple_symmetric()) {
    result.attempts = simple_meander(n, rng, values, options.max_attempts);
    if (result.attempts > 0) return result;
  }

  values.resize(n + 1);
  const bool tried = result.attempts == 0 && options.floor == 0 && model.lattice() &&
                     model.lattice()->simple_symmetric();
  for (std::size_t attempt = 1; !tried && attempt <= options.max_attempts; ++attempt) {
    double s = 0;
    values[0] = 0;
    std::size_t k = 1;
    for (; k <= n; ++k) {
      s += model.sample(rng);
      if (s < -options.floor) break;
      values[k] = s;
    }
    if (k > n) {
      result.attempts = attempt;
      return result;
    }
  }

  if (!options.allow_fallback)
    throw std::runtime_error("sample_meander: " + std::to_string(options.max_attempts) +
                             " rejection attempts exhausted and fallback disabled");

  RenewalTable local;
  const RenewalTable* table = options.table;
  if (model.lattice()) {
    const auto& lattice = *model.lattice();
    const auto top = static_cast<std::size_t>(
        std::ceil(options.floor / lattice.span) + static_cast<double>(n * static_cast<std::size_t>(
                                                                    std::max(0, lattice.max_step()))) + 1);
    local = exact_lattice_renewal(lattice, top);
    table = &local;
  } else if (!table) {
    throw std::invalid_argument("sample_meander: fallback for a continuous model needs a table");
  }
  ConditionedPath plus = sample_plus_walk(model, *table, options.floor, n, rng);
  for (double& v : plus.path.values) v -= options.floor;
  plus.law = ConditionedLaw::meander_importance;
  plus.weight = 1.0 / (*table)(plus.path.values.back() + options.floor);
  plus.attempts += options.max_attempts;
  return plus;
}

// ---------------------------------------------------------------------------
// C0

C0Estimate estimate_C0(const IncrementModel& model, const RenewalTable* table,
                       std::span<const std::size_t> n_grid, const C0Budget& budget) {
  if (n_grid.empty()) throw std::invalid_argument("estimate_C0: empty n grid");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) || n_grid.front() < 1)
    throw std::invalid_argument("estimate_C0: n grid must be increasing and >= 1");
  C0Estimate est;
  est.ns.assign(n_grid.begin(), n_grid.end());
  const ScalingSequence scaling = model.scaling_sequence();
  for (std::size_t n : est.ns) est.scaling.push_back(scaling(static_cast<double>(n)));

  if (model.lattice()) {
    const auto& lattice = *model.lattice();
    est.exact = true;
    const auto curve = stay_probability_curve(lattice, est.ns.back());
    const double top = *std::max_element(est.scaling.begin(), est.scaling.end());
    const auto renewal =
        exact_lattice_renewal(lattice, static_cast<std::size_t>(std::floor(top / lattice.span)) + 1);
    for (std::size_t i = 0; i < est.ns.size(); ++i) {
      est.renewal.push_back(renewal(est.scaling[i]));
      est.stay.push_back({curve[est.ns[i]], 0.0});
      est.products.push_back({est.renewal[i] * curve[est.ns[i]], 0.0});
    }
  } else {
    if (!table) throw std::invalid_argument("estimate_C0: continuous model needs a renewal table");
    StayBudget stay_budget{budget.replicates, budget.seed, budget.threads};
    est.stay = stay_probability_curve_mc(model, est.ns, stay_budget);
    for (std::size_t i = 0; i < est.ns.size(); ++i) {
      const double v = (*table)(est.scaling[i]);
      const auto it = std::lower_bound(table->grid.begin(), table->grid.end(), est.scaling[i]);
      const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - table->grid.begin()),
                                                  table->grid.size() - 1);
      const double v_se = table->std_errors[j];
      est.renewal.push_back(v);
      const double p = est.stay[i].value;
      est.products.push_back(
          {v * p, std::hypot(v * est.stay[i].std_error, p * v_se)});
    }
  }

  if (est.ns.size() >= 3) {
    std::vector<double> x, y, w;
    for (std::size_t i = 0; i < est.ns.size(); ++i) {
      x.push_back(1.0 / std::sqrt(static_cast<double>(est.ns[i])));
      y.push_back(est.products[i].value);
      if (!est.exact && est.products[i].std_error > 0)
        w.push_back(1.0 / (est.products[i].std_error * est.products[i].std_error));
    }
    const auto fit = w.size() == x.size() ? fit_line(x, y, w) : fit_line(x, y);
    est.limit = {fit.intercept, fit.intercept_stderr};
  } else {
    est.limit = est.products.back();
  }
  return est;
}

Reweighting reweight_meander_to_plus(std::span<const double> terminals, double alpha, double rho) {
  if (terminals.empty()) throw std::invalid_argument("reweight: empty ensemble");
  if (!(alpha > 0 && alpha <= 2) || !(rho > 0 && rho < 1))
    throw std::invalid_argument("reweight: need alpha in (0,2] and rho in (0,1)");
  const double exponent = alpha * (1.0 - rho);
  Reweighting out;
  out.weights.reserve(terminals.size());
  double total = 0;
  for (double t : terminals) {
    if (t < 0 || !std::isfinite(t))
      throw std::invalid_argument("reweight: meander terminal values must be finite and >= 0");
    const double w = t > 0 ? std::pow(t, exponent) : 0.0;
    out.zero_terminals += t > 0 ? 0 : 1;
    out.weights.push_back(w);
    total += w;
  }
  if (!(total > 0)) throw std::domain_error("reweight: every terminal value is zero");
  double squares = 0;
  for (double& w : out.weights) {
    w /= total;
    squares += w * w;
  }
  out.effective_sample_size = 1.0 / squares;
  return out;
}

// ---------------------------------------------------------------------------
// Ensembles

std::vector<double> PathEnsemble::column(std::size_t time) const {
  if (time >= times.size()) throw std::out_of_range("PathEnsemble::column");
  std::vector<double> out(size());
  for (std::size_t p = 0; p < size(); ++p) out[p] = at(p, time);
  return out;
}

void PathEnsemble::write_csv(std::ostream& out) const {
  out << "path_id,time,value,weight\n";
  out.precision(12);
  for (std::size_t p = 0; p < size(); ++p)
    for (std::size_t t = 0; t < times.size(); ++t)
      out << p << ',' << times[t] << ',' << at(p, t) << ',' << weights[p] << '\n';
}

namespace {

std::vector<double> uniform_grid(std::size_t points, double horizon) {
  if (points < 2) throw std::invalid_argument("meander reference: need at least 2 grid points");
  std::vector<double> times(points);
  for (std::size_t i = 0; i < points; ++i)
    times[i] = horizon * static_cast<double>(i) / static_cast<double>(points - 1);
  return times;
}

std::size_t step_index(double t, double horizon, std::size_t steps) {
  const auto k = static_cast<std::size_t>(std::floor(t / horizon * static_cast<double>(steps) + 1e-9));
  return std::min(k, steps);
}

struct EnsembleChunk {
  std::vector<double> values;
  std::size_t attempts = 0;
};

template <class Sampler>
PathEnsemble build_ensemble(std::vector<double> times, std::size_t samples, std::uint64_t seed,
                            unsigned threads, double normalizer, std::size_t steps,
                            double horizon, Sampler&& sample_path) {
  if (samples == 0) throw std::invalid_argument("meander ensemble: need at least one sample");
  const std::size_t width = times.size();
  std::vector<std::size_t> index(width);
  for (std::size_t t = 0; t < width; ++t) index[t] = step_index(times[t], horizon, steps);

  auto chunks = parallel_chunks(samples, 64, threads, [&](std::size_t begin, std::size_t end) {
    EnsembleChunk chunk;
    chunk.values.reserve((end - begin) * width);
    std::vector<double> path;
    for (std::size_t i = begin; i < end; ++i) {
      Engine rng = make_engine(seed, Stream::meander, i);
      chunk.attempts += sample_path(rng, path);
      for (std::size_t t = 0; t < width; ++t) chunk.values.push_back(path[index[t]] / normalizer);
    }
    return chunk;
  });

  PathEnsemble ensemble;
  ensemble.tag = ScaleTag::meander;
  ensemble.normalizer = normalizer;
  ensemble.times = std::move(times);
  ensemble.seed = seed;
  ensemble.values.reserve(samples * width);
  for (auto& c : chunks) {
    ensemble.values.insert(ensemble.values.end(), c.values.begin(), c.values.end());
    ensemble.attempts += c.attempts;
  }
  ensemble.weights.assign(samples, 1.0);
  return ensemble;
}

}  // namespace

ScaledProcess brownian_meander_reference(std::size_t grid_points, Engine& rng, std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("brownian_meander_reference: steps must be >= 1");
  ScaledProcess process;
  process.tag = ScaleTag::meander;
  process.times = uniform_grid(grid_points, 1.0);
  process.normalizer = std::sqrt(static_cast<double>(steps));
  std::vector<double> path;
  simple_meander(steps, rng, path);
  for (double t : process.times)
    process.values.push_back(path[step_index(t, 1.0, steps)] / process.normalizer);
  return process;
}

PathEnsemble brownian_meander_ensemble(std::size_t grid_points, std::size_t samples,
                                       std::uint64_t seed, unsigned threads, std::size_t steps,
                                       double horizon) {
  if (!(horizon > 0)) throw std::invalid_argument("meander ensemble: horizon must be > 0");
  const double normalizer = std::sqrt(static_cast<double>(steps) / horizon);
  return build_ensemble(uniform_grid(grid_points, horizon), samples, seed, threads, normalizer,
                        steps, horizon, [steps](Engine& rng, std::vector<double>& path) {
                          return simple_meander(steps, rng, path);
                        });
}

PathEnsemble meander_ensemble(const IncrementModel& model, std::size_t grid_points,
                              std::size_t samples, std::size_t steps, double horizon,
                              std::uint64_t seed, unsigned threads) {
  if (!(horizon > 0)) throw std::invalid_argument("meander ensemble: horizon must be > 0");
  const double normalizer = model.scaling_sequence()(static_cast<double>(steps) / horizon);
  MeanderOptions options;
  options.max_attempts = 10'000'000;
  options.allow_fallback = false;
  return build_ensemble(uniform_grid(grid_points, horizon), samples, seed, threads, normalizer,
                        steps, horizon, [&](Engine& rng, std::vector<double>& path) {
                          auto sampled = sample_meander(model, steps, rng, options);
                          path = std::move(sampled.path.values);
                          return sampled.attempts;
                        });
}

}  // namespace bpre
