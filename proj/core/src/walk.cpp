#include "bpre/walk.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "bpre/parallel.hpp"

namespace bpre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<Lattice> detect_lattice(const std::vector<double>& points,
                                      const std::vector<double>& probs) {
  double smallest = kInf;
  for (double x : points)
    if (x != 0) smallest = std::min(smallest, std::abs(x));
  if (!std::isfinite(smallest)) {
    return Lattice{1.0, {0}, {1.0}};
  }
  for (int divisor = 1; divisor <= 12; ++divisor) {
    const double span = smallest / divisor;
    bool ok = true;
    for (double x : points) {
      const double ratio = x / span;
      if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, std::abs(ratio))) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    Lattice lattice;
    lattice.span = span;
    std::vector<std::pair<int, double>> atoms;
    for (std::size_t i = 0; i < points.size(); ++i)
      atoms.emplace_back(static_cast<int>(std::lround(points[i] / span)), probs[i]);
    std::sort(atoms.begin(), atoms.end());
    for (const auto& [step, p] : atoms) {
      if (!lattice.steps.empty() && lattice.steps.back() == step) {
        lattice.probs.back() += p;
      } else {
        lattice.steps.push_back(step);
        lattice.probs.push_back(p);
      }
    }
    return lattice;
  }
  return std::nullopt;
}

void require_oscillating(const Lattice& lattice) {
  if (lattice.min_step() >= 0 || lattice.max_step() <= 0)
    throw std::domain_error("renewal: lattice walk is not oscillating (one-signed steps)");
  if (std::abs(lattice.mean_steps()) > 1e-12)
    throw std::domain_error("renewal: lattice walk has nonzero drift; V diverges");
}

// Renewal masses of a (possibly defective) ladder-height law on 1..d.
std::vector<double> renewal_from_ladder(const std::vector<double>& ladder, std::size_t max_state) {
  std::vector<double> renewal_mass(max_state + 1, 0.0);
  renewal_mass[0] = 1.0;
  for (std::size_t i = 1; i <= max_state; ++i) {
    double sum = 0;
    for (std::size_t j = 1; j < ladder.size() && j <= i; ++j) sum += ladder[j] * renewal_mass[i - j];
    renewal_mass[i] = sum;
  }
  std::vector<double> values(max_state + 1);
  double running = 0;
  for (std::size_t i = 0; i <= max_state; ++i) {
    running += renewal_mass[i];
    values[i] = running;
  }
  return values;
}

// Roots of a real polynomial (coefficients by ascending degree) by Aberth
// iteration followed by Newton polishing in long double.
std::vector<std::complex<double>> polynomial_roots(const std::vector<double>& coef) {
  using C = std::complex<long double>;
  const std::size_t degree = coef.size() - 1;
  auto eval = [&](C z, C* derivative) {
    C value = 0, slope = 0;
    for (std::size_t k = coef.size(); k-- > 0;) {
      slope = slope * z + value;
      value = value * z + static_cast<long double>(coef[k]);
    }
    *derivative = slope;
    return value;
  };
  const long double radius =
      std::pow(std::abs(static_cast<long double>(coef.front() / coef.back())), 1.0L / degree);
  std::vector<C> z(degree);
  for (std::size_t i = 0; i < degree; ++i)
    z[i] = std::polar(radius, (2 * std::numbers::pi_v<long double> * i + 0.4L) / degree);
  for (int it = 0; it < 500; ++it) {
    long double largest = 0;
    for (std::size_t i = 0; i < degree; ++i) {
      C slope;
      const C value = eval(z[i], &slope);
      if (value == C(0)) continue;
      const C ratio = value / slope;
      C repulsion = 0;
      for (std::size_t j = 0; j < degree; ++j)
        if (j != i) repulsion += C(1) / (z[i] - z[j]);
      const C step = ratio / (C(1) - ratio * repulsion);
      z[i] -= step;
      largest = std::max(largest, std::abs(step) / std::max(1.0L, std::abs(z[i])));
    }
    if (largest < 1e-17L) break;
  }
  std::vector<std::complex<double>> out;
  for (C root : z) {
    for (int it = 0; it < 5; ++it) {
      C slope;
      const C value = eval(root, &slope);
      if (slope == C(0)) break;
      root -= value / slope;
    }
    out.emplace_back(static_cast<double>(root.real()), static_cast<double>(root.imag()));
  }
  return out;
}

// Strict descending ladder-height law of a centred aperiodic lattice walk with
// steps in [-d, u]. z^d (E z^X - 1) has a double root at 1, d - 1 roots inside
// the unit disk and u - 1 outside; the descending Wiener-Hopf factor is
// prod (1 - r / z) over 1 and the inner roots. `defect` receives 1 - sum.
std::vector<double> ladder_height_law(const Lattice& lattice, double* defect) {
  const int down = -lattice.min_step();
  const int up = lattice.max_step();
  std::vector<double> poly(static_cast<std::size_t>(up + down) + 1, 0.0);
  for (std::size_t k = 0; k < lattice.steps.size(); ++k)
    poly[static_cast<std::size_t>(lattice.steps[k] + down)] += lattice.probs[k];
  poly[static_cast<std::size_t>(down)] -= 1.0;
  // Divide out (z - 1)^2.
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> quotient(poly.size() - 1);
    double carry = 0.0;
    for (std::size_t k = poly.size(); k-- > 1;) {
      carry = poly[k] + carry;
      quotient[k - 1] = carry;
    }
    poly = std::move(quotient);
  }
  std::vector<std::complex<double>> inner{1.0};
  if (poly.size() > 1)
    for (const auto& r : polynomial_roots(poly))
      if (std::abs(r) < 1.0) inner.push_back(r);
  if (inner.size() != static_cast<std::size_t>(down))
    throw std::runtime_error("renewal: Wiener-Hopf root split failed (" + std::to_string(inner.size() - 1) +
                             " inner roots, expected " + std::to_string(down - 1) + ")");

  std::vector<std::complex<double>> factor{1.0};
  for (const auto& r : inner) {
    factor.push_back(0.0);
    for (std::size_t k = factor.size() - 1; k > 0; --k) factor[k] -= r * factor[k - 1];
  }
  std::vector<double> ladder(static_cast<std::size_t>(down) + 1, 0.0);
  double total = 0.0;
  for (int j = 1; j <= down; ++j) {
    ladder[static_cast<std::size_t>(j)] = std::max(0.0, -factor[static_cast<std::size_t>(j)].real());
    total += ladder[static_cast<std::size_t>(j)];
  }
  if (defect) *defect = std::abs(1.0 - total);
  return ladder;
}

// Extra steps of the -w floor in lattice units.
long floor_units(double w, double span) {
  if (w < 0) throw std::invalid_argument("stay probability: w must be >= 0");
  return static_cast<long>(std::floor(w / span + 1e-9));
}

}  // namespace

// ---------------------------------------------------------------------------
// Lattice / IncrementModel

double Lattice::mean_steps() const {
  double m = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) m += steps[i] * probs[i];
  return m;
}

bool Lattice::simple_symmetric() const {
  return steps.size() == 2 && steps[0] == -1 && steps[1] == 1 && probs[0] == 0.5 &&
         probs[1] == 0.5;
}

std::string to_string(IncrementKind kind) {
  switch (kind) {
    case IncrementKind::discrete: return "discrete";
    case IncrementKind::gaussian: return "gaussian";
    case IncrementKind::stable: return "stable";
    case IncrementKind::shifted_pareto: return "shifted_pareto";
  }
  return "unknown";
}

IncrementModel IncrementModel::discrete(std::vector<double> points, std::vector<double> probs) {
  if (points.empty() || points.size() != probs.size())
    throw std::invalid_argument("discrete increments: points/probs mismatch");
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0) || !std::isfinite(points[i]))
      throw std::invalid_argument("discrete increments: invalid atom");
    total += probs[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("discrete increments: probabilities must sum to 1");
  IncrementModel model;
  model.kind_ = IncrementKind::discrete;
  double running = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] /= total;
    running += probs[i];
    model.cumulative_.push_back(running);
  }
  model.cumulative_.back() = 1.0;
  model.lattice_ = detect_lattice(points, probs);
  model.points_ = std::move(points);
  // keep normalised probabilities for the truncated moment
  model.stable_ = {};
  model.mean_ = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) model.mean_ += model.points_[i] * probs[i];
  return model;
}

IncrementModel IncrementModel::simple_symmetric() { return discrete({-1.0, 1.0}, {0.5, 0.5}); }

IncrementModel IncrementModel::gaussian(double sigma, double mean) {
  if (!(sigma >= 0) || !std::isfinite(mean))
    throw std::invalid_argument("gaussian increments: need sigma >= 0 and finite mean");
  IncrementModel model;
  model.kind_ = IncrementKind::gaussian;
  model.sigma_ = sigma;
  model.mean_ = mean;
  return model;
}

IncrementModel IncrementModel::stable(StableParams params) {
  params.validate();
  IncrementModel model;
  model.kind_ = IncrementKind::stable;
  model.stable_ = params;
  return model;
}

IncrementModel IncrementModel::shifted_pareto(double tail_index) {
  if (!(tail_index > 1)) throw std::invalid_argument("shifted_pareto: tail index must exceed 1");
  IncrementModel model;
  model.kind_ = IncrementKind::shifted_pareto;
  model.tail_index_ = tail_index;
  return model;
}

IncrementModel IncrementModel::from_environment(const EnvironmentModel& env) {
  switch (env.kind()) {
    case EnvironmentKind::geometric_lognormal:
    case EnvironmentKind::poisson_lognormal:
      return gaussian(env.sigma(), env.mu());
    case EnvironmentKind::geometric_pareto:
      return shifted_pareto(env.tail_index());
    case EnvironmentKind::fixed:
    case EnvironmentKind::mixture: {
      std::vector<double> points;
      for (const auto& law : env.laws()) points.push_back(log_mean(law));
      return discrete(points, env.weights());
    }
  }
  throw std::logic_error("from_environment: unknown environment kind");
}

double IncrementModel::sample(Engine& rng) const {
  switch (kind_) {
    case IncrementKind::discrete: {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      const auto index = std::min<std::size_t>(
          static_cast<std::size_t>(it - cumulative_.begin()), points_.size() - 1);
      return points_[index];
    }
    case IncrementKind::gaussian: {
      std::normal_distribution<double> normal(mean_, sigma_);
      return sigma_ > 0 ? normal(rng) : mean_;
    }
    case IncrementKind::stable:
      return stable_sample(stable_, rng);
    case IncrementKind::shifted_pareto: {
      const double a = tail_index_;
      return std::pow(rng.uniform_open(), -1.0 / a) - a / (a - 1.0);
    }
  }
  return 0.0;
}

double IncrementModel::mean() const {
  switch (kind_) {
    case IncrementKind::discrete:
    case IncrementKind::gaussian:
      return mean_;
    case IncrementKind::stable:
      return stable_.alpha > 1 ? 0.0 : kNaN;
    case IncrementKind::shifted_pareto:
      return 0.0;
  }
  return kNaN;
}

bool IncrementModel::degenerate() const {
  switch (kind_) {
    case IncrementKind::discrete: {
      const double first = points_.front();
      for (std::size_t i = 0; i < points_.size(); ++i) {
        const double p = cumulative_[i] - (i == 0 ? 0.0 : cumulative_[i - 1]);
        if (p > 0 && points_[i] != first) return false;
      }
      return true;
    }
    case IncrementKind::gaussian:
      return sigma_ == 0;
    default:
      return false;
  }
}

TruncatedSecondMoment IncrementModel::truncated_moment() const {
  switch (kind_) {
    case IncrementKind::discrete: {
      std::vector<double> probs(points_.size());
      for (std::size_t i = 0; i < points_.size(); ++i)
        probs[i] = cumulative_[i] - (i == 0 ? 0.0 : cumulative_[i - 1]);
      return TruncatedSecondMoment::discrete(points_, probs);
    }
    case IncrementKind::gaussian:
      if (mean_ == 0) return TruncatedSecondMoment::gaussian(sigma_);
      [[fallthrough]];
    default: {
      Engine rng(0x7a11'5eedULL);
      std::vector<double> samples(1'000'000);
      for (double& x : samples) x = sample(rng);
      return TruncatedSecondMoment::empirical(std::move(samples));
    }
  }
}

double IncrementModel::upper_bound() const {
  constexpr double tail = 1e-12;
  switch (kind_) {
    case IncrementKind::discrete:
      return *std::max_element(points_.begin(), points_.end());
    case IncrementKind::gaussian: {
      const boost::math::normal_distribution<double> standard;
      return mean_ + sigma_ * boost::math::quantile(boost::math::complement(standard, tail));
    }
    case IncrementKind::stable: {
      // P(X > x) ~ (1 + beta) Gamma(alpha) sin(pi alpha / 2) / pi * scale * x^-alpha
      const double a = stable_.alpha;
      if (a == 2.0) return std::sqrt(2.0 * stable_.scale) * 7.4;
      const double constant = (1.0 + stable_.beta) * std::tgamma(a) *
                              std::sin(M_PI * a / 2.0) / M_PI * stable_.scale;
      return std::pow(constant / tail, 1.0 / a);
    }
    case IncrementKind::shifted_pareto:
      return std::pow(tail, -1.0 / tail_index_) - tail_index_ / (tail_index_ - 1.0);
  }
  return kInf;
}

std::string IncrementModel::describe() const {
  std::ostringstream out;
  out << to_string(kind_);
  switch (kind_) {
    case IncrementKind::discrete:
      out << "(" << points_.size() << " atoms";
      if (lattice_) out << ", lattice span " << lattice_->span;
      out << ")";
      break;
    case IncrementKind::gaussian:
      out << "(mean=" << mean_ << ", sigma=" << sigma_ << ")";
      break;
    case IncrementKind::stable:
      out << "(alpha=" << stable_.alpha << ", beta=" << stable_.beta
          << ", scale=" << stable_.scale << ")";
      break;
    case IncrementKind::shifted_pareto:
      out << "(tail_index=" << tail_index_ << ")";
      break;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Paths

WalkPath sample_walk(const IncrementModel& model, std::size_t n, Engine& rng, double start) {
  WalkPath path;
  path.values.reserve(n + 1);
  path.values.push_back(start);
  double s = start;
  for (std::size_t k = 0; k < n; ++k) {
    s += model.sample(rng);
    path.values.push_back(s);
  }
  return path;
}

PathFunctionals path_functionals(std::span<const double> path) {
  if (path.empty()) throw std::invalid_argument("path_functionals: empty path");
  PathFunctionals f;
  f.values.assign(path.begin(), path.end());
  f.min = path[0];
  f.argmin = 0;
  f.max = -kInf;
  for (std::size_t j = 1; j < path.size(); ++j) {
    if (path[j] < f.min) {
      f.min = path[j];
      f.argmin = j;
    }
    f.max = std::max(f.max, path[j]);
  }
  f.suffix_min.resize(path.size());
  f.suffix_min.back() = path.back();
  for (std::size_t j = path.size() - 1; j-- > 0;)
    f.suffix_min[j] = std::min(path[j], f.suffix_min[j + 1]);
  return f;
}

double PathFunctionals::shifted_min(std::size_t k) const {
  if (k >= values.size()) throw std::out_of_range("shifted_min: k beyond path length");
  return suffix_min[k] - values[k];
}

std::string to_string(ScaleTag tag) {
  switch (tag) {
    case ScaleTag::H: return "H";
    case ScaleTag::G: return "G";
    case ScaleTag::Q: return "Q";
    case ScaleTag::S: return "S";
    case ScaleTag::X: return "X";
    case ScaleTag::Y: return "Y";
    case ScaleTag::meander: return "meander";
    case ScaleTag::plus: return "plus";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Renewal function

std::string to_string(RenewalMethod method) {
  return method == RenewalMethod::exact_lattice ? "exact-lattice" : "series-MC";
}

double RenewalTable::operator()(double x, bool* extrapolated) const {
  if (extrapolated) *extrapolated = false;
  if (x < 0) return 0.0;
  if (values.empty()) throw std::logic_error("RenewalTable: empty table");
  if (lattice_span > 0) {
    const auto index = static_cast<std::size_t>(std::floor(x / lattice_span + 1e-9));
    if (index >= values.size())
      throw std::out_of_range("RenewalTable: x beyond exact lattice table");
    return values[index];
  }
  if (x >= grid.back()) {
    if (x == grid.back() || grid.back() <= 0) return values.back();
    if (extrapolated) *extrapolated = true;
    return values.back() * std::pow(x / grid.back(), extrapolation_exponent);
  }
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const auto hi = static_cast<std::size_t>(it - grid.begin());
  const std::size_t lo = hi - 1;
  const double t = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return std::exp((1 - t) * std::log(values[lo]) + t * std::log(values[hi]));
}

void RenewalTable::write_csv(std::ostream& out) const {
  out << "x,V,stderr,method\n";
  out.precision(17);
  for (std::size_t i = 0; i < grid.size(); ++i)
    out << grid[i] << ',' << values[i] << ',' << std_errors[i] << ',' << to_string(method) << '\n';
}

RenewalTable exact_lattice_renewal(const Lattice& lattice, std::size_t max_state) {
  require_oscillating(lattice);
  RenewalTable table;
  table.method = RenewalMethod::exact_lattice;
  table.lattice_span = lattice.span;

  const int down = -lattice.min_step();
  const int up = lattice.max_step();

  if (down == 1) {
    // Strict descents land exactly one unit below the running minimum.
    table.values.resize(max_state + 1);
    for (std::size_t i = 0; i <= max_state; ++i) table.values[i] = static_cast<double>(i + 1);
  } else if (up == 1) {
    // Up-skip-free: the harmonic equation determines V(x + 1) from V(0..x).
    double p_up = 0;
    for (std::size_t i = 0; i < lattice.steps.size(); ++i)
      if (lattice.steps[i] == 1) p_up = lattice.probs[i];
    std::vector<double> v(max_state + 1, 0.0);
    v[0] = 1.0;
    auto at = [&v](long i) { return i < 0 ? 0.0 : v[static_cast<std::size_t>(i)]; };
    for (std::size_t x = 0; x < max_state; ++x) {
      double rest = 0;
      for (std::size_t i = 0; i < lattice.steps.size(); ++i)
        if (lattice.steps[i] <= 0)
          rest += lattice.probs[i] * at(static_cast<long>(x) + lattice.steps[i]);
      v[x + 1] = (v[x] - rest) / p_up;
    }
    table.values = std::move(v);
  } else {
    double defect = 0.0;
    const auto ladder = ladder_height_law(lattice, &defect);
    table.tail_bound = defect;
    table.values = renewal_from_ladder(ladder, max_state);
  }

  table.grid.resize(table.values.size());
  for (std::size_t i = 0; i < table.grid.size(); ++i)
    table.grid[i] = lattice.span * static_cast<double>(i);
  table.std_errors.assign(table.values.size(), 0.0);
  table.extrapolation_exponent = 1.0;
  return table;
}

std::vector<double> renewal_series_partial(const Lattice& lattice, double x, std::size_t k_max,
                                           double* alive) {
  require_oscillating(lattice);
  const long depth = static_cast<long>(std::floor(x / lattice.span + 1e-9));
  // mass[i] = P(S_k = -(i + 1), M_k < 0)
  std::vector<double> mass;
  std::vector<double> partial;
  partial.reserve(k_max);
  double sum = 1.0;
  const int down = -lattice.min_step();
  for (std::size_t k = 1; k <= k_max; ++k) {
    std::vector<double> next(mass.size() + static_cast<std::size_t>(down), 0.0);
    if (k == 1) {
      for (std::size_t i = 0; i < lattice.steps.size(); ++i)
        if (lattice.steps[i] < 0)
          next[static_cast<std::size_t>(-lattice.steps[i] - 1)] += lattice.probs[i];
    } else {
      for (std::size_t s = 0; s < mass.size(); ++s) {
        if (mass[s] == 0) continue;
        const long position = -static_cast<long>(s) - 1;
        for (std::size_t i = 0; i < lattice.steps.size(); ++i) {
          const long target = position + lattice.steps[i];
          if (target < 0) next[static_cast<std::size_t>(-target - 1)] += mass[s] * lattice.probs[i];
        }
      }
    }
    mass = std::move(next);
    for (long i = 0; i < depth && i < static_cast<long>(mass.size()); ++i)
      sum += mass[static_cast<std::size_t>(i)];
    partial.push_back(sum);
  }
  if (alive) *alive = std::accumulate(mass.begin(), mass.end(), 0.0);
  return partial;
}

namespace {

struct LadderChunk {
  std::vector<std::vector<double>> heights;
  std::size_t censored = 0;
  std::size_t longest = 0;
};

RenewalTable monte_carlo_renewal(const IncrementModel& model, std::span<const double> x_grid,
                                 const RenewalBudget& budget) {
  if (model.degenerate()) throw std::domain_error("renewal: degenerate increments");
  const double m = model.mean();
  if (std::isnan(m) || std::abs(m) > 1e-12)
    throw std::domain_error("renewal: increment law is not centred; V diverges");
  if (budget.replicates < 2) throw std::invalid_argument("renewal: need at least 2 replicates");

  std::vector<double> grid(x_grid.begin(), x_grid.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.empty() || grid.front() < 0) throw std::invalid_argument("renewal: grid must be >= 0");
  if (grid.front() > 0) grid.insert(grid.begin(), 0.0);
  const double limit = grid.back();

  auto chunks = parallel_chunks(budget.replicates, 256, budget.threads,
                                [&](std::size_t begin, std::size_t end) {
    LadderChunk chunk;
    chunk.heights.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
      Engine rng = make_engine(budget.seed, Stream::renewal, r);
      std::vector<double> heights;
      double s = 0, minimum = 0;
      std::size_t steps = 0;
      bool censored = false;
      for (;;) {
        s += model.sample(rng);
        ++steps;
        if (s < minimum) {
          minimum = s;
          if (-s > limit) break;
          heights.push_back(-s);
        }
        if (steps >= budget.max_steps) {
          censored = true;
          break;
        }
      }
      chunk.censored += censored ? 1 : 0;
      chunk.longest = std::max(chunk.longest, steps);
      chunk.heights.push_back(std::move(heights));
    }
    return chunk;
  });

  RenewalTable table;
  table.method = RenewalMethod::series_mc;
  table.grid = grid;
  std::vector<RunningMoments> moments(grid.size());
  for (auto& chunk : chunks) {
    table.censored += chunk.censored;
    table.horizon = std::max(table.horizon, chunk.longest);
    for (auto& heights : chunk.heights) {
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto count = std::upper_bound(heights.begin(), heights.end(), grid[i]) - heights.begin();
        moments[i].add(1.0 + static_cast<double>(count));
      }
      if (budget.keep_ladder_heights) table.ladder_heights.push_back(std::move(heights));
    }
  }
  for (const auto& mo : moments) {
    table.values.push_back(mo.mean());
    table.std_errors.push_back(mo.std_error_of_mean());
  }
  table.values.front() = 1.0;
  table.std_errors.front() = 0.0;

  std::vector<double> lx, lv;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] > 0 && grid[i] >= limit / 2) {
      lx.push_back(std::log(grid[i]));
      lv.push_back(std::log(table.values[i]));
    }
  }
  table.extrapolation_exponent = lx.size() >= 2 ? fit_line(lx, lv).slope : 1.0;
  return table;
}

}  // namespace

RenewalTable renewal_function(const IncrementModel& model, std::span<const double> x_grid,
                              const RenewalBudget& budget) {
  if (x_grid.empty()) throw std::invalid_argument("renewal: empty grid");
  if (model.lattice() && !budget.force_monte_carlo) {
    const auto& lattice = *model.lattice();
    const double top = *std::max_element(x_grid.begin(), x_grid.end());
    if (top < 0) throw std::invalid_argument("renewal: grid must be >= 0");
    const auto max_state = static_cast<std::size_t>(std::floor(top / lattice.span + 1e-9));
    return exact_lattice_renewal(lattice, max_state);
  }
  return monte_carlo_renewal(model, x_grid, budget);
}

// ---------------------------------------------------------------------------
// Harmonic identity

HarmonicResidual check_harmonic(const RenewalTable& table, const IncrementModel& model, double x,
                                const HarmonicBudget& budget) {
  if (x < 0) throw std::invalid_argument("check_harmonic: x must be >= 0");
  HarmonicResidual result;
  result.x = x;

  if (table.exact() && model.lattice()) {
    const auto& lattice = *model.lattice();
    double expectation = 0;
    for (std::size_t i = 0; i < lattice.steps.size(); ++i) {
      const double y = x + lattice.span * lattice.steps[i];
      if (y >= 0) expectation += lattice.probs[i] * table(y);
    }
    result.residual = expectation - table(x);
    result.exact = true;
    result.studentized = result.residual == 0 ? 0.0 : std::copysign(kInf, result.residual);
    return result;
  }

  RunningMoments moments;
  if (!table.ladder_heights.empty()) {
    // One independent increment batch per ladder replicate keeps the terms
    // i.i.d. with mean exactly E[V(x+X); x+X>=0] - V(x).
    const std::size_t replicates = table.ladder_heights.size();
    const std::size_t per = std::max<std::size_t>(1, budget.samples / replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
      const auto& heights = table.ladder_heights[r];
      auto count = [&](double y) {
        if (y > table.max_x()) return table(y);
        return 1.0 + static_cast<double>(std::upper_bound(heights.begin(), heights.end(), y) -
                                         heights.begin());
      };
      Engine rng = make_engine(budget.seed, Stream::harmonic, r);
      double acc = 0;
      for (std::size_t k = 0; k < per; ++k) {
        const double y = x + model.sample(rng);
        if (y >= 0) acc += count(y);
      }
      moments.add(acc / static_cast<double>(per) - count(x));
    }
    result.samples = per * replicates;
  } else {
    Engine rng = make_engine(budget.seed, Stream::harmonic, 0);
    const double vx = table(x);
    for (std::size_t k = 0; k < budget.samples; ++k) {
      const double y = x + model.sample(rng);
      moments.add((y >= 0 ? table(y) : 0.0) - vx);
    }
    result.samples = budget.samples;
  }
  result.residual = moments.mean();
  result.std_error = moments.std_error_of_mean();
  result.studentized = result.std_error > 0 ? result.residual / result.std_error : 0.0;
  return result;
}

// ---------------------------------------------------------------------------
// Staying above a level

std::vector<double> stay_probability_curve(const Lattice& lattice, std::size_t n_max, double w) {
  const long floor_level = floor_units(w, lattice.span);
  const int up = std::max(0, lattice.max_step());
  // index = position + floor_level
  std::vector<double> mass(static_cast<std::size_t>(floor_level) + 1 + n_max * up, 0.0);
  std::vector<double> next(mass.size(), 0.0);
  mass[static_cast<std::size_t>(floor_level)] = 1.0;
  std::size_t lo = static_cast<std::size_t>(floor_level);
  std::size_t hi = lo;
  std::vector<double> curve{1.0};
  curve.reserve(n_max + 1);
  for (std::size_t k = 1; k <= n_max; ++k) {
    std::fill(next.begin(), next.begin() + static_cast<long>(std::min(next.size(), hi + up + 1)),
              0.0);
    std::size_t new_lo = next.size(), new_hi = 0;
    for (std::size_t s = lo; s <= hi; ++s) {
      const double m = mass[s];
      if (m == 0) continue;
      for (std::size_t i = 0; i < lattice.steps.size(); ++i) {
        const long target = static_cast<long>(s) + lattice.steps[i];
        if (target < 0) continue;
        const auto t = static_cast<std::size_t>(target);
        next[t] += m * lattice.probs[i];
        new_lo = std::min(new_lo, t);
        new_hi = std::max(new_hi, t);
      }
    }
    std::swap(mass, next);
    double total = 0;
    if (new_lo <= new_hi) {
      for (std::size_t s = new_lo; s <= new_hi; ++s) total += mass[s];
      // clear stale entries of the old buffer range that were not overwritten
      lo = new_lo;
      hi = new_hi;
    } else {
      curve.resize(n_max + 1, 0.0);
      return curve;
    }
    curve.push_back(total);
  }
  return curve;
}

namespace {

struct StayChunk {
  std::size_t above_zero = 0;
  std::size_t above_floor = 0;
};

}  // namespace

StayEstimate min_stay_probability(const IncrementModel& model, std::size_t n, StayMethod method,
                                  double w, const StayBudget& budget, const RenewalTable* table) {
  if (n < 1) throw std::invalid_argument("min_stay_probability: n must be >= 1");
  if (w < 0) throw std::invalid_argument("min_stay_probability: w must be >= 0");
  StayEstimate est;
  est.n = n;
  est.w = w;
  est.method = method;

  if (model.lattice()) {
    const auto& lattice = *model.lattice();
    const auto state = static_cast<std::size_t>(floor_units(w, lattice.span));
    est.renewal_at_w = exact_lattice_renewal(lattice, state)(w);
  } else if (table) {
    est.renewal_at_w = (*table)(w);
  } else {
    est.renewal_at_w = kNaN;
  }

  if (method == StayMethod::exact) {
    if (!model.lattice())
      throw std::invalid_argument("min_stay_probability: exact method needs a lattice model");
    const auto& lattice = *model.lattice();
    est.nonnegative = {stay_probability_curve(lattice, n, 0.0)[n], 0.0};
    est.above = w == 0 ? est.nonnegative : Estimate{stay_probability_curve(lattice, n, w)[n], 0.0};
    est.ratio = {est.above.value / (est.renewal_at_w * est.nonnegative.value), 0.0};
    return est;
  }

  const std::size_t replicates = budget.replicates;
  if (replicates == 0) throw std::invalid_argument("min_stay_probability: no replicates");
  auto chunks = parallel_chunks(replicates, 1024, budget.threads,
                                [&](std::size_t begin, std::size_t end) {
    StayChunk chunk;
    for (std::size_t r = begin; r < end; ++r) {
      Engine rng = make_engine(budget.seed, Stream::walk, r);
      double s = 0;
      bool above_zero = true;
      bool above_floor = true;
      for (std::size_t k = 0; k < n; ++k) {
        s += model.sample(rng);
        if (s < 0) above_zero = false;
        if (s < -w) {
          above_floor = false;
          break;
        }
      }
      chunk.above_zero += above_zero ? 1 : 0;
      chunk.above_floor += above_floor ? 1 : 0;
    }
    return chunk;
  });
  std::size_t zero = 0, floor_count = 0;
  for (const auto& c : chunks) {
    zero += c.above_zero;
    floor_count += c.above_floor;
  }
  est.nonnegative = proportion(zero, replicates);
  est.above = proportion(floor_count, replicates);
  const double pa = est.nonnegative.value;
  const double pb = est.above.value;
  const double ratio = pb / (est.renewal_at_w * pa);
  double rel_var = kNaN;
  if (pa > 0 && pb > 0)
    rel_var = std::max(0.0, ((1 - pa) / pa - (1 - pb) / pb) / static_cast<double>(replicates));
  est.ratio = {ratio, std::isnan(rel_var) ? kNaN : ratio * std::sqrt(rel_var)};
  return est;
}

std::vector<Estimate> stay_probability_curve_mc(const IncrementModel& model,
                                                std::span<const std::size_t> ns,
                                                const StayBudget& budget) {
  if (ns.empty()) return {};
  const std::size_t n_max = *std::max_element(ns.begin(), ns.end());
  auto chunks = parallel_chunks(budget.replicates, 1024, budget.threads,
                                [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> survivors(ns.size(), 0);
    for (std::size_t r = begin; r < end; ++r) {
      Engine rng = make_engine(budget.seed, Stream::walk, r);
      double s = 0;
      std::size_t exit = n_max + 1;
      for (std::size_t k = 1; k <= n_max; ++k) {
        s += model.sample(rng);
        if (s < 0) {
          exit = k;
          break;
        }
      }
      for (std::size_t i = 0; i < ns.size(); ++i)
        if (exit > ns[i]) ++survivors[i];
    }
    return survivors;
  });
  std::vector<std::size_t> totals(ns.size(), 0);
  for (const auto& c : chunks)
    for (std::size_t i = 0; i < ns.size(); ++i) totals[i] += c[i];
  std::vector<Estimate> out;
  for (std::size_t i = 0; i < ns.size(); ++i) out.push_back(proportion(totals[i], budget.replicates));
  return out;
}

}  // namespace bpre
