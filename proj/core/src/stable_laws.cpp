#include "bpre/stable_laws.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>

namespace bpre {

namespace {

constexpr double kPi = std::numbers::pi;

std::string describe(double alpha, double beta) {
  return "(alpha=" + std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")";
}

}  // namespace

bool StableParams::admissible() const noexcept {
  if (!(scale > 0.0) || !std::isfinite(scale)) return false;
  if (alpha == 2.0 || alpha == 1.0) return beta == 0.0;
  const bool alpha_ok = (alpha > 0.0 && alpha < 1.0) || (alpha > 1.0 && alpha < 2.0);
  return alpha_ok && std::abs(beta) < 1.0;
}

void StableParams::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("stable law: scale must be positive, got " +
                                std::to_string(scale));
  if (!admissible())
    throw std::invalid_argument("stable law: inadmissible pair " + describe(alpha, beta));
}

double positivity_rho(double alpha, double beta) {
  StableParams{alpha, beta, 1.0}.validate();
  if (alpha == 1.0 || alpha == 2.0) return 0.5;
  return 0.5 + std::atan(beta * std::tan(kPi * alpha / 2.0)) / (kPi * alpha);
}

double positivity_rho(const StableParams& params) {
  params.validate();
  return positivity_rho(params.alpha, params.beta);
}

double invariant_exponent(const StableParams& params) {
  return params.alpha * (1.0 - positivity_rho(params));
}

// ---------------------------------------------------------------------------
// Truncated second moment and the scaling sequence

TruncatedSecondMoment TruncatedSecondMoment::discrete(
    const std::vector<double>& points, const std::vector<double>& probs) {
  if (points.empty() || points.size() != probs.size())
    throw std::invalid_argument("truncated moment: points/probs size mismatch");

  struct Atom {
    double abs;
    double second;
  };
  std::vector<Atom> atoms;
  atoms.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (probs[i] < 0) throw std::invalid_argument("truncated moment: negative probability");
    if (probs[i] > 0) atoms.push_back({std::abs(points[i]), points[i] * points[i] * probs[i]});
  }
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.abs < b.abs; });

  std::vector<double> abs_values;
  std::vector<double> cumulative;
  double running = 0;
  for (const auto& atom : atoms) {
    running += atom.second;
    if (!abs_values.empty() && abs_values.back() == atom.abs) {
      cumulative.back() = running;
    } else {
      abs_values.push_back(atom.abs);
      cumulative.push_back(running);
    }
  }
  if (running <= 0) throw std::invalid_argument("truncated moment: degenerate law at 0");

  double start = 0;
  double best = -1;
  for (std::size_t i = 0; i < abs_values.size(); ++i) {
    if (abs_values[i] <= 0) continue;
    const double value = cumulative[i] / (abs_values[i] * abs_values[i]);
    if (value > best) {
      best = value;
      start = abs_values[i];
    }
  }

  auto g = [abs_values = std::move(abs_values), cumulative = std::move(cumulative)](double u) {
    if (!(u > 0)) return 0.0;
    const auto it = std::upper_bound(abs_values.begin(), abs_values.end(), u);
    if (it == abs_values.begin()) return 0.0;
    return cumulative[static_cast<std::size_t>(it - abs_values.begin()) - 1] / (u * u);
  };
  return TruncatedSecondMoment(std::move(g), start);
}

TruncatedSecondMoment TruncatedSecondMoment::empirical(std::vector<double> samples) {
  if (samples.empty()) throw std::invalid_argument("truncated moment: no samples");
  const std::vector<double> probs(samples.size(), 1.0 / static_cast<double>(samples.size()));
  return discrete(samples, probs);
}

TruncatedSecondMoment TruncatedSecondMoment::gaussian(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("truncated moment: sigma must be positive");
  const boost::math::normal_distribution<double> standard;
  auto g = [sigma, standard](double u) {
    if (!(u > 0)) return 0.0;
    const double t = u / sigma;
    // int_{-t}^{t} z^2 phi(z) dz = (2 Phi(t) - 1) - 2 t phi(t)
    const double central = std::erf(t / std::numbers::sqrt2);
    const double m2 = central - 2.0 * t * boost::math::pdf(standard, t);
    return std::max(0.0, m2) / (t * t);
  };
  const auto peak = boost::math::tools::brent_find_minima(
      [&g](double t) { return -g(t); }, 0.05, 10.0, 40);
  return TruncatedSecondMoment(std::move(g), peak.first * sigma);
}

TruncatedSecondMoment TruncatedSecondMoment::analytic(std::function<double(double)> g,
                                                      double search_start) {
  if (!g) throw std::invalid_argument("truncated moment: empty function");
  if (!(search_start >= 0)) throw std::invalid_argument("truncated moment: bad search start");
  return TruncatedSecondMoment(std::move(g), search_start);
}

double scaling_constant(const TruncatedSecondMoment& g, double n) {
  if (!(n >= 1)) throw std::invalid_argument("scaling_constant: n must be >= 1");
  const double target = 1.0 / n;

  double lo = g.search_start();
  if (lo > 0 && g(lo) <= target) return lo;

  double hi = lo > 0 ? 2 * lo : 1.0;
  int doublings = 0;
  while (!(g(hi) <= target)) {
    lo = hi;
    hi *= 2;
    if (++doublings > 1000 || !std::isfinite(hi))
      throw std::runtime_error(
          "scaling_constant: G(u) never drops below 1/n; increment law has no usable tail");
  }
  // invariant: g(lo) > target >= g(hi)
  while (hi - lo > 1e-9 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) <= target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// Sampling

double stable_sample(const StableParams& params, Engine& rng) {
  params.validate();
  const double alpha = params.alpha;
  const double v = kPi * (rng.uniform_open() - 0.5);

  if (alpha == 1.0) return params.scale * std::tan(v);

  const double w = -std::log(rng.uniform_open());
  const double tan_term = params.beta * std::tan(kPi * alpha / 2.0);
  const double shift = std::atan(tan_term) / alpha;
  const double stretch = std::pow(1.0 + tan_term * tan_term, 1.0 / (2.0 * alpha));

  const double x = stretch * std::sin(alpha * (v + shift)) /
                   std::pow(std::cos(v), 1.0 / alpha) *
                   std::pow(std::cos(v - alpha * (v + shift)) / w, (1.0 - alpha) / alpha);
  return std::pow(params.scale, 1.0 / alpha) * x;
}

// ---------------------------------------------------------------------------
// Limit laws

double limit_cdf_meander(double z) {
  if (std::isnan(z)) throw std::invalid_argument("limit_cdf_meander: z is NaN");
  if (z <= 0) return 0.0;
  return -std::expm1(-0.5 * z * z);
}

double limit_cdf_plus(double z) {
  if (std::isnan(z)) throw std::invalid_argument("limit_cdf_plus: z is NaN");
  if (z <= 0) return 0.0;
  // Beyond 40 the remaining mass is below exp(-800).
  const double upper = std::min(z, 40.0);
  double error = 0;
  const double integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [](double x) { return x * x * std::exp(-0.5 * x * x); }, 0.0, upper, 20, 1e-13, &error);
  return std::min(1.0, std::sqrt(2.0 / kPi) * integral);
}

}  // namespace bpre
