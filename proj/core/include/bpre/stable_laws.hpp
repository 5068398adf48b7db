#pragma once

// Stable-law parameters, the positivity parameter, the scaling sequence c_n
// built from the truncated second moment, a Chambers-Mallows-Stuck sampler and
// the finite-variance limit CDFs of the meander and of the walk conditioned to
// stay positive.

#include <functional>
#include <vector>

#include "bpre/rng.hpp"

namespace bpre {

/// (alpha, beta, scale) of a strictly stable law with characteristic exponent
/// scale * |t|^alpha * (1 -/+ i beta sgn(t) tan(pi alpha / 2)).
///
/// Admissible pairs: 0 < alpha < 1 or 1 < alpha < 2 with |beta| < 1, plus the
/// symmetric points (1, 0) and (2, 0).
struct StableParams {
  double alpha = 2.0;
  double beta = 0.0;
  double scale = 0.5;

  /// Throws std::invalid_argument when (alpha, beta, scale) is not admissible.
  void validate() const;
  bool admissible() const noexcept;
};

/// rho = lim P(S_n > 0) for increments attracted to the given stable law.
double positivity_rho(const StableParams& params);
double positivity_rho(double alpha, double beta);

/// alpha * (1 - rho): the exponent of the positive invariant function
/// x^{alpha(1-rho)} and of the regular variation of the renewal function.
double invariant_exponent(const StableParams& params);

/// G(u) = u^{-2} E[X^2; |X| <= u], the truncated second moment that defines
/// the scaling sequence.
class TruncatedSecondMoment {
 public:
  /// Finitely supported law; `points` need not be sorted.
  static TruncatedSecondMoment discrete(const std::vector<double>& points,
                                        const std::vector<double>& probs);
  /// Empirical law of increment samples.
  static TruncatedSecondMoment empirical(std::vector<double> samples);
  /// Centered Gaussian with standard deviation sigma (closed form).
  static TruncatedSecondMoment gaussian(double sigma);
  /// Arbitrary G; the search for c_n starts at `search_start`.
  static TruncatedSecondMoment analytic(std::function<double(double)> g,
                                        double search_start);

  double operator()(double u) const { return g_(u); }

  /// First maximiser of G. Below it G can be small for trivial reasons (no
  /// mass near the origin), so c_n is searched on [search_start, inf).
  double search_start() const noexcept { return start_; }

 private:
  TruncatedSecondMoment(std::function<double(double)> g, double start)
      : g_(std::move(g)), start_(start) {}

  std::function<double(double)> g_;
  double start_;
};

/// c_n = inf{u >= search_start : G(u) <= 1/n}, located by bracketing and
/// bisection to relative tolerance 1e-9. `n` may be any real >= 1.
/// Throws std::runtime_error if G does not fall below 1/n on the searchable
/// range, which indicates an increment law without a usable tail.
double scaling_constant(const TruncatedSecondMoment& g, double n);

/// n -> c_n for a fixed increment law.
class ScalingSequence {
 public:
  explicit ScalingSequence(TruncatedSecondMoment g) : g_(std::move(g)) {}
  double operator()(double n) const { return scaling_constant(g_, n); }
  const TruncatedSecondMoment& truncated_moment() const noexcept { return g_; }

 private:
  TruncatedSecondMoment g_;
};

/// One stable variate by the Chambers-Mallows-Stuck transformation.
/// Sign convention: P(X > 0) = positivity_rho(params). For alpha = 2 the
/// variate is N(0, 2 * scale).
double stable_sample(const StableParams& params, Engine& rng);

/// Rayleigh law 1 - exp(-z^2 / 2): terminal value of the Brownian meander.
double limit_cdf_meander(double z);

/// Maxwell law sqrt(2/pi) * int_0^z x^2 exp(-x^2/2) dx: time-one value of
/// Brownian motion conditioned to stay positive. Adaptive Gauss-Kronrod
/// quadrature, absolute tolerance 1e-10.
double limit_cdf_plus(double z);

}  // namespace bpre
