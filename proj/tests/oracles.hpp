#pragma once

// Independent reference computations used by the tests: path enumeration,
// brute-force KS, closed forms and direct convolutions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace oracle {

/// Calls fn(path, probability) for every path S_0 = start, ..., S_n of a walk
/// with integer steps.
inline void enumerate_paths(const std::vector<int>& steps, const std::vector<double>& probs,
                            int n, int start,
                            const std::function<void(const std::vector<int>&, double)>& fn) {
  std::vector<int> path{start};
  std::function<void(double)> rec = [&](double prob) {
    if (static_cast<int>(path.size()) == n + 1) {
      fn(path, prob);
      return;
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
      path.push_back(path.back() + steps[i]);
      rec(prob * probs[i]);
      path.pop_back();
    }
  };
  rec(1.0);
}

inline bool stays_above(const std::vector<int>& path, int level) {
  return std::all_of(path.begin(), path.end(), [&](int s) { return s >= level; });
}

/// P(L_n >= -w) by enumeration.
inline double stay_probability(const std::vector<int>& steps, const std::vector<double>& probs,
                               int n, int w = 0) {
  double total = 0.0;
  enumerate_paths(steps, probs, n, 0, [&](const std::vector<int>& path, double p) {
    if (stays_above(path, -w)) total += p;
  });
  return total;
}

/// 1 + sum_{k=1}^{K} P(-S_k <= x, M_k < 0) by enumeration.
inline double renewal_partial(const std::vector<int>& steps, const std::vector<double>& probs,
                              int x, int K) {
  double total = 1.0;
  for (int k = 1; k <= K; ++k) {
    enumerate_paths(steps, probs, k, 0, [&](const std::vector<int>& path, double p) {
      const bool below = std::all_of(path.begin() + 1, path.end(), [](int s) { return s < 0; });
      if (below && -path.back() <= x) total += p;
    });
  }
  return total;
}

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// sup |F_N - F| evaluated on both sides of every sample point, O(N^2).
inline double ks_brute_force(const std::vector<double>& xs, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (double x : xs) {
    double le = 0.0, lt = 0.0;
    for (double y : xs) {
      if (y <= x) le += 1.0;
      if (y < x) lt += 1.0;
    }
    d = std::max({d, std::abs(le / n - cdf(x)), std::abs(lt / n - cdf(x))});
  }
  return d;
}

inline double maxwell_cdf(double z) {
  if (z <= 0) return 0.0;
  return std::erf(z / std::numbers::sqrt2) -
         std::sqrt(2.0 / std::numbers::pi) * z * std::exp(-z * z / 2.0);
}

inline double rayleigh_cdf(double z) { return z <= 0 ? 0.0 : 1.0 - std::exp(-z * z / 2.0); }

/// u^{-2} E[X^2; |X| <= u] for X ~ N(0, sigma^2) by adaptive quadrature.
inline double gaussian_truncated_moment(double sigma, double u) {
  auto f = [sigma](double x) {
    return x * x * std::exp(-x * x / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * std::numbers::pi));
  };
  const double integral =
      2.0 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, u, 15, 1e-14);
  return integral / (u * u);
}

/// pmf of the sum of k i.i.d. copies by repeated convolution, truncated at `size`.
inline std::vector<double> convolution_power(const std::vector<double>& pmf, int k, std::size_t size) {
  std::vector<double> out(size, 0.0);
  out[0] = 1.0;
  for (int j = 0; j < k; ++j) {
    std::vector<double> next(size, 0.0);
    for (std::size_t a = 0; a < size; ++a) {
      if (out[a] == 0.0) continue;
      for (std::size_t b = 0; a + b < size && b < pmf.size(); ++b) next[a + b] += out[a] * pmf[b];
    }
    out.swap(next);
  }
  return out;
}

}  // namespace oracle
