#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace bpre {

/// Point estimate with a symmetric normal-approximation interval.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;

  double lower(double z = 1.96) const { return value - z * std_error; }
  double upper(double z = 1.96) const { return value + z * std_error; }
};

/// Welford accumulator; `merge` is associative so per-chunk accumulators can be
/// combined in any fixed order.
class RunningMoments {
 public:
  void add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  void merge(const RunningMoments& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
      *this = other;
      return;
    }
    const double n1 = static_cast<double>(count_);
    const double n2 = static_cast<double>(other.count_);
    const double delta = other.mean_ - mean_;
    const double total = n1 + n2;
    mean_ += delta * n2 / total;
    m2_ += other.m2_ + delta * delta * n1 * n2 / total;
    count_ += other.count_;
  }

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const {
    return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0;
  }
  double std_error_of_mean() const {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }
  Estimate estimate() const { return {mean(), std_error_of_mean()}; }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline Estimate mean_estimate(std::span<const double> xs) {
  RunningMoments m;
  for (double x : xs) m.add(x);
  return m.estimate();
}

/// Binomial proportion with its normal-approximation standard error.
inline Estimate proportion(std::size_t successes, std::size_t trials) {
  if (trials == 0) return {};
  const double p = static_cast<double>(successes) / static_cast<double>(trials);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(trials))};
}

/// Wilson score interval, better behaved than the Wald interval for small
/// proportions such as survival probabilities.
struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

inline Interval wilson_interval(std::size_t successes, std::size_t trials,
                                double z = 1.96) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Ordinary / weighted least squares line fit y = intercept + slope * x.
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
};

/// With `weights` empty the fit is unweighted and the standard errors come from
/// the residual scatter; otherwise weights are inverse variances and the
/// standard errors are the model-based ones.
LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights = {});

}  // namespace bpre
