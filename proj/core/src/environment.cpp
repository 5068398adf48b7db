#include "bpre/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace bpre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_positive_mean(double mean, const char* family) {
  if (!(mean > 0) || !std::isfinite(mean))
    throw std::invalid_argument(std::string(family) + ": mean must be positive and finite");
}

double log_choose(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

// Negative binomial: failures before `successes` successes, success prob `p`.
double negative_binomial_pmf(std::uint64_t successes, double p, std::uint64_t failures) {
  if (successes == 0) return failures == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return failures == 0 ? 1.0 : 0.0;
  const double r = static_cast<double>(successes);
  const double f = static_cast<double>(failures);
  return std::exp(log_choose(r + f - 1, f) + r * std::log(p) + f * std::log1p(-p));
}

// Failures before `successes` successes as a gamma-Poisson mixture; O(1) in
// the number of successes.
std::uint64_t sample_negative_binomial(std::uint64_t successes, double odds, Engine& rng) {
  // odds = (1 - p) / p = mean failures per success
  if (successes == 0 || odds <= 0) return 0;
  std::gamma_distribution<double> gamma(static_cast<double>(successes), odds);
  const double lambda = gamma(rng);
  if (!(lambda > 0)) return 0;
  std::poisson_distribution<std::uint64_t> poisson(lambda);
  return poisson(rng);
}

std::uint64_t sample_binomial(std::uint64_t trials, double p, Engine& rng) {
  if (trials == 0 || p <= 0) return 0;
  if (p >= 1) return trials;
  std::binomial_distribution<std::uint64_t> binomial(trials, p);
  return binomial(rng);
}

std::uint64_t sample_poisson(double mean, Engine& rng) {
  if (!(mean > 0)) return 0;
  std::poisson_distribution<std::uint64_t> poisson(mean);
  return poisson(rng);
}

}  // namespace

std::string to_string(OffspringFamily family) {
  switch (family) {
    case OffspringFamily::geometric: return "geometric";
    case OffspringFamily::poisson: return "poisson";
    case OffspringFamily::linear_fractional: return "linear_fractional";
    case OffspringFamily::finite_support: return "finite_support";
  }
  return "unknown";
}

std::string to_string(EnvironmentKind kind) {
  switch (kind) {
    case EnvironmentKind::fixed: return "fixed";
    case EnvironmentKind::geometric_lognormal: return "geometric_lognormal";
    case EnvironmentKind::poisson_lognormal: return "poisson_lognormal";
    case EnvironmentKind::geometric_pareto: return "geometric_pareto";
    case EnvironmentKind::mixture: return "mixture";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// OffspringLaw

OffspringLaw OffspringLaw::geometric(double mean) {
  require_positive_mean(mean, "geometric");
  OffspringLaw q;
  q.family_ = OffspringFamily::geometric;
  q.mean_ = mean;
  q.ratio_ = mean / (1.0 + mean);
  q.variance_ = mean * (1.0 + mean);
  return q;
}

OffspringLaw OffspringLaw::poisson(double mean) {
  require_positive_mean(mean, "poisson");
  OffspringLaw q;
  q.family_ = OffspringFamily::poisson;
  q.mean_ = mean;
  q.variance_ = mean;
  return q;
}

OffspringLaw OffspringLaw::linear_fractional(double zero_prob, double mean) {
  require_positive_mean(mean, "linear_fractional");
  if (!(zero_prob >= 0 && zero_prob < 1))
    throw std::invalid_argument("linear_fractional: zero probability must lie in [0, 1)");
  const double s = 1.0 - (1.0 - zero_prob) / mean;
  if (s < 0)
    throw std::invalid_argument("linear_fractional: mean must be at least 1 - zero_prob");
  OffspringLaw q;
  q.family_ = OffspringFamily::linear_fractional;
  q.mean_ = mean;
  q.zero_prob_ = zero_prob;
  q.ratio_ = s;
  const double g = s / (1.0 - s);
  q.variance_ = (1.0 - zero_prob) * (1.0 + 3.0 * g + 2.0 * g * g) - mean * mean;
  return q;
}

OffspringLaw OffspringLaw::finite_support(std::vector<double> probs) {
  if (probs.empty()) throw std::invalid_argument("finite_support: empty pmf");
  double total = 0;
  for (double p : probs) {
    if (!(p >= 0) || !std::isfinite(p))
      throw std::invalid_argument("finite_support: probabilities must be nonnegative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("finite_support: probabilities must sum to 1");
  for (double& p : probs) p /= total;
  while (probs.size() > 1 && probs.back() == 0) probs.pop_back();

  OffspringLaw q;
  q.family_ = OffspringFamily::finite_support;
  double m1 = 0, m2 = 0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    m1 += static_cast<double>(y) * probs[y];
    m2 += static_cast<double>(y) * static_cast<double>(y) * probs[y];
  }
  q.mean_ = m1;
  q.variance_ = std::max(0.0, m2 - m1 * m1);
  q.probs_ = std::make_shared<const std::vector<double>>(std::move(probs));
  return q;
}

OffspringLaw OffspringLaw::dirac(std::uint64_t children) {
  std::vector<double> probs(children + 1, 0.0);
  probs[children] = 1.0;
  return finite_support(std::move(probs));
}

double OffspringLaw::pmf(std::uint64_t y) const {
  const double yd = static_cast<double>(y);
  switch (family_) {
    case OffspringFamily::geometric:
      return (1.0 - ratio_) * std::pow(ratio_, yd);
    case OffspringFamily::poisson:
      return std::exp(yd * std::log(mean_) - mean_ - std::lgamma(yd + 1));
    case OffspringFamily::linear_fractional:
      if (y == 0) return zero_prob_;
      return (1.0 - zero_prob_) * (1.0 - ratio_) * std::pow(ratio_, yd - 1);
    case OffspringFamily::finite_support:
      return y < probs_->size() ? (*probs_)[y] : 0.0;
  }
  return 0.0;
}

double OffspringLaw::tail_second_moment(std::uint64_t a) const {
  const double ad = static_cast<double>(a);
  switch (family_) {
    case OffspringFamily::geometric: {
      // memoryless: Sum_{y>=a} y^2 Q(y) = s^a E[(a + Y)^2]
      const double m = mean_;
      return std::pow(ratio_, ad) * (ad * ad + 2 * ad * m + 2 * m * m + m);
    }
    case OffspringFamily::linear_fractional: {
      const double g = ratio_ / (1.0 - ratio_);
      if (a <= 1) return (1.0 - zero_prob_) * (1.0 + 3.0 * g + 2.0 * g * g);
      return (1.0 - zero_prob_) * std::pow(ratio_, ad - 1) *
             (ad * ad + 2 * ad * g + 2 * g * g + g);
    }
    case OffspringFamily::poisson: {
      const double total = mean_ + mean_ * mean_;
      if (ad <= mean_) {
        double head = 0;
        for (std::uint64_t y = 1; y < a; ++y)
          head += static_cast<double>(y) * static_cast<double>(y) * pmf(y);
        return std::max(0.0, total - head);
      }
      double tail = 0;
      for (std::uint64_t y = a;; ++y) {
        const double term = static_cast<double>(y) * static_cast<double>(y) * pmf(y);
        tail += term;
        if (term < 1e-18 * std::max(tail, 1e-300) || y > a + 100000) break;
      }
      return tail;
    }
    case OffspringFamily::finite_support: {
      double sum = 0;
      for (std::size_t y = a; y < probs_->size(); ++y)
        sum += static_cast<double>(y) * static_cast<double>(y) * (*probs_)[y];
      return sum;
    }
  }
  return 0.0;
}

std::uint64_t OffspringLaw::max_support() const noexcept {
  return family_ == OffspringFamily::finite_support ? probs_->size() - 1 : 0;
}

const std::vector<double>& OffspringLaw::support_probs() const {
  if (!probs_) throw std::logic_error("support_probs: law is not finitely supported");
  return *probs_;
}

std::uint64_t OffspringLaw::sample(Engine& rng) const {
  switch (family_) {
    case OffspringFamily::geometric: {
      std::geometric_distribution<std::uint64_t> geom(1.0 - ratio_);
      return geom(rng);
    }
    case OffspringFamily::poisson:
      return sample_poisson(mean_, rng);
    case OffspringFamily::linear_fractional: {
      if (rng.uniform() < zero_prob_) return 0;
      if (ratio_ <= 0) return 1;
      std::geometric_distribution<std::uint64_t> geom(1.0 - ratio_);
      return 1 + geom(rng);
    }
    case OffspringFamily::finite_support: {
      double u = rng.uniform();
      const auto& probs = *probs_;
      for (std::size_t y = 0; y + 1 < probs.size(); ++y) {
        if (u < probs[y]) return y;
        u -= probs[y];
      }
      return probs.size() - 1;
    }
  }
  return 0;
}

std::string OffspringLaw::describe() const {
  std::ostringstream out;
  out << to_string(family_) << "(mean=" << mean_;
  if (family_ == OffspringFamily::linear_fractional) out << ", zero_prob=" << zero_prob_;
  out << ")";
  return out.str();
}

double log_mean(const OffspringLaw& q) {
  const double m = q.mean();
  if (!(m > 0) || !std::isfinite(m))
    throw std::invalid_argument("log_mean: offspring mean must be positive and finite");
  return std::log(m);
}

double zeta(const OffspringLaw& q, std::uint64_t a) {
  const double m = q.mean();
  if (!(m > 0)) throw std::invalid_argument("zeta: offspring mean must be positive");
  const double tail = q.tail_second_moment(a);
  if (!std::isfinite(tail)) return kInf;
  return tail / (m * m);
}

std::uint64_t sample_offspring_total(const OffspringLaw& q, std::uint64_t parents,
                                     Engine& rng) {
  if (parents == 0) return 0;
  switch (q.family()) {
    case OffspringFamily::geometric:
      return sample_negative_binomial(parents, q.mean(), rng);
    case OffspringFamily::poisson:
      return sample_poisson(static_cast<double>(parents) * q.mean(), rng);
    case OffspringFamily::linear_fractional: {
      const double nonzero = 1.0 - q.pmf(0);
      const std::uint64_t breeders = sample_binomial(parents, nonzero, rng);
      // Each breeder has 1 + Geometric(s) children.
      const double s = 1.0 - (1.0 - q.pmf(0)) / q.mean();
      return breeders + sample_negative_binomial(breeders, s / (1.0 - s), rng);
    }
    case OffspringFamily::finite_support: {
      const auto& probs = q.support_probs();
      std::uint64_t remaining = parents;
      double remaining_mass = 1.0;
      std::uint64_t total = 0;
      for (std::size_t y = 0; y < probs.size() && remaining > 0; ++y) {
        if (probs[y] <= 0) continue;
        const bool last = y + 1 == probs.size();
        const std::uint64_t count =
            last ? remaining
                 : sample_binomial(remaining, std::min(1.0, probs[y] / remaining_mass), rng);
        total += count * y;
        remaining -= count;
        remaining_mass -= probs[y];
      }
      return total;
    }
  }
  return 0;
}

double offspring_total_pmf(const OffspringLaw& q, std::uint64_t parents, std::uint64_t total) {
  if (parents == 0) return total == 0 ? 1.0 : 0.0;
  switch (q.family()) {
    case OffspringFamily::geometric:
      return negative_binomial_pmf(parents, 1.0 / (1.0 + q.mean()), total);
    case OffspringFamily::poisson: {
      const double lambda = static_cast<double>(parents) * q.mean();
      const double t = static_cast<double>(total);
      return std::exp(t * std::log(lambda) - lambda - std::lgamma(t + 1));
    }
    case OffspringFamily::linear_fractional: {
      const double zero = q.pmf(0);
      const double s = 1.0 - (1.0 - zero) / q.mean();
      double sum = 0;
      for (std::uint64_t k = 0; k <= std::min(parents, total); ++k) {
        const double breeders =
            std::exp(log_choose(static_cast<double>(parents), static_cast<double>(k))) *
            std::pow(1.0 - zero, static_cast<double>(k)) *
            std::pow(zero, static_cast<double>(parents - k));
        sum += breeders * negative_binomial_pmf(k, 1.0 - s, total - k);
      }
      return sum;
    }
    case OffspringFamily::finite_support: {
      std::vector<double> dist{1.0};
      const auto& probs = q.support_probs();
      for (std::uint64_t i = 0; i < parents; ++i) {
        std::vector<double> next(dist.size() + probs.size() - 1, 0.0);
        for (std::size_t a = 0; a < dist.size(); ++a)
          for (std::size_t b = 0; b < probs.size(); ++b) next[a + b] += dist[a] * probs[b];
        dist = std::move(next);
      }
      return total < dist.size() ? dist[total] : 0.0;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// EnvironmentModel

EnvironmentModel EnvironmentModel::fixed(OffspringLaw law) {
  log_mean(law);
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::fixed;
  model.laws_.push_back(std::move(law));
  model.weights_ = {1.0};
  model.cumulative_ = {1.0};
  return model;
}

EnvironmentModel EnvironmentModel::geometric_lognormal(double mu, double sigma) {
  if (!(sigma >= 0) || !std::isfinite(mu))
    throw std::invalid_argument("geometric_lognormal: need finite mu and sigma >= 0");
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::geometric_lognormal;
  model.mu_ = mu;
  model.sigma_ = sigma;
  return model;
}

EnvironmentModel EnvironmentModel::poisson_lognormal(double mu, double sigma) {
  auto model = geometric_lognormal(mu, sigma);
  model.kind_ = EnvironmentKind::poisson_lognormal;
  return model;
}

EnvironmentModel EnvironmentModel::geometric_pareto(double tail_index) {
  if (!(tail_index > 1))
    throw std::invalid_argument("geometric_pareto: tail index must exceed 1 for a centred walk");
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::geometric_pareto;
  model.tail_index_ = tail_index;
  return model;
}

EnvironmentModel EnvironmentModel::mixture(std::vector<OffspringLaw> laws,
                                           std::vector<double> weights) {
  if (laws.empty() || laws.size() != weights.size())
    throw std::invalid_argument("mixture: laws and weights must be nonempty and aligned");
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0)) throw std::invalid_argument("mixture: negative weight");
    total += w;
  }
  if (!(total > 0)) throw std::invalid_argument("mixture: weights sum to zero");
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::mixture;
  for (const auto& law : laws) log_mean(law);
  model.laws_ = std::move(laws);
  double running = 0;
  for (double w : weights) {
    model.weights_.push_back(w / total);
    running += w / total;
    model.cumulative_.push_back(running);
  }
  model.cumulative_.back() = 1.0;
  return model;
}

double EnvironmentModel::draw_log_mean(Engine& rng) const {
  switch (kind_) {
    case EnvironmentKind::geometric_lognormal:
    case EnvironmentKind::poisson_lognormal: {
      std::normal_distribution<double> normal(mu_, sigma_);
      return sigma_ > 0 ? normal(rng) : mu_;
    }
    case EnvironmentKind::geometric_pareto: {
      const double a = tail_index_;
      const double pareto = std::pow(rng.uniform_open(), -1.0 / a);
      return pareto - a / (a - 1.0);
    }
    case EnvironmentKind::fixed:
    case EnvironmentKind::mixture:
      return log_mean(draw(rng));
  }
  return 0.0;
}

OffspringLaw EnvironmentModel::draw(Engine& rng) const {
  switch (kind_) {
    case EnvironmentKind::fixed:
      return laws_.front();
    case EnvironmentKind::mixture: {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      const auto index = std::min<std::size_t>(
          static_cast<std::size_t>(it - cumulative_.begin()), laws_.size() - 1);
      return laws_[index];
    }
    case EnvironmentKind::geometric_lognormal:
    case EnvironmentKind::geometric_pareto:
      // Means above e^700 overflow a double; heavy-tailed draws are capped there.
      return OffspringLaw::geometric(std::exp(std::min(draw_log_mean(rng), 700.0)));
    case EnvironmentKind::poisson_lognormal:
      return OffspringLaw::poisson(std::exp(draw_log_mean(rng)));
  }
  return laws_.front();
}

std::string EnvironmentModel::describe() const {
  std::ostringstream out;
  out << to_string(kind_);
  switch (kind_) {
    case EnvironmentKind::geometric_lognormal:
    case EnvironmentKind::poisson_lognormal:
      out << "(mu=" << mu_ << ", sigma=" << sigma_ << ")";
      break;
    case EnvironmentKind::geometric_pareto:
      out << "(tail_index=" << tail_index_ << ")";
      break;
    case EnvironmentKind::fixed:
      out << "(" << laws_.front().describe() << ")";
      break;
    case EnvironmentKind::mixture:
      out << "(" << laws_.size() << " laws)";
      break;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Conditions

TailIndexEstimate hill_tail_index(std::vector<double> samples, std::size_t k) {
  for (double& x : samples) x = std::abs(x);
  if (k == 0 || k >= samples.size())
    throw std::invalid_argument("hill_tail_index: need 0 < k < sample size");
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(k),
                   samples.end(), std::greater<>());
  const double threshold = samples[k];
  if (!(threshold > 0)) return {kInf, 0.0, k};
  double sum = 0;
  for (std::size_t i = 0; i < k; ++i) sum += std::log(samples[i] / threshold);
  if (!(sum > 0)) return {kInf, 0.0, k};
  const double index = static_cast<double>(k) / sum;
  return {index, index / std::sqrt(static_cast<double>(k)), k};
}

ConditionReport check_conditions(const EnvironmentModel& model, double alpha, double epsilon,
                                 std::uint64_t a, std::size_t sample_count, Engine& rng) {
  if (sample_count < 1000)
    throw std::invalid_argument("check_conditions: need at least 1000 samples");
  if (!(alpha > 0 && alpha <= 2)) throw std::invalid_argument("check_conditions: alpha in (0, 2]");
  if (!(epsilon > 0)) throw std::invalid_argument("check_conditions: epsilon must be positive");

  ConditionReport report;
  report.samples = sample_count;
  report.alpha = alpha;
  report.epsilon = epsilon;
  report.a = a;

  std::vector<double> increments;
  increments.reserve(sample_count);
  RunningMoments moments;
  double moment_sum = 0;
  double largest_term = 0;
  bool infinite_zeta = false;
  for (std::size_t i = 0; i < sample_count; ++i) {
    const OffspringLaw q = model.draw(rng);
    const double x = log_mean(q);
    increments.push_back(x);
    moments.add(x);
    const double z = zeta(q, a);
    if (!std::isfinite(z)) {
      infinite_zeta = true;
      continue;
    }
    const double term = z > 1 ? std::pow(std::log(z), alpha + epsilon) : 0.0;
    moment_sum += term;
    largest_term = std::max(largest_term, term);
  }

  report.increment_mean = moments.estimate();
  report.increment_variance = moments.variance();
  report.degenerate = !(report.increment_variance > 0);

  if (report.degenerate) {
    report.notes.emplace_back("degenerate X: zero variance, the walk is not oscillating");
  } else {
    const auto k = std::max<std::size_t>(10, static_cast<std::size_t>(std::sqrt(
                                                 static_cast<double>(sample_count))));
    report.tail = hill_tail_index(increments, k);
  }

  report.a2_moment = infinite_zeta ? kInf : moment_sum / static_cast<double>(sample_count);
  report.dominance_ratio = moment_sum > 0 ? largest_term / moment_sum : 0.0;
  report.a2_stable = !infinite_zeta && report.dominance_ratio < 0.5;
  report.a2_pass = report.a2_stable && std::isfinite(report.a2_moment);
  if (infinite_zeta) report.notes.emplace_back("zeta(a) infinite for some draws");
  if (!report.a2_stable && !infinite_zeta)
    report.notes.emplace_back("log-moment estimate dominated by its largest summand");

  if (!report.degenerate) {
    const auto& mean = report.increment_mean;
    if (alpha == 2.0) {
      const bool centred = std::abs(mean.value) <= 3.0 * mean.std_error;
      const bool light_tail = report.tail.index > 2.0;
      report.a1_pass = centred && light_tail;
      if (!centred) report.notes.emplace_back("increment mean differs from 0 by more than 3 SE");
      if (!light_tail) report.notes.emplace_back("tail index estimate <= 2 for alpha = 2");
    } else {
      const double tolerance = std::max(0.2, 2.0 * report.tail.std_error);
      report.a1_pass = std::abs(report.tail.index - alpha) <= tolerance;
      if (!report.a1_pass)
        report.notes.emplace_back("tail index estimate inconsistent with alpha");
    }
  }
  report.passed = report.a1_pass && report.a2_pass;
  return report;
}

}  // namespace bpre
