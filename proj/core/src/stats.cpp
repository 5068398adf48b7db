#include "bpre/stats.hpp"

#include <stdexcept>

namespace bpre {

LineFit fit_line(std::span<const double> x, std::span<const double> y,
                 std::span<const double> weights) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need at least two (x, y) pairs");
  if (!weights.empty() && weights.size() != x.size())
    throw std::invalid_argument("fit_line: weight count mismatch");

  const bool weighted = !weights.empty();
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? weights[i] : 1.0;
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
  }
  const double mx = sx / sw;
  const double my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weighted ? weights[i] : 1.0;
    sxx += w * (x[i] - mx) * (x[i] - mx);
    sxy += w * (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0) throw std::invalid_argument("fit_line: degenerate abscissae");

  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;

  double scale = 1.0;
  if (!weighted) {
    if (x.size() > 2) {
      double rss = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += r * r;
      }
      scale = rss / static_cast<double>(x.size() - 2);
    } else {
      scale = 0.0;
    }
  }
  fit.slope_stderr = std::sqrt(scale / sxx);
  fit.intercept_stderr = std::sqrt(scale * (1.0 / sw + mx * mx / sxx));
  return fit;
}

}  // namespace bpre
