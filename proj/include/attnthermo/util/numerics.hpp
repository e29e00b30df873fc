#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace thermo::util {

// log(sum_i exp(x_i)) with max subtraction.
inline double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;  // all -inf, or a stray inf propagates
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

// Weighted second central moment: sum_i w_i x_i^2 - (sum_i w_i x_i)^2.
// Weights are assumed to sum to 1. This is the single variance kernel shared
// by the equilibrium observables and the Langevin windowed estimator; tiny
// negative results from cancellation are clamped to zero.
inline double weighted_variance(std::span<const double> x,
                                std::span<const double> w) {
  if (x.size() != w.size())
    throw std::invalid_argument("weighted_variance: size mismatch");
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m1 += w[i] * x[i];
    m2 += w[i] * x[i] * x[i];
  }
  return std::max(0.0, m2 - m1 * m1);
}

// Population variance: the same kernel with uniform weights 1/n, so the
// ensemble estimator and the rho-weighted observable share one code path.
inline double population_variance(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("population_variance: empty");
  const std::vector<double> w(x.size(), 1.0 / static_cast<double>(x.size()));
  return weighted_variance(x, w);
}

inline double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean: empty");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

// Sample standard deviation (n-1 denominator).
inline double sample_stddev(std::span<const double> x) {
  if (x.size() < 2) throw std::invalid_argument("sample_stddev: need n >= 2");
  const double mu = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

inline double median(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("median: empty");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return (n % 2 == 1) ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

// Centered moving average; window is clipped at the series boundaries so the
// output has the same length as the input.
inline std::vector<double> moving_average(std::span<const double> x,
                                          int window) {
  if (window < 1) throw std::invalid_argument("moving_average: window < 1");
  const int n = static_cast<int>(x.size());
  std::vector<double> out(x.size());
  const int half = window / 2;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (int j = lo; j <= hi; ++j) s += x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

// Shannon entropy in nats with the 0*log(0) := 0 convention.
inline double shannon_entropy(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) {
    if (v > 0.0) s -= v * std::log(v);
  }
  return std::max(0.0, s);
}

struct OlsFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
};

// Ordinary (optionally weighted) least squares of y on x. R^2 is defined as 1
// when the (weighted) total sum of squares vanishes.
inline OlsFit least_squares(std::span<const double> x,
                            std::span<const double> y,
                            std::span<const double> weights = {}) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("least_squares: need >= 2 matching points");
  std::vector<double> w(x.size(), 1.0);
  if (!weights.empty()) {
    if (weights.size() != x.size())
      throw std::invalid_argument("least_squares: weight size mismatch");
    w.assign(weights.begin(), weights.end());
  }
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("least_squares: degenerate x");
  OlsFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += w[i] * e * e;
    ss_tot += w[i] * (y[i] - my) * (y[i] - my);
  }
  fit.r_squared = (ss_tot == 0.0) ? 1.0 : 1.0 - ss_res / ss_tot;
  fit.r_squared = std::clamp(fit.r_squared, 0.0, 1.0);
  return fit;
}

}  // namespace thermo::util
