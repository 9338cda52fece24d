#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "nlspec/errors.hpp"

namespace nlspec::stats {

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  [[nodiscard]] double value() const noexcept { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double mean(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean of empty sample");
  CompensatedSum s;
  for (double v : x) s.add(v);
  return s.value() / static_cast<double>(x.size());
}

/// Unbiased sample variance (divisor n - 1).
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("variance needs at least two values");
  const double m = mean(x);
  CompensatedSum s;
  for (double v : x) s.add((v - m) * (v - m));
  return s.value() / static_cast<double>(x.size() - 1);
}

inline double standard_error(std::span<const double> x) {
  return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

inline double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("correlation needs two samples of equal size >= 2");
  const double mx = mean(x);
  const double my = mean(y);
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy.add((x[i] - mx) * (y[i] - my));
    sxx.add((x[i] - mx) * (x[i] - mx));
    syy.add((y[i] - my) * (y[i] - my));
  }
  return sxy.value() / std::sqrt(sxx.value() * syy.value());
}

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::vector<double> x, double p) {
  if (x.empty()) throw DomainError("quantile of empty sample");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

inline double normal_cdf(double x) noexcept {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

inline double exponential_cdf(double x) noexcept {
  return x <= 0.0 ? 0.0 : -std::expm1(-x);
}

/// One-sample Kolmogorov-Smirnov distance sup |F_m - F| for a continuous cdf.
template <class Cdf>
double ks_distance(std::vector<double> sample, Cdf&& cdf) {
  if (sample.empty()) throw DomainError("KS distance of empty sample");
  std::sort(sample.begin(), sample.end());
  const double m = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    const double above = static_cast<double>(i + 1) / m - f;
    const double below = f - static_cast<double>(i) / m;
    d = std::max({d, above, below});
  }
  return d;
}

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DomainError("linear fit needs at least two points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DomainError("linear fit with constant abscissa");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

} // namespace nlspec::stats
