#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nlspec/errors.hpp"
#include "nlspec/stats.hpp"

namespace nlspec {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// S_n(theta) = sum_{k=1}^n X_k e^{ik theta}, direct compensated sum.
inline std::complex<double> fourier_transform(std::span<const double> x, double theta) {
  stats::CompensatedSum re, im;
  for (std::size_t k = 1; k <= x.size(); ++k) {
    const double angle = static_cast<double>(k) * theta;
    re.add(x[k - 1] * std::cos(angle));
    im.add(x[k - 1] * std::sin(angle));
  }
  return {re.value(), im.value()};
}

/// Periodogram ordinates I(omega_j) = |S_n(omega_j)|^2 / (2 pi n) on the grid
/// omega_j = 2 pi j / grid_size, stored for j = 0..floor(grid_size/2).
///
/// grid_size == n gives the Fourier frequencies. On that grid the inverse
/// transform returns circular autocovariances r(k) + r(n - k); a grid of
/// size >= 2n - 1 (see `padded`) inverts to r(k) exactly.
struct Periodogram {
  std::size_t n = 0;
  std::size_t grid_size = 0;
  std::vector<double> ordinates;

  [[nodiscard]] double frequency(long j) const noexcept {
    return kTwoPi * static_cast<double>(j) / static_cast<double>(grid_size);
  }
  /// Ordinate at index j of the symmetric index set, I_{-j} = I_j.
  [[nodiscard]] double at(long j) const { return ordinates.at(static_cast<std::size_t>(std::labs(j))); }
  [[nodiscard]] long lowest_index() const noexcept {
    return -static_cast<long>((grid_size - 1) / 2);
  }
  [[nodiscard]] long highest_index() const noexcept { return static_cast<long>(grid_size / 2); }
  /// Number of ordinates strictly inside (0, pi): floor((grid-1)/2).
  [[nodiscard]] std::size_t interior_count() const noexcept { return (grid_size - 1) / 2; }
};

namespace detail {

/// Ordinates j = 0..grid/2 via a twiddle table, no trig in the inner loop.
inline std::vector<double> periodogram_ordinates(std::span<const double> x, std::size_t grid) {
  const std::size_t n = x.size();
  std::vector<double> cos_t(grid), sin_t(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const double angle = kTwoPi * static_cast<double>(i) / static_cast<double>(grid);
    cos_t[i] = std::cos(angle);
    sin_t[i] = std::sin(angle);
  }
  std::vector<double> out(grid / 2 + 1);
  const double norm = 1.0 / (kTwoPi * static_cast<double>(n));
  for (std::size_t j = 0; j < out.size(); ++j) {
    stats::CompensatedSum re, im;
    std::size_t phase = j % grid;  // (j * k) mod grid for k = 1
    for (std::size_t k = 1; k <= n; ++k) {
      re.add(x[k - 1] * cos_t[phase]);
      im.add(x[k - 1] * sin_t[phase]);
      phase += j;
      if (phase >= grid) phase -= grid;
    }
    const double a = re.value();
    const double b = im.value();
    out[j] = (a * a + b * b) * norm;
  }
  return out;
}

} // namespace detail

/// Periodogram at the Fourier frequencies 2 pi j / n.
inline Periodogram periodogram(std::span<const double> x) {
  if (x.size() < 2) throw DomainError("periodogram requires n >= 2");
  return {x.size(), x.size(), detail::periodogram_ordinates(x, x.size())};
}

/// Periodogram on a grid of size `grid_size` (the series is zero padded).
inline Periodogram periodogram(std::span<const double> x, std::size_t grid_size) {
  if (x.size() < 2) throw DomainError("periodogram requires n >= 2");
  if (grid_size < x.size()) throw DomainError("periodogram grid must be at least n");
  return {x.size(), grid_size, detail::periodogram_ordinates(x, grid_size)};
}

/// Periodogram on the 2n grid, whose inverse transform is the sample
/// autocovariance itself.
inline Periodogram padded_periodogram(std::span<const double> x) {
  return periodogram(x, 2 * x.size());
}

/// (2 pi / grid) sum_{j in F} I_j e^{ik omega_j} (real by symmetry).
inline double periodogram_inverse(const Periodogram& p, long k) {
  stats::CompensatedSum s;
  for (long j = p.lowest_index(); j <= p.highest_index(); ++j)
    s.add(p.at(j) * std::cos(static_cast<double>(k) * p.frequency(j)));
  return kTwoPi / static_cast<double>(p.grid_size) * s.value();
}

/// r_hat(k) = n^{-1} sum_{j=1}^{n-|k|} X_j X_{j+|k|}.
inline double sample_acov(std::span<const double> x, long k) {
  const std::size_t lag = static_cast<std::size_t>(std::labs(k));
  if (lag >= x.size())
    throw DomainError("lag " + std::to_string(k) + " out of range for n = " + std::to_string(x.size()));
  stats::CompensatedSum s;
  for (std::size_t j = 0; j + lag < x.size(); ++j) s.add(x[j] * x[j + lag]);
  return s.value() / static_cast<double>(x.size());
}

/// r_hat(0..max_lag).
inline std::vector<double> sample_acov_sequence(std::span<const double> x, std::size_t max_lag) {
  if (max_lag >= x.size()) throw DomainError("max lag must be < n");
  std::vector<double> r(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) r[k] = sample_acov(x, static_cast<long>(k));
  return r;
}

enum class WindowKind { parzen, tukey_hanning, bartlett };

inline const char* to_string(WindowKind k) noexcept {
  switch (k) {
    case WindowKind::parzen: return "parzen";
    case WindowKind::tukey_hanning: return "tukey-hanning";
    case WindowKind::bartlett: return "bartlett";
  }
  return "?";
}

inline WindowKind parse_window_kind(const std::string& name) {
  if (name == "parzen") return WindowKind::parzen;
  if (name == "tukey-hanning" || name == "tukey_hanning") return WindowKind::tukey_hanning;
  if (name == "bartlett") return WindowKind::bartlett;
  throw DomainError("unknown window '" + name + "' (expected parzen, tukey-hanning or bartlett)");
}

/// Lag window a(t): even, a(0) = 1, supported on [-1, 1].
struct Window {
  WindowKind kind = WindowKind::parzen;
  /// lim x^{-2}(1 - a(x)); empty when 1 - a is not locally quadratic.
  std::optional<double> c2;
  /// Integral of a^2 over [-1, 1].
  double sq_integral = 0.0;
  /// The induced spectral window sum_k a(k/B) e^{-ik lambda} is >= 0.
  bool nonneg_spectral_window = false;

  [[nodiscard]] double operator()(double t) const noexcept {
    const double x = std::abs(t);
    if (x > 1.0) return 0.0;
    switch (kind) {
      case WindowKind::parzen:
        return x <= 0.5 ? 1.0 - 6.0 * x * x + 6.0 * x * x * x : 2.0 * (1.0 - x) * (1.0 - x) * (1.0 - x);
      case WindowKind::tukey_hanning:
        return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
      case WindowKind::bartlett:
        return 1.0 - x;
    }
    return 0.0;
  }
};

inline Window window_profile(WindowKind kind) {
  switch (kind) {
    case WindowKind::parzen:
      return {kind, 6.0, 151.0 / 280.0, true};
    case WindowKind::tukey_hanning:
      return {kind, std::numbers::pi * std::numbers::pi / 4.0, 0.75, false};
    case WindowKind::bartlett:
      // Fejer kernel is nonnegative, but 1 - a(x) = |x| is not quadratic.
      return {kind, std::nullopt, 2.0 / 3.0, true};
  }
  throw DomainError("unknown window kind");
}

inline Window window_profile(const std::string& name) { return window_profile(parse_window_kind(name)); }

/// 257 equispaced points on [0, pi] by default.
inline std::vector<double> frequency_grid(std::size_t points = 257) {
  if (points < 2) throw DomainError("frequency grid needs at least two points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i)
    g[i] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(points - 1);
  g.back() = std::numbers::pi;
  return g;
}

struct SpectralEstimate {
  std::vector<double> lambdas;
  std::vector<double> values;
  std::size_t bandwidth = 0;  // B_n
  Window window;
  std::size_t n = 0;
};

inline void check_bandwidth(std::size_t bandwidth, std::size_t n) {
  if (bandwidth < 1) throw BandwidthError("truncation lag B_n must be >= 1");
  if (bandwidth >= n)
    throw BandwidthError("truncation lag B_n = " + std::to_string(bandwidth) + " must be < n = " +
                         std::to_string(n));
}

/// Lag-window smoother over a precomputed autocovariance sequence:
/// f(lambda) = (1/2pi)[w_0 + 2 sum_{k=1}^B w_k cos(k lambda)],
/// w_k = a(k/B) r(k).
class LagWindowSum {
public:
  LagWindowSum(std::span<const double> acov, const Window& window, std::size_t bandwidth)
      : weights_(bandwidth + 1) {
    if (acov.size() < bandwidth + 1) throw DomainError("autocovariance sequence shorter than B_n + 1");
    const double b = 1.0 / static_cast<double>(bandwidth);
    for (std::size_t k = 0; k <= bandwidth; ++k) weights_[k] = window(static_cast<double>(k) * b) * acov[k];
  }

  [[nodiscard]] double operator()(double lambda) const {
    stats::CompensatedSum s;
    s.add(weights_[0]);
    for (std::size_t k = 1; k < weights_.size(); ++k)
      s.add(2.0 * weights_[k] * std::cos(static_cast<double>(k) * lambda));
    return s.value() / kTwoPi;
  }

  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }

private:
  std::vector<double> weights_;
};

/// Lag-window estimate f_n(lambda) = (1/2pi) sum_{|k|<=B} r_hat(k) a(k/B) e^{-ik lambda}.
inline SpectralEstimate lag_window_estimate(std::span<const double> x, const Window& window,
                                            std::size_t bandwidth, std::span<const double> lambdas) {
  check_bandwidth(bandwidth, x.size());
  const LagWindowSum f(sample_acov_sequence(x, bandwidth), window, bandwidth);
  SpectralEstimate est{{lambdas.begin(), lambdas.end()}, {}, bandwidth, window, x.size()};
  est.values.reserve(lambdas.size());
  for (double l : lambdas) est.values.push_back(f(l));
  return est;
}

/// Kernel K(u) = sum_{|k|<=B} a(k/B) e^{-iku}.
inline double lag_window_kernel(const Window& window, std::size_t bandwidth, double u) {
  const double b = 1.0 / static_cast<double>(bandwidth);
  stats::CompensatedSum s;
  s.add(window(0.0));
  for (std::size_t k = 1; k <= bandwidth; ++k)
    s.add(2.0 * window(static_cast<double>(k) * b) * std::cos(static_cast<double>(k) * u));
  return s.value();
}

/// Smoothed-periodogram form of the lag-window estimate at one frequency:
/// f(lambda) = (1/grid) sum_{j in F} I_j K(lambda - omega_j).
///
/// Kernel values are precomputed per |j| so the smoother can be applied to
/// many ordinate sets on the same grid (the bootstrap does this).
class PeriodogramSmoother {
public:
  PeriodogramSmoother(std::size_t n, std::size_t grid_size, const Window& window, std::size_t bandwidth,
                      double lambda)
      : grid_size_(grid_size), weights_(grid_size / 2 + 1, 0.0) {
    check_bandwidth(bandwidth, n);
    const long lo = -static_cast<long>((grid_size - 1) / 2);
    const long hi = static_cast<long>(grid_size / 2);
    for (long j = lo; j <= hi; ++j) {
      const double omega = kTwoPi * static_cast<double>(j) / static_cast<double>(grid_size);
      weights_[static_cast<std::size_t>(std::labs(j))] += lag_window_kernel(window, bandwidth, lambda - omega);
    }
  }

  /// Applies the smoother to ordinates I_0..I_{grid/2}.
  [[nodiscard]] double operator()(std::span<const double> ordinates) const {
    if (ordinates.size() != weights_.size()) throw DomainError("ordinate count does not match smoother grid");
    stats::CompensatedSum s;
    for (std::size_t j = 0; j < weights_.size(); ++j) s.add(ordinates[j] * weights_[j]);
    return s.value() / static_cast<double>(grid_size_);
  }

  [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }

private:
  std::size_t grid_size_;
  std::vector<double> weights_;
};

/// Smoothed-periodogram estimate from ordinates. Equals the
/// lag-window estimate exactly when the periodogram grid is >= 2n - 1.
inline double estimate_from_periodogram(const Periodogram& p, const Window& window, std::size_t bandwidth,
                                        double lambda) {
  return PeriodogramSmoother(p.n, p.grid_size, window, bandwidth, lambda)(p.ordinates);
}

/// True when lambda is a multiple of pi (2 lambda a multiple of 2 pi).
inline bool is_multiple_of_pi(double lambda) noexcept {
  return std::abs(std::remainder(lambda, std::numbers::pi)) < 1e-12;
}

/// sigma^2(lambda) = {1 + eta(2 lambda)} f^2(lambda) int a^2.
inline double asymptotic_variance(double f_val, double lambda, const Window& window) {
  if (!(f_val > 0.0)) throw DomainError("asymptotic variance needs f(lambda) > 0");
  const double eta = is_multiple_of_pi(lambda) ? 1.0 : 0.0;
  return (1.0 + eta) * f_val * f_val * window.sq_integral;
}

/// f''(lambda) = -(1/2pi) sum_k r(k) k^2 e^{-ik lambda} from r(0..K).
inline double spectral_second_derivative(std::span<const double> acov, double lambda) {
  stats::CompensatedSum s;
  for (std::size_t k = 1; k < acov.size(); ++k) {
    const double kd = static_cast<double>(k);
    s.add(2.0 * acov[k] * kd * kd * std::cos(kd * lambda));
  }
  return -s.value() / kTwoPi;
}

/// Leading bias c2 f''(lambda) / B_n^2 of the lag-window estimate.
inline double asymptotic_bias(double f_dd, std::size_t bandwidth, const Window& window) {
  if (!window.c2)
    throw WindowConditionError(std::string(to_string(window.kind)) +
                               " window is not locally quadratic at 0 (no c2 constant)");
  if (bandwidth < 1) throw BandwidthError("truncation lag B_n must be >= 1");
  const double b = static_cast<double>(bandwidth);
  return *window.c2 * f_dd / (b * b);
}

using SpectrumFn = std::function<double(double)>;

/// KS distance between the empirical law of I(theta_j)/f(theta_j),
/// j = 1..floor((n-1)/2), and the standard exponential law.
inline double normalized_periodogram_ks(std::span<const double> x, const SpectrumFn& f_ref) {
  if (x.size() < 2) throw DomainError("series too short");
  const Periodogram p = periodogram(x);
  const std::size_t m = p.interior_count();
  if (m == 0) throw DomainError("no interior Fourier frequencies (n <= 2)");
  std::vector<double> ratios(m);
  for (std::size_t j = 1; j <= m; ++j) {
    const double f = f_ref(p.frequency(static_cast<long>(j)));
    if (!(f > 0.0)) throw DomainError("reference spectrum must be > 0 at every Fourier frequency");
    ratios[j - 1] = p.ordinates[j] / f;
  }
  return stats::ks_distance(std::move(ratios), stats::exponential_cdf);
}

} // namespace nlspec
