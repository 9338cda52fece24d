#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlspec/errors.hpp"
#include "nlspec/parallel.hpp"
#include "nlspec/rng.hpp"
#include "nlspec/spectral.hpp"
#include "nlspec/stats.hpp"

namespace nlspec::bootstrap {

enum class Variant { residual, exponential };

inline const char* to_string(Variant v) noexcept {
  return v == Variant::residual ? "residual" : "exponential";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "residual") return Variant::residual;
  if (s == "exponential") return Variant::exponential;
  throw ConfigError("unknown bootstrap variant '" + s + "' (expected residual or exponential)");
}

struct Config {
  Window window = window_profile(WindowKind::parzen);
  std::size_t bandwidth = 0;        // B_n
  std::size_t pilot_bandwidth = 0;  // B~_n, oversmoothed: B~_n < B_n
  Variant variant = Variant::residual;
  std::size_t n_boot = 400;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Checks the window constant and 1 <= B~_n < B_n < n.
  void validate(std::size_t n) const {
    if (!window.c2)
      throw WindowConditionError(std::string("bootstrap needs a locally quadratic window; ") +
                                 to_string(window.kind) + " has no c2 constant");
    if (!window.nonneg_spectral_window)
      throw ConfigError(std::string("bootstrap pilot needs a nonnegative spectral window; ") +
                        to_string(window.kind) + " can go negative");
    if (pilot_bandwidth < 1) throw BandwidthError("pilot truncation lag must be >= 1");
    if (pilot_bandwidth >= bandwidth)
      throw BandwidthError("pilot must be smoother than the estimate: need B~_n (" +
                           std::to_string(pilot_bandwidth) + ") < B_n (" + std::to_string(bandwidth) + ")");
    check_bandwidth(bandwidth, n);
    if (n_boot < 1) throw ConfigError("n_boot must be >= 1");
  }
};

/// (B_n, B~_n) = (round(c n^{1/5}), round(c~ n^{0.15})), nudged so that
/// 1 <= B~_n < B_n.
inline std::pair<std::size_t, std::size_t> default_bandwidths(std::size_t n, double scale = 1.0,
                                                              double pilot_scale = 1.0) {
  if (n < 32) throw BandwidthError("default bandwidths need n >= 32");
  const double nd = static_cast<double>(n);
  auto bn = static_cast<std::size_t>(std::llround(scale * std::pow(nd, 0.2)));
  auto bp = static_cast<std::size_t>(std::llround(pilot_scale * std::pow(nd, 0.15)));
  bn = std::min(bn, n - 1);
  if (bp >= bn) bp = bn - 1;
  if (bp < 1 || bn < 2) throw BandwidthError("n = " + std::to_string(n) + " too small to separate B_n and B~_n");
  return {bn, bp};
}

/// Pilot spectrum: a lag-window estimate evaluated at the Fourier
/// frequencies omega_j, j = 0..floor(n/2), and anywhere else on demand.
class PilotEstimate {
public:
  PilotEstimate(std::span<const double> x, const Window& window, std::size_t bandwidth)
      : n_(x.size()),
        bandwidth_(bandwidth),
        sum_(make_sum(x, window, bandwidth)) {
    values_.resize(n_ / 2 + 1);
    for (std::size_t j = 0; j < values_.size(); ++j)
      values_[j] = std::max(0.0, sum_(kTwoPi * static_cast<double>(j) / static_cast<double>(n_)));
  }

  [[nodiscard]] double operator()(double lambda) const { return std::max(0.0, sum_(lambda)); }
  /// f~(omega_j), j = 0..floor(n/2).
  [[nodiscard]] const std::vector<double>& at_fourier() const noexcept { return values_; }
  [[nodiscard]] std::size_t bandwidth() const noexcept { return bandwidth_; }
  [[nodiscard]] std::size_t n() const noexcept { return n_; }

private:
  static LagWindowSum make_sum(std::span<const double> x, const Window& window, std::size_t bandwidth) {
    if (!window.nonneg_spectral_window)
      throw ConfigError(std::string(to_string(window.kind)) + " window can produce negative pilot values");
    check_bandwidth(bandwidth, x.size());
    return LagWindowSum(sample_acov_sequence(x, bandwidth), window, bandwidth);
  }

  std::size_t n_;
  std::size_t bandwidth_;
  LagWindowSum sum_;
  std::vector<double> values_;
};

inline PilotEstimate pilot_estimate(std::span<const double> x, const Window& window, std::size_t bandwidth) {
  return PilotEstimate(x, window, bandwidth);
}

/// Ratios I_j / f~_j for j = 1..N, N = floor(n/2), and the same ratios
/// divided by their mean.
struct ResidualSet {
  std::vector<double> raw;
  std::vector<double> rescaled;
};

/// Relative floor below which a pilot value counts as zero.
inline constexpr double kPilotFloor = 1e-12;

inline ResidualSet rescaled_residuals(const Periodogram& p, std::span<const double> pilot) {
  const std::size_t big_n = p.n / 2;
  if (p.grid_size != p.n) throw DomainError("residuals need the periodogram on the Fourier frequencies");
  if (pilot.size() < big_n + 1) throw DomainError("pilot must cover j = 0..floor(n/2)");
  if (big_n == 0) throw DomainError("no nonzero Fourier frequencies");
  const double top = *std::max_element(pilot.begin() + 1, pilot.begin() + static_cast<long>(big_n) + 1);
  const double floor = kPilotFloor * top;
  ResidualSet r;
  r.raw.resize(big_n);
  for (std::size_t j = 1; j <= big_n; ++j) {
    if (!(top > 0.0) || !(pilot[j] > floor))
      throw DegeneratePilot("pilot spectrum is (numerically) zero at omega_" + std::to_string(j));
    r.raw[j - 1] = p.ordinates[j] / pilot[j];
  }
  const double mean = stats::mean(r.raw);
  if (!(mean > 0.0)) throw DegeneratePilot("all periodogram ordinates are zero");
  r.rescaled.resize(big_n);
  for (std::size_t j = 0; j < big_n; ++j) r.rescaled[j] = r.raw[j] / mean;
  return r;
}

/// One bootstrap periodogram on the Fourier grid of the original sample:
/// I*_0 = 0, I*_j = f~_j eps*_j for j = 1..N, I*_{-j} = I*_j.
inline Periodogram resample_periodogram(std::size_t n, std::span<const double> pilot, const ResidualSet& residuals,
                                        Variant variant, Rng& rng) {
  const std::size_t big_n = n / 2;
  if (pilot.size() < big_n + 1) throw DomainError("pilot must cover j = 0..floor(n/2)");
  Periodogram out{n, n, std::vector<double>(big_n + 1, 0.0)};
  if (variant == Variant::residual) {
    if (residuals.rescaled.empty()) throw DomainError("residual bootstrap needs a nonempty residual set");
    std::uniform_int_distribution<std::size_t> pick(0, residuals.rescaled.size() - 1);
    for (std::size_t j = 1; j <= big_n; ++j) out.ordinates[j] = pilot[j] * residuals.rescaled[pick(rng)];
  } else {
    std::exponential_distribution<double> unit(1.0);
    for (std::size_t j = 1; j <= big_n; ++j) out.ordinates[j] = pilot[j] * unit(rng);
  }
  return out;
}

struct Diagnostics {
  double residual_mean = 0.0;
  double residual_variance = 0.0;
  double residual_fourth_moment = 0.0;
};

/// Bootstrap law of g*_n(lambda) = sqrt(n b_n){f*_n(lambda) - f~(lambda)}.
struct Distribution {
  std::vector<double> samples;
  double lambda = 0.0;
  double pilot_at_lambda = 0.0;
  Config config;
  std::size_t n = 0;
  Diagnostics diagnostics;

  /// sqrt(n b_n).
  [[nodiscard]] double scale() const noexcept {
    return std::sqrt(static_cast<double>(n) / static_cast<double>(config.bandwidth));
  }
};

inline Diagnostics residual_diagnostics(const ResidualSet& r) {
  Diagnostics d;
  d.residual_mean = stats::mean(r.rescaled);
  d.residual_variance = r.rescaled.size() > 1 ? stats::variance(r.rescaled) : 0.0;
  stats::CompensatedSum s;
  for (double v : r.rescaled) s.add(std::pow(v - d.residual_mean, 4));
  d.residual_fourth_moment = s.value() / static_cast<double>(r.rescaled.size());
  return d;
}

/// Full procedure on one sample: periodogram, pilot, rescaled residuals,
/// n_boot resampled periodograms each smoothed back to f*_n(lambda).
/// Replicate i draws from Rng::stream(seed, i).
inline Distribution bootstrap_distribution(std::span<const double> x, const Config& config, double lambda) {
  config.validate(x.size());
  if (!(lambda >= 0.0 && lambda <= std::numbers::pi)) throw DomainError("lambda must lie in [0, pi]");
  const std::size_t n = x.size();
  const Periodogram pgram = periodogram(x);
  const PilotEstimate pilot(x, config.window, config.pilot_bandwidth);
  const ResidualSet residuals = rescaled_residuals(pgram, pilot.at_fourier());
  const PeriodogramSmoother smoother(n, n, config.window, config.bandwidth, lambda);

  Distribution dist;
  dist.lambda = lambda;
  dist.pilot_at_lambda = pilot(lambda);
  dist.config = config;
  dist.n = n;
  dist.diagnostics = residual_diagnostics(residuals);
  dist.samples.resize(config.n_boot);
  const double scale = dist.scale();
  parallel_for(config.n_boot, config.threads, [&](std::size_t i) {
    Rng rng = Rng::stream(config.seed, i);
    const Periodogram star = resample_periodogram(n, pilot.at_fourier(), residuals, config.variant, rng);
    dist.samples[i] = scale * (smoother(star.ordinates) - dist.pilot_at_lambda);
  });
  return dist;
}

/// Mallows d2 (L2 Wasserstein) distance between two empirical laws: the L2
/// distance of their quantile functions, integrated over the merged grid of
/// jump points. For equal sizes this is the RMS of sorted differences.
inline double mallows_d2(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("mallows_d2 needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  // Walk u in (0, 1] through breakpoints i/na and j/nb using integer
  // arithmetic on the common denominator na*nb.
  std::size_t i = 0, j = 0;
  std::size_t u = 0;  // current position times na*nb
  stats::CompensatedSum acc;
  while (i < na && j < nb) {
    const std::size_t next_a = (i + 1) * nb;
    const std::size_t next_b = (j + 1) * na;
    const std::size_t next = std::min(next_a, next_b);
    const double diff = a[i] - b[j];
    acc.add(diff * diff * static_cast<double>(next - u));
    u = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return std::sqrt(acc.value() / (static_cast<double>(na) * static_cast<double>(nb)));
}

} // namespace nlspec::bootstrap
