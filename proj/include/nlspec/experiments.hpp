#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nlspec/bootstrap.hpp"
#include "nlspec/errors.hpp"
#include "nlspec/models.hpp"
#include "nlspec/parallel.hpp"
#include "nlspec/rng.hpp"
#include "nlspec/spectral.hpp"
#include "nlspec/stats.hpp"

namespace nlspec::experiments {

enum class Kind { fourier_clt, ecdf_exp, density_clt, joint_indep, max_dev, bootstrap_consistency, bias_exact };

inline constexpr Kind kAllKinds[] = {Kind::fourier_clt, Kind::ecdf_exp,  Kind::density_clt,
                                     Kind::joint_indep, Kind::max_dev,   Kind::bootstrap_consistency,
                                     Kind::bias_exact};

inline const char* to_string(Kind k) noexcept {
  switch (k) {
    case Kind::fourier_clt: return "fourier-clt";
    case Kind::ecdf_exp: return "ecdf-exp";
    case Kind::density_clt: return "density-clt";
    case Kind::joint_indep: return "joint-indep";
    case Kind::max_dev: return "max-dev";
    case Kind::bootstrap_consistency: return "bootstrap-consistency";
    case Kind::bias_exact: return "bias-exact";
  }
  return "?";
}

inline std::string kind_list() {
  std::string s;
  for (Kind k : kAllKinds) {
    if (!s.empty()) s += ", ";
    s += to_string(k);
  }
  return s;
}

inline Kind parse_kind(const std::string& name) {
  for (Kind k : kAllKinds)
    if (name == to_string(k)) return k;
  throw ConfigError("unknown experiment kind '" + name + "' (valid kinds: " + kind_list() + ")");
}

/// Derived seed for replicate `index` of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return Rng::stream(seed, index)();
}

// Index ranges for derived seeds, kept apart so auxiliary draws never reuse a
// replicate stream.
inline constexpr std::uint64_t kAuxStreams = 1ULL << 48;
inline constexpr std::uint64_t kOracleStreams = 1ULL << 50;

/// Monte Carlo reference spectrum for families without a closed form.
struct OracleSettings {
  std::size_t n = 1 << 16;
  std::size_t reps = 8;
  std::size_t bandwidth = 64;
  double budget = 1e9;  // max reps * n
};

struct OracleSpectrum {
  std::vector<double> lambdas;
  std::vector<double> values;
  std::vector<double> standard_errors;
  std::vector<double> mean_acov;  // r(0..B) averaged over runs
  Window window;
  std::size_t bandwidth = 0;

  [[nodiscard]] double operator()(double lambda) const {
    return std::max(0.0, LagWindowSum(mean_acov, window, bandwidth)(lambda));
  }
  [[nodiscard]] SpectrumFn evaluator() const {
    auto sum = std::make_shared<LagWindowSum>(mean_acov, window, bandwidth);
    return [sum](double l) { return std::max(0.0, (*sum)(l)); };
  }
};

/// Averages Parzen lag-window estimates over independent long runs. The
/// average of estimates is itself a lag-window sum over the averaged
/// autocovariances, which gives the evaluator.
inline OracleSpectrum oracle_spectrum(const ModelSpec& spec, std::span<const double> lambdas,
                                      const OracleSettings& settings, std::uint64_t seed,
                                      unsigned threads = 1, std::size_t burn_in = kDefaultBurnIn) {
  if (settings.reps < 2) throw DomainError("oracle spectrum needs reps >= 2");
  if (static_cast<double>(settings.reps) * static_cast<double>(settings.n) > settings.budget)
    throw SizeError("oracle spectrum budget exceeded: reps * n_oracle = " +
                    std::to_string(settings.reps * settings.n) + " > " + std::to_string(settings.budget));
  check_bandwidth(settings.bandwidth, settings.n);
  const Window window = window_profile(WindowKind::parzen);
  std::vector<std::vector<double>> acov(settings.reps);
  parallel_for(settings.reps, threads, [&](std::size_t r) {
    const TimeSeries x = simulate(spec, settings.n, burn_in, derive_seed(seed, kOracleStreams + r));
    acov[r] = sample_acov_sequence(x, settings.bandwidth);
  });
  OracleSpectrum out;
  out.lambdas.assign(lambdas.begin(), lambdas.end());
  out.window = window;
  out.bandwidth = settings.bandwidth;
  out.mean_acov.assign(settings.bandwidth + 1, 0.0);
  for (std::size_t k = 0; k <= settings.bandwidth; ++k) {
    stats::CompensatedSum s;
    for (const auto& a : acov) s.add(a[k]);
    out.mean_acov[k] = s.value() / static_cast<double>(settings.reps);
  }
  std::vector<double> per_run(settings.reps);
  for (double l : lambdas) {
    for (std::size_t r = 0; r < settings.reps; ++r) per_run[r] = LagWindowSum(acov[r], window, settings.bandwidth)(l);
    out.values.push_back(stats::mean(per_run));
    out.standard_errors.push_back(stats::standard_error(per_run));
  }
  return out;
}

/// Either the closed-form spectrum or a Monte Carlo oracle.
struct ReferenceSpectrum {
  SpectrumFn f;
  bool closed_form = true;
};

inline ReferenceSpectrum reference_spectrum(const ModelSpec& spec, const OracleSettings& oracle,
                                            std::uint64_t seed, unsigned threads, std::size_t burn_in) {
  try {
    (void)theoretical_spectrum(spec, 0.0);
    return {[spec](double l) { return theoretical_spectrum(spec, l); }, true};
  } catch (const UnsupportedFamily&) {
    const OracleSpectrum o = oracle_spectrum(spec, std::vector<double>{}, oracle, seed, threads, burn_in);
    return {o.evaluator(), false};
  }
}

struct ExperimentConfig {
  Kind kind = Kind::density_clt;
  ModelSpec spec = family::Iid{};
  std::vector<std::size_t> n_list{1024};
  std::size_t reps = 100;
  Window window = window_profile(WindowKind::parzen);
  /// Explicit B_n per entry of n_list (bias-exact: the list of B_n to scan).
  std::vector<std::size_t> bandwidths;
  /// Otherwise B_n = round(bandwidth_scale * n^bandwidth_exponent).
  double bandwidth_scale = 1.0;
  double bandwidth_exponent = 0.2;
  std::vector<double> lambdas;
  std::size_t grid_points = 257;

  // fourier-clt
  std::size_t p = 2;
  std::size_t draws = 5;

  // bootstrap-consistency
  std::vector<std::size_t> pilot_bandwidths;
  double pilot_scale = 1.0;
  bootstrap::Variant variant = bootstrap::Variant::residual;
  std::size_t n_boot = 400;
  std::size_t repetitions = 10;
  std::size_t min_wins = 8;
  /// Compare g_n / f with g*_n / f~ instead of the raw statistics.
  bool normalized = false;

  // bias-exact: truncation of r(k) used for f''
  std::size_t acov_truncation = 4000;

  std::map<std::string, double> thresholds;
  OracleSettings oracle;
  std::size_t burn_in = kDefaultBurnIn;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Defaults matching the desk-scale runs for each kind.
  static ExperimentConfig defaults(Kind kind);

  [[nodiscard]] double threshold(const std::string& name) const;
  [[nodiscard]] std::size_t bandwidth_for(std::size_t i) const;
};

inline std::map<std::string, double> default_thresholds(Kind kind) {
  switch (kind) {
    case Kind::fourier_clt: return {{"ks_max", 0.06}};
    case Kind::ecdf_exp: return {{"ks_median", 0.05}};
    case Kind::density_clt: return {{"variance_tol", 0.25}, {"variance_tol_boundary", 0.30}, {"ks_max", 0.07}};
    case Kind::joint_indep: return {{"corr_max", 0.15}};
    case Kind::max_dev: return {{"ratio_max", 1.3}};
    case Kind::bootstrap_consistency: return {{"variance_tol", 0.30}};
    case Kind::bias_exact: return {{"ratio_tol", 0.15}};
  }
  return {};
}

inline ExperimentConfig ExperimentConfig::defaults(Kind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.thresholds = default_thresholds(kind);
  constexpr double pi = std::numbers::pi;
  switch (kind) {
    case Kind::fourier_clt:
      c.n_list = {1024};
      c.reps = 1000;
      break;
    case Kind::ecdf_exp:
      c.n_list = {4096};
      c.reps = 20;
      break;
    case Kind::density_clt:
      c.n_list = {1 << 14};
      c.bandwidths = {32};
      c.reps = 400;
      c.lambdas = {pi / 2, 0.0};
      break;
    case Kind::joint_indep:
      c.n_list = {1 << 14};
      c.bandwidths = {32};
      c.reps = 400;
      c.lambdas = {pi / 4, 3 * pi / 4};
      break;
    case Kind::max_dev:
      c.n_list = {1 << 12, 1 << 14, 1 << 16};
      c.bandwidth_exponent = 0.3;
      c.reps = 100;
      break;
    case Kind::bootstrap_consistency:
      c.spec = family::Ar{{0.5}, InnovationSpec::gaussian()};
      c.n_list = {512, 2048};
      c.reps = 3000;
      c.n_boot = 3000;
      c.bandwidth_scale = 2.0;
      c.pilot_scale = 1.75;
      c.lambdas = {pi / 2};
      break;
    case Kind::bias_exact:
      c.spec = family::Ar{{0.5}, InnovationSpec::gaussian()};
      c.n_list = {1 << 15};
      c.bandwidths = {8, 16, 32};
      c.lambdas = {pi / 3};
      break;
  }
  return c;
}

inline double ExperimentConfig::threshold(const std::string& name) const {
  if (auto it = thresholds.find(name); it != thresholds.end()) return it->second;
  const auto d = default_thresholds(kind);
  if (auto it = d.find(name); it != d.end()) return it->second;
  throw ConfigError(std::string("threshold '") + name + "' is not defined for " + to_string(kind));
}

inline std::size_t ExperimentConfig::bandwidth_for(std::size_t i) const {
  if (!bandwidths.empty()) {
    if (bandwidths.size() == 1) return bandwidths.front();
    if (bandwidths.size() != n_list.size()) throw ConfigError("bandwidths must have one entry or one per n");
    return bandwidths[i];
  }
  const double b = bandwidth_scale * std::pow(static_cast<double>(n_list.at(i)), bandwidth_exponent);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(b)));
}

struct Statistic {
  std::string name;
  double value = 0.0;
  double standard_error = std::numeric_limits<double>::quiet_NaN();
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ExperimentReport {
  Kind kind = Kind::density_clt;
  std::vector<Statistic> statistics;
  std::vector<Table> tables;
  std::map<std::string, std::vector<double>> samples;
  std::map<std::string, double> thresholds;
  std::vector<std::string> notes;
  bool pass = false;

  [[nodiscard]] const Statistic& stat(const std::string& name) const {
    for (const auto& s : statistics)
      if (s.name == name) return s;
    throw DomainError("report has no statistic '" + name + "'");
  }
  [[nodiscard]] const Table& table(const std::string& name) const {
    for (const auto& t : tables)
      if (t.name == name) return t;
    throw DomainError("report has no table '" + name + "'");
  }
  void add(std::string name, double value, double se = std::numeric_limits<double>::quiet_NaN()) {
    statistics.push_back({std::move(name), value, se});
  }
};

namespace detail {

inline constexpr std::size_t kMinDistributionalReps = 100;

inline void require_reps(const ExperimentConfig& c, std::size_t min) {
  if (c.reps < min)
    throw ConfigError(std::string(to_string(c.kind)) + " needs reps >= " + std::to_string(min) + " (got " +
                      std::to_string(c.reps) + ")");
}

inline void validate(const ExperimentConfig& c) {
  if (c.n_list.empty()) throw ConfigError("n list is empty");
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    if (c.n_list[i] < 2) throw ConfigError("every n must be >= 2");
    if (i > 0 && c.n_list[i] <= c.n_list[i - 1]) throw ConfigError("n list must be strictly increasing");
  }
  for (const auto& [name, v] : c.thresholds)
    if (!(v > 0.0)) throw ConfigError("threshold '" + name + "' must be > 0");
  if (c.reps < 1) throw ConfigError("reps must be >= 1");
}

inline std::string lambda_label(double l) {
  const double r = l / std::numbers::pi;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6gpi", r);
  return buf;
}

/// reps x lambdas matrix of lag-window estimates; replicate r uses
/// derive_seed(seed, offset + r).
inline std::vector<std::vector<double>> replicate_estimates(const ExperimentConfig& c, std::size_t n,
                                                            std::size_t bandwidth, std::span<const double> lambdas,
                                                            std::uint64_t offset = 0) {
  check_bandwidth(bandwidth, n);
  std::vector<std::vector<double>> out(c.reps);
  parallel_for(c.reps, c.threads, [&](std::size_t r) {
    const TimeSeries x = simulate(c.spec, n, c.burn_in, derive_seed(c.seed, offset + r));
    const LagWindowSum f(sample_acov_sequence(x, bandwidth), c.window, bandwidth);
    out[r].reserve(lambdas.size());
    for (double l : lambdas) out[r].push_back(f(l));
  });
  return out;
}

inline std::vector<double> column(const std::vector<std::vector<double>>& m, std::size_t j) {
  std::vector<double> v(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i][j];
  return v;
}

inline ReferenceSpectrum reference(const ExperimentConfig& c) {
  return reference_spectrum(c.spec, c.oracle, c.seed, c.threads, c.burn_in);
}

inline ExperimentReport run_fourier_clt(const ExperimentConfig& c) {
  require_reps(c, kMinDistributionalReps);
  const std::size_t n = c.n_list.front();
  const std::size_t m = (n - 1) / 2;
  if (c.p < 1 || c.draws < 1) throw ConfigError("fourier-clt needs p >= 1 and draws >= 1");
  if (c.p > 2 * m) throw ConfigError("p exceeds the 2m available coordinates");
  const ReferenceSpectrum ref = reference(c);

  // random index sets J and unit directions c
  struct Draw {
    std::vector<std::size_t> J;
    std::vector<double> dir;
  };
  std::vector<Draw> draws(c.draws);
  std::vector<std::size_t> needed;
  for (std::size_t d = 0; d < c.draws; ++d) {
    Rng rng = Rng::stream(c.seed, kAuxStreams + d);
    std::vector<std::size_t> pool(2 * m);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
    for (std::size_t i = 0; i < c.p; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    draws[d].J.assign(pool.begin(), pool.begin() + static_cast<long>(c.p));
    std::sort(draws[d].J.begin(), draws[d].J.end());
    std::normal_distribution<double> gauss;
    double norm = 0.0;
    for (std::size_t i = 0; i < c.p; ++i) {
      draws[d].dir.push_back(gauss(rng));
      norm += draws[d].dir.back() * draws[d].dir.back();
    }
    for (double& v : draws[d].dir) v /= std::sqrt(norm);
    for (std::size_t j : draws[d].J) needed.push_back(j <= m ? j : j - m);
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());

  std::map<std::size_t, double> scale;  // sqrt(pi n f(theta_j))
  for (std::size_t j : needed) {
    const double theta = kTwoPi * static_cast<double>(j) / static_cast<double>(n);
    const double f = ref.f(theta);
    if (!(f > 0.0)) throw DomainError("reference spectrum must be > 0 at the selected frequencies");
    scale[j] = std::sqrt(std::numbers::pi * static_cast<double>(n) * f);
  }

  // Z_j for every needed coordinate, per replicate
  std::vector<std::map<std::size_t, double>> z(c.reps);
  parallel_for(c.reps, c.threads, [&](std::size_t r) {
    const TimeSeries x = simulate(c.spec, n, c.burn_in, derive_seed(c.seed, r));
    for (std::size_t j : needed) {
      const auto s = fourier_transform(x, kTwoPi * static_cast<double>(j) / static_cast<double>(n));
      z[r][j] = s.real() / scale[j];
      z[r][j + m] = s.imag() / scale[j];
    }
  });

  ExperimentReport rep;
  Table t{"draws", {"draw", "ks"}, {}};
  for (std::size_t i = 0; i < c.p; ++i) t.columns.push_back("j" + std::to_string(i + 1));
  for (std::size_t i = 0; i < c.p; ++i) t.columns.push_back("c" + std::to_string(i + 1));
  double worst = 0.0;
  std::size_t worst_draw = 0;
  std::vector<std::vector<double>> projections(c.draws);
  for (std::size_t d = 0; d < c.draws; ++d) {
    std::vector<double> proj(c.reps);
    for (std::size_t r = 0; r < c.reps; ++r) {
      double v = 0.0;
      for (std::size_t i = 0; i < c.p; ++i) v += draws[d].dir[i] * z[r].at(draws[d].J[i]);
      proj[r] = v;
    }
    const double ks = stats::ks_distance(proj, stats::normal_cdf);
    std::vector<double> row{static_cast<double>(d), ks};
    for (std::size_t j : draws[d].J) row.push_back(static_cast<double>(j));
    for (double v : draws[d].dir) row.push_back(v);
    t.rows.push_back(std::move(row));
    if (ks > worst) {
      worst = ks;
      worst_draw = d;
    }
    projections[d] = std::move(proj);
  }
  rep.tables.push_back(std::move(t));
  rep.samples["projection_worst"] = projections[worst_draw];
  rep.add("ks_worst", worst);
  rep.add("worst_draw", static_cast<double>(worst_draw));
  rep.pass = worst < c.threshold("ks_max");
  if (!ref.closed_form) rep.notes.push_back("f from Monte Carlo oracle spectrum");
  rep.notes.push_back("worst KS over sampled (J, c) only; the supremum over all pairs is not covered");
  return rep;
}

inline ExperimentReport run_ecdf_exp(const ExperimentConfig& c) {
  const std::size_t n = c.n_list.front();
  const ReferenceSpectrum ref = reference(c);
  std::vector<double> ks(c.reps);
  parallel_for(c.reps, c.threads, [&](std::size_t r) {
    const TimeSeries x = simulate(c.spec, n, c.burn_in, derive_seed(c.seed, r));
    ks[r] = normalized_periodogram_ks(x, ref.f);
  });
  ExperimentReport rep;
  const double med = stats::median(ks);
  rep.add("ks_median", med);
  rep.add("ks_mean", stats::mean(ks), c.reps > 1 ? stats::standard_error(ks) : std::nan(""));
  rep.add("ks_max", *std::max_element(ks.begin(), ks.end()));
  rep.samples["ks"] = ks;
  rep.pass = med < c.threshold("ks_median");
  if (!ref.closed_form) rep.notes.push_back("f from Monte Carlo oracle spectrum");
  return rep;
}

inline ExperimentReport run_density_clt(const ExperimentConfig& c) {
  require_reps(c, kMinDistributionalReps);
  const std::size_t n = c.n_list.front();
  const std::size_t b = c.bandwidth_for(0);
  std::vector<double> lambdas = c.lambdas;
  if (lambdas.empty()) lambdas = {std::numbers::pi / 2};
  const ReferenceSpectrum ref = reference(c);
  const auto est = replicate_estimates(c, n, b, lambdas);
  const double root = std::sqrt(static_cast<double>(n) / static_cast<double>(b));

  ExperimentReport rep;
  Table t{"lambdas", {"lambda", "f", "sigma2", "variance", "variance_se", "ratio", "ks", "mean_f_n"}, {}};
  bool ok = true;
  double worst_ks = 0.0, worst_dev = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    std::vector<double> v = column(est, i);
    const double mean = stats::mean(v);
    for (double& x : v) x = root * (x - mean);
    const double var = stats::variance(v);
    const double var_se = var * std::sqrt(2.0 / static_cast<double>(c.reps - 1));
    const double f = ref.f(lambdas[i]);
    const double sigma2 = asymptotic_variance(f, lambdas[i], c.window);
    const double ratio = var / sigma2;
    const double sd = std::sqrt(var);
    const double ks = stats::ks_distance(v, [sd](double x) { return stats::normal_cdf(x / sd); });
    const double tol = c.threshold(is_multiple_of_pi(lambdas[i]) ? "variance_tol_boundary" : "variance_tol");
    ok = ok && std::abs(ratio - 1.0) <= tol && ks < c.threshold("ks_max");
    worst_ks = std::max(worst_ks, ks);
    worst_dev = std::max(worst_dev, std::abs(ratio - 1.0));
    t.rows.push_back({lambdas[i], f, sigma2, var, var_se, ratio, ks, mean});
    rep.add("variance_ratio@" + lambda_label(lambdas[i]), ratio, var_se / sigma2);
    rep.add("ks@" + lambda_label(lambdas[i]), ks);
    rep.samples["scaled@" + lambda_label(lambdas[i])] = std::move(v);
  }
  rep.tables.push_back(std::move(t));
  rep.add("ks_max", worst_ks);
  rep.add("variance_ratio_max_deviation", worst_dev);
  rep.pass = ok;
  rep.notes.push_back("centred at the replicate mean of f_n");
  return rep;
}

inline ExperimentReport run_joint_indep(const ExperimentConfig& c) {
  require_reps(c, kMinDistributionalReps);
  const std::size_t n = c.n_list.front();
  const std::size_t b = c.bandwidth_for(0);
  std::vector<double> lambdas = c.lambdas;
  if (lambdas.size() < 2) throw ConfigError("joint-indep needs at least two frequencies");
  const auto est = replicate_estimates(c, n, b, lambdas);
  ExperimentReport rep;
  Table t{"pairs", {"lambda_1", "lambda_2", "correlation"}, {}};
  double worst = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    for (std::size_t j = i + 1; j < lambdas.size(); ++j) {
      const double r = stats::correlation(column(est, i), column(est, j));
      t.rows.push_back({lambdas[i], lambdas[j], r});
      worst = std::max(worst, std::abs(r));
    }
  rep.tables.push_back(std::move(t));
  for (std::size_t i = 0; i < lambdas.size(); ++i) rep.samples["f_n@" + lambda_label(lambdas[i])] = column(est, i);
  rep.add("max_abs_correlation", worst, 1.0 / std::sqrt(static_cast<double>(c.reps)));
  rep.pass = worst < c.threshold("corr_max");
  return rep;
}

inline ExperimentReport run_max_dev(const ExperimentConfig& c) {
  if (c.reps < 2) throw ConfigError("max-dev needs reps >= 2");
  if (c.n_list.size() < 2) throw ConfigError("max-dev needs at least two sample sizes");
  const std::vector<double> grid = frequency_grid(c.grid_points);
  ExperimentReport rep;
  Table t{"sizes", {"n", "B_n", "mean_max_dev", "standard_error"}, {}};
  std::vector<double> values;
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    const std::size_t n = c.n_list[i];
    const std::size_t b = c.bandwidth_for(i);
    const auto est = replicate_estimates(c, n, b, grid, static_cast<std::uint64_t>(i) * kAuxStreams);
    std::vector<double> mean(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) mean[g] = stats::mean(column(est, g));
    const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(b)) /
                         std::sqrt(std::log(static_cast<double>(n)));
    std::vector<double> dev(c.reps);
    for (std::size_t r = 0; r < c.reps; ++r) {
      double mx = 0.0;
      for (std::size_t g = 0; g < grid.size(); ++g) mx = std::max(mx, std::abs(est[r][g] - mean[g]));
      dev[r] = scale * mx;
    }
    const double v = stats::mean(dev);
    values.push_back(v);
    t.rows.push_back({static_cast<double>(n), static_cast<double>(b), v, stats::standard_error(dev)});
    rep.samples["max_dev@n=" + std::to_string(n)] = std::move(dev);
  }
  rep.tables.push_back(std::move(t));
  const double ratio = values.back() / values.front();
  rep.add("ratio_largest_to_smallest", ratio);
  rep.pass = ratio < c.threshold("ratio_max");
  return rep;
}

inline ExperimentReport run_bootstrap_consistency(const ExperimentConfig& c) {
  require_reps(c, kMinDistributionalReps);
  if (c.n_list.size() < 2) throw ConfigError("bootstrap-consistency needs at least two sample sizes");
  if (c.repetitions < 1 || c.min_wins > c.repetitions)
    throw ConfigError("bootstrap-consistency needs 1 <= min_wins <= repetitions");
  const double lambda = c.lambdas.empty() ? std::numbers::pi / 2 : c.lambdas.front();
  const ReferenceSpectrum ref = reference(c);
  const double f_true = ref.f(lambda);
  const double eta = is_multiple_of_pi(lambda) ? 2.0 : 1.0;
  const std::size_t sizes = c.n_list.size();

  std::vector<std::pair<std::size_t, std::size_t>> bw(sizes);
  for (std::size_t i = 0; i < sizes; ++i) {
    if (!c.bandwidths.empty() || !c.pilot_bandwidths.empty()) {
      if (c.bandwidths.size() != sizes || c.pilot_bandwidths.size() != sizes)
        throw ConfigError("explicit bandwidths need one B_n and one pilot B_n per sample size");
      bw[i] = {c.bandwidths[i], c.pilot_bandwidths[i]};
    } else {
      bw[i] = bootstrap::default_bandwidths(c.n_list[i], c.bandwidth_scale, c.pilot_scale);
    }
  }

  ExperimentReport rep;
  Table t{"repetitions",
          {"repetition", "n", "B_n", "pilot_B_n", "d2", "d2_normalized", "variance_ratio", "variance_ratio_pilot",
           "pilot_at_lambda"},
          {}};
  std::size_t wins = 0, wins_raw = 0, wins_norm = 0;
  std::vector<double> last_ratios, last_pilot_ratios;
  for (std::size_t rep_i = 0; rep_i < c.repetitions; ++rep_i) {
    const std::uint64_t rep_seed = derive_seed(c.seed, kAuxStreams + rep_i);
    std::vector<double> d2_raw(sizes), d2_norm(sizes);
    for (std::size_t i = 0; i < sizes; ++i) {
      const std::size_t n = c.n_list[i];
      const auto [b, b_pilot] = bw[i];
      const double root = std::sqrt(static_cast<double>(n) / static_cast<double>(b));
      const std::uint64_t size_seed = derive_seed(rep_seed, i);

      // Monte Carlo law of g_n, centred at the true f
      std::vector<double> g(c.reps);
      parallel_for(c.reps, c.threads, [&](std::size_t r) {
        const TimeSeries x = simulate(c.spec, n, c.burn_in, derive_seed(size_seed, r));
        g[r] = root * (LagWindowSum(sample_acov_sequence(x, b), c.window, b)(lambda) - f_true);
      });

      // bootstrap law from one held-out realization
      const TimeSeries held = simulate(c.spec, n, c.burn_in, derive_seed(size_seed, kAuxStreams));
      bootstrap::Config bc;
      bc.window = c.window;
      bc.bandwidth = b;
      bc.pilot_bandwidth = b_pilot;
      bc.variant = c.variant;
      bc.n_boot = c.n_boot;
      bc.seed = derive_seed(size_seed, kAuxStreams + 1);
      bc.threads = c.threads;
      const bootstrap::Distribution dist = bootstrap::bootstrap_distribution(held, bc, lambda);
      const double pilot = dist.pilot_at_lambda;

      d2_raw[i] = bootstrap::mallows_d2(g, dist.samples);
      std::vector<double> gn = g, gs = dist.samples;
      for (double& v : gn) v /= f_true;
      for (double& v : gs) v /= pilot;
      d2_norm[i] = bootstrap::mallows_d2(gn, gs);

      const double var_star = stats::variance(dist.samples);
      const double ratio = var_star / (eta * f_true * f_true * c.window.sq_integral);
      const double ratio_pilot = var_star / (eta * pilot * pilot * c.window.sq_integral);
      if (i + 1 == sizes) {
        last_ratios.push_back(ratio);
        last_pilot_ratios.push_back(ratio_pilot);
      }
      t.rows.push_back({static_cast<double>(rep_i), static_cast<double>(n), static_cast<double>(b),
                        static_cast<double>(b_pilot), d2_raw[i], d2_norm[i], ratio, ratio_pilot, pilot});
      if (rep_i == 0) {
        rep.samples["g_n@n=" + std::to_string(n)] = g;
        rep.samples["g_star@n=" + std::to_string(n)] = dist.samples;
      }
    }
    const bool raw_win = d2_raw.back() < d2_raw.front();
    const bool norm_win = d2_norm.back() < d2_norm.front();
    wins_raw += raw_win;
    wins_norm += norm_win;
    wins += c.normalized ? norm_win : raw_win;
  }
  rep.tables.push_back(std::move(t));
  auto se = [](const std::vector<double>& v) { return v.size() > 1 ? stats::standard_error(v) : std::nan(""); };
  const double mean_ratio = stats::mean(last_pilot_ratios);
  rep.add("wins", static_cast<double>(wins));
  rep.add("wins_raw", static_cast<double>(wins_raw));
  rep.add("wins_normalized", static_cast<double>(wins_norm));
  // conditional target f~^2 int a^2 gates; the true-f ratio also carries the pilot bias
  rep.add("variance_ratio_largest_n", mean_ratio, se(last_pilot_ratios));
  rep.add("variance_ratio_true_f_largest_n", stats::mean(last_ratios), se(last_ratios));
  rep.add("f_at_lambda", f_true);
  rep.add("lambda", lambda);
  rep.pass = wins >= c.min_wins && std::abs(mean_ratio - 1.0) <= c.threshold("variance_tol");
  rep.notes.push_back(std::string("variant ") + bootstrap::to_string(c.variant) + "; gate on " +
                      (c.normalized ? "normalized" : "raw") + " d2");
  if (!ref.closed_form) rep.notes.push_back("f from Monte Carlo oracle spectrum");
  return rep;
}

inline ExperimentReport run_bias_exact(const ExperimentConfig& c) {
  if (!c.window.c2) throw WindowConditionError(std::string(to_string(c.window.kind)) + " window has no c2 constant");
  if (c.bandwidths.empty()) throw ConfigError("bias-exact needs a list of B_n");
  const std::size_t n = c.n_list.front();
  const double lambda = c.lambdas.empty() ? std::numbers::pi / 3 : c.lambdas.front();
  std::size_t kmax = c.acov_truncation;
  for (std::size_t b : c.bandwidths) {
    check_bandwidth(b, n);
    kmax = std::max(kmax, b);
  }
  std::vector<double> r;
  try {
    r = theoretical_acov(c.spec, kmax);
  } catch (const UnsupportedFamily& e) {
    throw UnsupportedFamily(std::string("bias-exact needs a closed-form autocovariance: ") + e.what());
  }
  const double f = theoretical_spectrum(c.spec, lambda);
  const double fdd = spectral_second_derivative(r, lambda);
  const double target = *c.window.c2 * fdd;

  ExperimentReport rep;
  Table t{"bandwidths", {"B_n", "expected_f_n", "f", "scaled_bias", "c2_f2", "ratio"}, {}};
  std::vector<double> dev;
  for (std::size_t b : c.bandwidths) {
    const double bd = static_cast<double>(b);
    stats::CompensatedSum s;
    s.add(r[0]);
    for (std::size_t k = 1; k <= b; ++k) {
      const double kd = static_cast<double>(k);
      s.add(2.0 * c.window(kd / bd) * (1.0 - kd / static_cast<double>(n)) * r[k] * std::cos(kd * lambda));
    }
    const double ef = s.value() / kTwoPi;
    const double scaled = bd * bd * (ef - f);
    const double ratio = scaled / target;
    t.rows.push_back({bd, ef, f, scaled, target, ratio});
    dev.push_back(std::abs(ratio - 1.0));
  }
  rep.tables.push_back(std::move(t));
  bool decreasing = true;
  for (std::size_t i = 1; i < dev.size(); ++i) decreasing = decreasing && dev[i] < dev[i - 1];
  rep.add("final_ratio_deviation", dev.back());
  rep.add("decreasing", decreasing ? 1.0 : 0.0);
  rep.add("f_second_derivative", fdd);
  rep.pass = decreasing && dev.back() < c.threshold("ratio_tol");
  return rep;
}

} // namespace detail

/// Runs one verification experiment. Deterministic given the config.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  detail::validate(config);
  ExperimentReport rep;
  switch (config.kind) {
    case Kind::fourier_clt: rep = detail::run_fourier_clt(config); break;
    case Kind::ecdf_exp: rep = detail::run_ecdf_exp(config); break;
    case Kind::density_clt: rep = detail::run_density_clt(config); break;
    case Kind::joint_indep: rep = detail::run_joint_indep(config); break;
    case Kind::max_dev: rep = detail::run_max_dev(config); break;
    case Kind::bootstrap_consistency: rep = detail::run_bootstrap_consistency(config); break;
    case Kind::bias_exact: rep = detail::run_bias_exact(config); break;
  }
  rep.kind = config.kind;
  for (const auto& [k, v] : default_thresholds(config.kind)) rep.thresholds[k] = config.threshold(k);
  return rep;
}

/// Variance of sum_{u=1}^s (Y_u - E Y_u) with
/// Y_u = (1/2pi) sum_{|k|<=B} X_u X_{u+k} a(k/B) cos(k lambda),
/// estimated over `reps` series for each (s, B) pair, plus the log-log
/// slope against s*B.
struct QuadraticScaling {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<double> variances;
  std::vector<double> normalized;  // variance / (s B sigma^2)
  double slope = 0.0;
  double r2 = 0.0;
};

inline QuadraticScaling quadratic_sum_scaling(const ModelSpec& spec, const Window& window, double lambda,
                                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                              std::size_t reps, std::uint64_t seed, unsigned threads = 1,
                                              double f_at_lambda = 1.0 / kTwoPi) {
  if (pairs.size() < 2) throw DomainError("need at least two (s, B) pairs");
  if (reps < 30) throw DomainError("quadratic_sum_scaling needs reps >= 30");
  QuadraticScaling out;
  out.pairs = pairs;
  const double sigma2 = asymptotic_variance(f_at_lambda, lambda, window);
  std::vector<double> xs, ys;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, b] = pairs[p];
    if (s < 1 || b < 1) throw DomainError("s and B must be >= 1");
    std::vector<double> a(b + 1);
    for (std::size_t k = 0; k <= b; ++k)
      a[k] = window(static_cast<double>(k) / static_cast<double>(b)) * std::cos(static_cast<double>(k) * lambda);
    std::vector<double> sums(reps);
    parallel_for(reps, threads, [&](std::size_t r) {
      const TimeSeries x = simulate(spec, s + 2 * b, kDefaultBurnIn, derive_seed(seed, p * kAuxStreams + r));
      const auto& v = x.values;
      stats::CompensatedSum total;
      for (std::size_t u = b; u < b + s; ++u) {
        double y = a[0] * v[u] * v[u];
        for (std::size_t k = 1; k <= b; ++k) y += a[k] * v[u] * (v[u + k] + v[u - k]);
        total.add(y / kTwoPi);
      }
      sums[r] = total.value();
    });
    const double var = stats::variance(sums);  // centring by the sample mean estimates E Y_u
    out.variances.push_back(var);
    out.normalized.push_back(var / (static_cast<double>(s) * static_cast<double>(b) * sigma2));
    xs.push_back(std::log(static_cast<double>(s) * static_cast<double>(b)));
    ys.push_back(std::log(var));
  }
  const auto fit = stats::linear_fit(xs, ys);
  out.slope = fit.slope;
  out.r2 = fit.r2;
  return out;
}

} // namespace nlspec::experiments
