#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "nlspec/errors.hpp"
#include "nlspec/innovation.hpp"
#include "nlspec/models.hpp"
#include "nlspec/parallel.hpp"
#include "nlspec/rng.hpp"
#include "nlspec/stats.hpp"

namespace nlspec::gmc {

/// Trace values below this count as exact zero.
inline constexpr double kTraceFloor = 1e-30;

struct FitReport {
  double alpha = 0.0;
  std::vector<std::size_t> lags;
  std::vector<double> moments;          // mean |X_n - X'_n|^alpha
  std::vector<double> standard_errors;  // Monte Carlo
  double rho_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
  bool floor_hit = false;
  std::size_t fitted_points = 0;
  std::size_t reps = 0;
};

/// Estimates E|X_n - X'_n|^alpha over `reps` independent coupled pairs and
/// fits log(moment) = log C + n log rho on the positive entries that precede
/// the first value below the floor.
inline FitReport estimate_decay(const ModelSpec& spec, double alpha, std::vector<std::size_t> lags,
                                std::size_t reps, std::uint64_t seed, unsigned threads = 1,
                                std::size_t burn_in = kDefaultBurnIn) {
  if (!(alpha > 0.0)) throw DomainError("moment order alpha must be > 0");
  if (reps < 30) throw DomainError("estimate_decay needs reps >= 30");
  if (lags.empty()) throw DomainError("lag grid is empty");
  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (lags[i] < 1) throw DomainError("lags must be >= 1");
    if (i > 0 && lags[i] <= lags[i - 1]) throw DomainError("lags must be strictly increasing");
  }
  const std::size_t horizon = std::max<std::size_t>(lags.back(), 2);

  std::vector<std::vector<double>> per_rep(reps, std::vector<double>(lags.size()));
  parallel_for(reps, threads, [&](std::size_t r) {
    const CoupledPair pair = simulate_coupled(spec, horizon, Rng::stream(seed, r)(), burn_in);
    for (std::size_t i = 0; i < lags.size(); ++i) {
      const std::size_t t = lags[i] - 1;
      per_rep[r][i] = std::pow(std::abs(pair.primary.values[t] - pair.coupled.values[t]), alpha);
    }
  });

  FitReport rep;
  rep.alpha = alpha;
  rep.reps = reps;
  std::vector<double> column(reps);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < lags.size(); ++i) {
    for (std::size_t r = 0; r < reps; ++r) column[r] = per_rep[r][i];
    const double m = stats::mean(column);
    rep.lags.push_back(lags[i]);
    rep.moments.push_back(m);
    rep.standard_errors.push_back(stats::standard_error(column));
    if (m < kTraceFloor) {
      rep.floor_hit = true;
      break;
    }
    xs.push_back(static_cast<double>(lags[i]));
    ys.push_back(std::log(m));
  }
  rep.fitted_points = xs.size();
  if (xs.size() >= 2) {
    const auto fit = stats::linear_fit(xs, ys);
    rep.rho_hat = std::exp(fit.slope);
    rep.c_hat = std::exp(fit.intercept);
    rep.r2 = fit.r2;
  } else if (xs.size() == 1) {
    rep.rho_hat = rep.floor_hit ? 0.0 : std::nan("");
    rep.c_hat = std::exp(ys.front()) ;
    rep.r2 = std::nan("");
  }
  // xs empty: the trace was zero from the first lag on; rho_hat stays 0.
  return rep;
}

/// Contraction check plus the GMC orders it implies.
struct ContractionOrderReport {
  ContractionReport contraction;
  /// GMC(alpha') for alpha' in (0, implied_upper]; 0 when not satisfied.
  double implied_upper = 0.0;
};

inline ContractionOrderReport check_contraction_orders(const ModelSpec& spec, double alpha) {
  ContractionOrderReport r{contraction_coefficients(spec, alpha), 0.0};
  if (r.contraction.satisfied) r.implied_upper = alpha;
  return r;
}

enum class Estimation { analytic, monte_carlo };

inline const char* to_string(Estimation e) noexcept {
  return e == Estimation::analytic ? "analytic" : "monte_carlo";
}

struct MomentConditionReport {
  int m = 1;
  Eigen::MatrixXd matrix_mean;  // E(A^{(x)m})
  double spectral_radius = 0.0;
  double delta = 0.0;  // largest singular value
  bool satisfied_delta = false;
  bool satisfied_rho = false;
  /// The two verdicts disagree (possible because delta >= radius).
  bool verdicts_disagree = false;
  Estimation estimation = Estimation::analytic;
  std::size_t reps = 0;
  double spectral_radius_se = 0.0;
  double delta_se = 0.0;
};

/// Companion matrix of the power-GARCH volatility recursion for one draw of
/// Z_t = (|eps_t| - gamma eps_t)^power. Orders r and s are padded to 1.
inline Eigen::MatrixXd garch_companion(const family::AsymGarch& g, double z) {
  const std::size_t r = std::max<std::size_t>(g.alpha.size(), 1);
  const std::size_t s = std::max<std::size_t>(g.beta.size(), 1);
  auto alpha = [&](std::size_t j) { return j < g.alpha.size() ? g.alpha[j] : 0.0; };
  auto beta = [&](std::size_t j) { return j < g.beta.size() ? g.beta[j] : 0.0; };
  const auto dim = static_cast<Eigen::Index>(r + s);
  const auto ri = static_cast<Eigen::Index>(r);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  for (std::size_t j = 0; j < r; ++j) {
    a(0, static_cast<Eigen::Index>(j)) = alpha(j) * z;
    a(ri, static_cast<Eigen::Index>(j)) = alpha(j);
  }
  for (std::size_t j = 0; j < s; ++j) {
    a(0, ri + static_cast<Eigen::Index>(j)) = beta(j) * z;
    a(ri, ri + static_cast<Eigen::Index>(j)) = beta(j);
  }
  for (Eigen::Index i = 1; i < ri; ++i) a(i, i - 1) = 1.0;
  for (Eigen::Index i = 1; i < static_cast<Eigen::Index>(s); ++i) a(ri + i, ri + i - 1) = 1.0;
  return a;
}

inline Eigen::MatrixXd kronecker_power(const Eigen::MatrixXd& a, int m) {
  Eigen::MatrixXd out = a;
  for (int i = 1; i < m; ++i) {
    Eigen::MatrixXd next = Eigen::kroneckerProduct(out, a).eval();
    out.swap(next);
  }
  return out;
}

inline double spectral_radius(const Eigen::MatrixXd& a) {
  return a.eigenvalues().cwiseAbs().maxCoeff();
}

/// Largest eigenvalue of (A'A)^{1/2}.
inline double largest_singular_value(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

/// E(|eps| - gamma eps)^power where a closed form exists.
inline std::optional<double> mean_garch_z(const family::AsymGarch& g) {
  const auto& e = g.innovation;
  const double p = g.power;
  const double lo = std::pow(1.0 - g.gamma, p);
  const double hi = std::pow(1.0 + g.gamma, p);
  switch (e.kind) {
    case InnovationKind::gaussian:
    case InnovationKind::rademacher:
      // symmetric law: half the mass sees (1 - gamma)|e|, half (1 + gamma)|e|
      return 0.5 * (lo + hi) * e.abs_moment(p);
    default:
      return std::nullopt;
  }
}

inline constexpr std::size_t kMaxKroneckerDim = 10'000;

struct MonteCarloMode {
  std::size_t reps = 100'000;
  std::uint64_t seed = 0;
  std::size_t batches = 20;
};

namespace detail {

inline MomentConditionReport finish(MomentConditionReport rep) {
  rep.spectral_radius = spectral_radius(rep.matrix_mean);
  rep.delta = largest_singular_value(rep.matrix_mean);
  rep.satisfied_delta = rep.delta < 1.0;
  rep.satisfied_rho = rep.spectral_radius < 1.0;
  rep.verdicts_disagree = rep.satisfied_delta != rep.satisfied_rho;
  return rep;
}

inline void check_dim(const family::AsymGarch& g, int m) {
  if (m < 1) throw DomainError("moment multiple m must be >= 1");
  const double dim = static_cast<double>(std::max<std::size_t>(g.alpha.size(), 1) +
                                         std::max<std::size_t>(g.beta.size(), 1));
  if (std::pow(dim, m) > static_cast<double>(kMaxKroneckerDim))
    throw SizeError("Kronecker power dimension (r+s)^m exceeds " + std::to_string(kMaxKroneckerDim));
}

} // namespace detail

/// Moment condition Delta{E(A^{(x)m})} < 1 with E(A) in closed form (m = 1,
/// gaussian or rademacher innovations).
inline MomentConditionReport garch_moment_matrix(const family::AsymGarch& g, int m) {
  detail::check_dim(g, m);
  const auto ez = mean_garch_z(g);
  if (m != 1 || !ez)
    throw DomainError("analytic mode needs m = 1 and gaussian or rademacher innovations");
  MomentConditionReport rep;
  rep.m = 1;
  rep.matrix_mean = garch_companion(g, *ez);  // A is affine in Z
  rep.estimation = Estimation::analytic;
  return detail::finish(std::move(rep));
}

/// Monte Carlo estimate of E(A^{(x)m}) over innovation draws. Standard
/// errors of the radius and Delta come from `batches` equal batches.
inline MomentConditionReport garch_moment_matrix(const family::AsymGarch& g, int m, const MonteCarloMode& mc) {
  detail::check_dim(g, m);
  if (mc.reps < mc.batches || mc.batches < 2) throw DomainError("Monte Carlo mode needs reps >= batches >= 2");
  InnovationSampler draw(g.innovation);
  Rng rng = Rng::stream(mc.seed, 0);
  const std::size_t per_batch = mc.reps / mc.batches;
  const Eigen::Index dim = garch_companion(g, 0.0).rows();
  const auto kdim = static_cast<Eigen::Index>(std::pow(static_cast<double>(dim), m) + 0.5);
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(kdim, kdim);
  std::vector<double> radii, deltas;
  for (std::size_t b = 0; b < mc.batches; ++b) {
    Eigen::MatrixXd batch = Eigen::MatrixXd::Zero(kdim, kdim);
    for (std::size_t i = 0; i < per_batch; ++i) {
      const double e = draw(rng);
      const double z = std::pow(std::abs(e) - g.gamma * e, g.power);
      batch += kronecker_power(garch_companion(g, z), m);
    }
    total += batch;
    batch /= static_cast<double>(per_batch);
    radii.push_back(spectral_radius(batch));
    deltas.push_back(largest_singular_value(batch));
  }
  MomentConditionReport rep;
  rep.m = m;
  rep.matrix_mean = total / static_cast<double>(per_batch * mc.batches);
  rep.estimation = Estimation::monte_carlo;
  rep.reps = per_batch * mc.batches;
  rep.spectral_radius_se = stats::standard_error(radii);
  rep.delta_se = stats::standard_error(deltas);
  return detail::finish(std::move(rep));
}

inline MomentConditionReport garch_moment_matrix(const ModelSpec& spec, int m,
                                                 std::optional<MonteCarloMode> mc = std::nullopt) {
  const auto* g = spec.as<family::AsymGarch>();
  if (!g) throw UnsupportedFamily("garch_moment_matrix needs an asym_garch model, got " + spec.name());
  return mc ? garch_moment_matrix(*g, m, *mc) : garch_moment_matrix(*g, m);
}

/// Direct hypotheses for the signed volatility model:
/// E|eps|^{alpha power} < 1 and E|c(eps)|^alpha < 1.
struct SignedVolConditions {
  double alpha = 0.0;
  double eps_moment = 0.0;  // E|eps|^{alpha power}
  double c_moment = 0.0;    // E|c(eps)|^alpha
  double c_moment_se = 0.0;
  bool satisfied = false;
  /// GMC(power * alpha) when satisfied.
  double implied_order = 0.0;
};

inline SignedVolConditions signed_vol_conditions(const ModelSpec& spec, double alpha,
                                                 std::size_t draws = 200'000, std::uint64_t seed = 0) {
  const auto* sv = spec.as<family::SignedVol>();
  if (!sv) throw UnsupportedFamily("signed_vol_conditions needs a signed_vol model, got " + spec.name());
  if (!(alpha > 0.0)) throw DomainError("alpha must be > 0");
  SignedVolConditions out;
  out.alpha = alpha;
  out.eps_moment = sv->innovation.abs_moment(alpha * sv->power);
  InnovationSampler draw(sv->innovation);
  Rng rng = Rng::stream(seed, 0);
  std::vector<double> v(draws);
  for (auto& x : v) x = std::pow(std::abs(sv->c(draw(rng))), alpha);
  out.c_moment = stats::mean(v);
  out.c_moment_se = stats::standard_error(v);
  out.satisfied = out.eps_moment < 1.0 && out.c_moment < 1.0;
  out.implied_order = out.satisfied ? sv->power * alpha : 0.0;
  return out;
}

/// Monte Carlo E|A + B eps|_alpha for the Markovian form of a bilinear
/// model, alpha in {1, 2} (induced column-sum or spectral norm).
struct BilinearNormReport {
  double alpha = 0.0;
  double mean_norm = 0.0;
  double standard_error = 0.0;
  bool satisfied = false;
  bool innovation_moment_ok = false;  // eps in L^{2 alpha}
};

inline BilinearNormReport bilinear_contraction(const ModelSpec& spec, double alpha, std::size_t draws = 100'000,
                                               std::uint64_t seed = 0) {
  const auto* bl = spec.as<family::Bilinear>();
  if (!bl) throw UnsupportedFamily("bilinear_contraction needs a bilinear model, got " + spec.name());
  if (alpha != 1.0 && alpha != 2.0) throw DomainError("bilinear_contraction supports alpha = 1 or 2");
  const BilinearMarkovForm f = bilinear_markov_form(*bl);
  InnovationSampler draw(bl->innovation);
  Rng rng = Rng::stream(seed, 0);
  std::vector<double> norms(draws);
  for (auto& v : norms) {
    const Eigen::MatrixXd a = f.A + f.B * draw(rng);
    v = alpha == 1.0 ? a.cwiseAbs().colwise().sum().maxCoeff() : largest_singular_value(a);
  }
  BilinearNormReport out;
  out.alpha = alpha;
  out.mean_norm = stats::mean(norms);
  out.standard_error = stats::standard_error(norms);
  out.satisfied = out.mean_norm < 1.0;
  out.innovation_moment_ok = bl->innovation.has_moment(2.0 * alpha);
  return out;
}

} // namespace nlspec::gmc
