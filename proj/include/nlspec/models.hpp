#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nlspec/errors.hpp"
#include "nlspec/innovation.hpp"
#include "nlspec/rng.hpp"
#include "nlspec/stats.hpp"

namespace nlspec {

struct ModelSpec;

/// Scalar function of the innovation used by the signed volatility model.
struct CoefficientFunction {
  enum class Kind { constant, linear, abs, square };
  Kind kind = Kind::constant;
  double k0 = 0.0;
  double k1 = 0.0;

  /// k0, k0 + k1*e, k0 + k1*|e| or k0 + k1*e^2.
  [[nodiscard]] double operator()(double e) const noexcept {
    switch (kind) {
      case Kind::constant: return k0;
      case Kind::linear: return k0 + k1 * e;
      case Kind::abs: return k0 + k1 * std::abs(e);
      case Kind::square: return k0 + k1 * e * e;
    }
    return 0.0;
  }

  [[nodiscard]] double mean(const InnovationSpec& eps) const {
    switch (kind) {
      case Kind::constant: return k0;
      case Kind::linear: return k0;
      case Kind::abs: return k0 + k1 * eps.abs_moment(1.0);
      case Kind::square: return k0 + k1 * eps.variance;
    }
    return 0.0;
  }

  /// True when the function is >= 0 for every innovation value.
  [[nodiscard]] bool nonnegative() const noexcept {
    switch (kind) {
      case Kind::constant: return k0 >= 0.0;
      case Kind::linear: return k0 >= 0.0 && k1 == 0.0;
      case Kind::abs:
      case Kind::square: return k0 >= 0.0 && k1 >= 0.0;
    }
    return false;
  }
};

inline const char* to_string(CoefficientFunction::Kind k) noexcept {
  switch (k) {
    case CoefficientFunction::Kind::constant: return "constant";
    case CoefficientFunction::Kind::linear: return "linear";
    case CoefficientFunction::Kind::abs: return "abs";
    case CoefficientFunction::Kind::square: return "square";
  }
  return "?";
}

namespace family {

/// X_t = eps_t.
struct Iid {
  InnovationSpec innovation;
};

/// X_t = sum_j coeffs[j-1] X_{t-j} + eps_t.
struct Ar {
  std::vector<double> coeffs;
  InnovationSpec innovation;
};

/// X_t - sum_i ar[i-1] X_{t-i} = eta_t - sum_j ma[j-1] eta_{t-j}.
///
/// eta is the innovation sequence itself, or the output of `driver` (for
/// instance a GARCH recursion, giving ARMA-GARCH) fed by the innovations.
struct Arma {
  std::vector<double> ar;
  std::vector<double> ma;
  InnovationSpec innovation;
  std::shared_ptr<const ModelSpec> driver;
};

/// X_n = [alpha1 + beta1 exp(-a X_{n-1}^2)] X_{n-1} + eps_n.
struct Expar {
  double alpha1 = 0.0;
  double beta1 = 0.0;
  double a = 1.0;
  InnovationSpec innovation;
};

/// AR(2) with ARCH(2) errors:
/// X_n = t1 X_{n-1} + t2 X_{n-2} + eps_n sqrt(t3^2 + t4^2 X_{n-1}^2 + t5^2 X_{n-2}^2).
struct ArArch {
  std::array<double, 5> theta{};
  InnovationSpec innovation;
};

/// Subdiagonal bilinear model
/// X_t = sum_{j=1}^p a_j X_{t-j} + sum_{j=0}^q c_j eps_{t-j}
///       + sum_{j=0}^P sum_{k=1}^Q b_{jk} X_{t-j-k} eps_{t-k}.
/// `c` holds c_0..c_q; `b[j][k-1]` holds b_{jk}.
struct Bilinear {
  std::vector<double> a;
  std::vector<double> c{1.0};
  std::vector<std::vector<double>> b;
  InnovationSpec innovation;
};

/// Asymmetric power GARCH(r, s):
/// X_t = eps_t sqrt(h_t),
/// h_t^{power/2} = alpha0 + sum_j alpha_j (|X_{t-j}| - gamma X_{t-j})^power
///                 + sum_j beta_j h_{t-j}^{power/2}.
struct AsymGarch {
  double alpha0 = 0.1;
  std::vector<double> alpha;
  std::vector<double> beta;
  double power = 2.0;
  double gamma = 0.0;
  InnovationSpec innovation;
};

/// Signed volatility model: X_t = eps_t |s_t|^{1/power},
/// s_t = g(eps_{t-1}) + c(eps_{t-1}) s_{t-1}.
struct SignedVol {
  CoefficientFunction g;
  CoefficientFunction c;
  double power = 2.0;
  InnovationSpec innovation;
};

/// Random coefficient AR: Y_t = (A0 + A1 eps_t) Y_{t-1} + b0 + b1 eps_t,
/// X_t is the first coordinate of Y_t. Matrices are row-major dim x dim.
struct RcAr {
  std::size_t dim = 1;
  std::vector<double> a0;
  std::vector<double> a1;
  std::vector<double> b0;
  std::vector<double> b1;
  InnovationSpec innovation;
};

} // namespace family

using Family = std::variant<family::Iid, family::Ar, family::Arma, family::Expar,
                            family::ArArch, family::Bilinear, family::AsymGarch,
                            family::SignedVol, family::RcAr>;

/// Spectral radius of the companion matrix of x_t = sum_j coeffs[j-1] x_{t-j}.
inline double companion_spectral_radius(std::span<const double> coeffs) {
  const auto p = static_cast<Eigen::Index>(coeffs.size());
  if (p == 0) return 0.0;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index j = 0; j < p; ++j) c(0, j) = coeffs[static_cast<std::size_t>(j)];
  for (Eigen::Index i = 1; i < p; ++i) c(i, i - 1) = 1.0;
  return c.eigenvalues().cwiseAbs().maxCoeff();
}

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void validate_family(const Family& f);

} // namespace detail

/// One stochastic recursion plus its innovation law. Parameters are
/// validated on construction.
struct ModelSpec {
  Family family;

  template <class F>
    requires std::is_constructible_v<Family, F&&>
  ModelSpec(F&& f) : family(std::forward<F>(f)) {  // NOLINT(google-explicit-constructor)
    detail::validate_family(family);
  }

  [[nodiscard]] const InnovationSpec& innovation() const {
    return std::visit([](const auto& m) -> const InnovationSpec& { return m.innovation; }, family);
  }

  [[nodiscard]] std::string name() const {
    return std::visit(
        [](const auto& m) -> std::string {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, family::Iid>) return "iid";
          else if constexpr (std::is_same_v<T, family::Ar>) return "ar";
          else if constexpr (std::is_same_v<T, family::Arma>) return "arma";
          else if constexpr (std::is_same_v<T, family::Expar>) return "expar";
          else if constexpr (std::is_same_v<T, family::ArArch>) return "ar_arch";
          else if constexpr (std::is_same_v<T, family::Bilinear>) return "bilinear";
          else if constexpr (std::is_same_v<T, family::AsymGarch>) return "asym_garch";
          else if constexpr (std::is_same_v<T, family::SignedVol>) return "signed_vol";
          else return "rc_ar";
        },
        family);
  }

  template <class T>
  [[nodiscard]] const T* as() const noexcept {
    return std::get_if<T>(&family);
  }
};

namespace detail {

inline void validate_family(const Family& f) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        m.innovation.validate();
        if constexpr (std::is_same_v<T, family::Ar>) {
          require(all_finite(m.coeffs), "ar coefficients must be finite");
        } else if constexpr (std::is_same_v<T, family::Arma>) {
          require(all_finite(m.ar) && all_finite(m.ma), "arma coefficients must be finite");
          const double rho = companion_spectral_radius(m.ar);
          if (rho >= 1.0) throw StabilityError(rho);
        } else if constexpr (std::is_same_v<T, family::Expar>) {
          require(std::isfinite(m.alpha1) && std::isfinite(m.beta1), "expar coefficients must be finite");
          require(m.a > 0.0 && std::isfinite(m.a), "expar requires a > 0");
        } else if constexpr (std::is_same_v<T, family::ArArch>) {
          require(all_finite(m.theta), "ar_arch coefficients must be finite");
        } else if constexpr (std::is_same_v<T, family::Bilinear>) {
          require(!m.c.empty(), "bilinear needs c_0");
          require(all_finite(m.a) && all_finite(m.c), "bilinear coefficients must be finite");
          const std::size_t q = m.b.empty() ? 0 : m.b.front().size();
          for (const auto& row : m.b) {
            require(row.size() == q, "bilinear b rows must share one length Q");
            require(all_finite(row), "bilinear coefficients must be finite");
          }
        } else if constexpr (std::is_same_v<T, family::AsymGarch>) {
          require(m.alpha0 > 0.0, "asym_garch requires alpha0 > 0");
          require(std::all_of(m.alpha.begin(), m.alpha.end(), [](double a) { return a >= 0.0; }),
                  "asym_garch requires alpha_j >= 0");
          require(std::all_of(m.beta.begin(), m.beta.end(), [](double b) { return b >= 0.0; }),
                  "asym_garch requires beta_j >= 0");
          require(m.power >= 1.0, "asym_garch requires power >= 1");
          require(m.gamma > -1.0 && m.gamma < 1.0, "asym_garch requires gamma in (-1, 1)");
          require(all_finite(m.alpha) && all_finite(m.beta), "asym_garch coefficients must be finite");
        } else if constexpr (std::is_same_v<T, family::SignedVol>) {
          require(m.power >= 1.0, "signed_vol requires power >= 1");
        } else if constexpr (std::is_same_v<T, family::RcAr>) {
          const std::size_t d = m.dim;
          require(d >= 1, "rc_ar dimension must be >= 1");
          require(m.a0.size() == d * d && m.a1.size() == d * d, "rc_ar matrices must be dim x dim");
          require(m.b0.size() == d && m.b1.size() == d, "rc_ar vectors must have length dim");
          require(all_finite(m.a0) && all_finite(m.a1) && all_finite(m.b0) && all_finite(m.b1),
                  "rc_ar coefficients must be finite");
        }
      },
      f);
  if (const auto* arma = std::get_if<family::Arma>(&f); arma && arma->driver) {
    if (arma->driver->as<family::Arma>())
      throw DomainError("arma driver may not itself be an arma model");
  }
}

/// Fixed-length lag buffer, index 0 is the most recent value.
class Lags {
public:
  explicit Lags(std::size_t n = 0) : v_(n, 0.0) {}
  void push(double x) {
    if (v_.empty()) return;
    std::copy_backward(v_.begin(), v_.end() - 1, v_.end());
    v_.front() = x;
  }
  /// Value at lag `lag` >= 1, zero beyond the buffer.
  [[nodiscard]] double at(std::size_t lag) const noexcept {
    return lag >= 1 && lag <= v_.size() ? v_[lag - 1] : 0.0;
  }

private:
  std::vector<double> v_;
};

} // namespace detail

/// Deterministic one-step transition of a model. Copying a Recursion copies
/// its state; two copies fed identical innovations stay identical.
class Recursion {
public:
  explicit Recursion(const ModelSpec& spec) : state_(make_state(spec)) {}

  /// Advances one step with innovation `eps` and returns the new X.
  double next(double eps) {
    return std::visit([eps](auto& s) { return s.next(eps); }, state_);
  }

private:
  struct IidState {
    double next(double eps) const noexcept { return eps; }
  };
  struct ArState {
    std::vector<double> phi;
    detail::Lags x;
    double next(double eps) {
      double v = eps;
      for (std::size_t j = 0; j < phi.size(); ++j) v += phi[j] * x.at(j + 1);
      x.push(v);
      return v;
    }
  };
  struct ArmaState {
    std::vector<double> ar, ma;
    detail::Lags x, eta;
    std::vector<Recursion> driver;  // empty or exactly one
    double next(double eps) {
      const double e = driver.empty() ? eps : driver.front().next(eps);
      double v = e;
      for (std::size_t i = 0; i < ar.size(); ++i) v += ar[i] * x.at(i + 1);
      for (std::size_t j = 0; j < ma.size(); ++j) v -= ma[j] * eta.at(j + 1);
      x.push(v);
      eta.push(e);
      return v;
    }
  };
  struct ExparState {
    double alpha1, beta1, a, prev = 0.0;
    double next(double eps) noexcept {
      prev = (alpha1 + beta1 * std::exp(-a * prev * prev)) * prev + eps;
      return prev;
    }
  };
  struct ArArchState {
    std::array<double, 5> t;
    double x1 = 0.0, x2 = 0.0;
    double next(double eps) noexcept {
      const double scale = std::sqrt(t[2] * t[2] + t[3] * t[3] * x1 * x1 + t[4] * t[4] * x2 * x2);
      const double v = t[0] * x1 + t[1] * x2 + eps * scale;
      x2 = x1;
      x1 = v;
      return v;
    }
  };
  struct BilinearState {
    family::Bilinear m;
    detail::Lags x, e;
    double next(double eps) {
      double v = m.c[0] * eps;
      for (std::size_t j = 1; j <= m.a.size(); ++j) v += m.a[j - 1] * x.at(j);
      for (std::size_t j = 1; j < m.c.size(); ++j) v += m.c[j] * e.at(j);
      for (std::size_t j = 0; j < m.b.size(); ++j)
        for (std::size_t k = 1; k <= m.b[j].size(); ++k)
          v += m.b[j][k - 1] * x.at(j + k) * e.at(k);
      x.push(v);
      e.push(eps);
      return v;
    }
  };
  struct AsymGarchState {
    family::AsymGarch m;
    detail::Lags x, hp;  // hp holds h^{power/2}
    double next(double eps) {
      double level = m.alpha0;
      for (std::size_t j = 1; j <= m.alpha.size(); ++j) {
        const double xl = x.at(j);
        level += m.alpha[j - 1] * std::pow(std::abs(xl) - m.gamma * xl, m.power);
      }
      for (std::size_t j = 1; j <= m.beta.size(); ++j) level += m.beta[j - 1] * hp.at(j);
      const double h = std::pow(level, 2.0 / m.power);
      const double v = eps * std::sqrt(h);
      x.push(v);
      hp.push(level);
      return v;
    }
  };
  struct SignedVolState {
    family::SignedVol m;
    double prev_eps = 0.0, prev_s = 0.0;
    double next(double eps) noexcept {
      const double s = m.g(prev_eps) + m.c(prev_eps) * prev_s;
      prev_s = s;
      prev_eps = eps;
      return eps * std::pow(std::abs(s), 1.0 / m.power);
    }
  };
  struct RcArState {
    family::RcAr m;
    std::vector<double> y, scratch;
    double next(double eps) {
      const std::size_t d = m.dim;
      for (std::size_t i = 0; i < d; ++i) {
        double v = m.b0[i] + m.b1[i] * eps;
        for (std::size_t j = 0; j < d; ++j) v += (m.a0[i * d + j] + m.a1[i * d + j] * eps) * y[j];
        scratch[i] = v;
      }
      y.swap(scratch);
      return y[0];
    }
  };

  using State = std::variant<IidState, ArState, ArmaState, ExparState, ArArchState,
                             BilinearState, AsymGarchState, SignedVolState, RcArState>;

  static State make_state(const ModelSpec& spec) {
    return std::visit(
        [](const auto& m) -> State {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, family::Iid>) {
            return IidState{};
          } else if constexpr (std::is_same_v<T, family::Ar>) {
            return ArState{m.coeffs, detail::Lags(m.coeffs.size())};
          } else if constexpr (std::is_same_v<T, family::Arma>) {
            ArmaState s{m.ar, m.ma, detail::Lags(m.ar.size()), detail::Lags(m.ma.size()), {}};
            if (m.driver) s.driver.emplace_back(*m.driver);
            return s;
          } else if constexpr (std::is_same_v<T, family::Expar>) {
            return ExparState{m.alpha1, m.beta1, m.a};
          } else if constexpr (std::is_same_v<T, family::ArArch>) {
            return ArArchState{m.theta};
          } else if constexpr (std::is_same_v<T, family::Bilinear>) {
            const std::size_t bq = m.b.empty() ? 0 : m.b.front().size();
            const std::size_t x_lags = std::max(m.a.size(), m.b.empty() ? 0 : (m.b.size() - 1) + bq);
            const std::size_t e_lags = std::max(m.c.size() - 1, bq);
            return BilinearState{m, detail::Lags(x_lags), detail::Lags(e_lags)};
          } else if constexpr (std::is_same_v<T, family::AsymGarch>) {
            return AsymGarchState{m, detail::Lags(m.alpha.size()), detail::Lags(m.beta.size())};
          } else if constexpr (std::is_same_v<T, family::SignedVol>) {
            return SignedVolState{m};
          } else {
            return RcArState{m, std::vector<double>(m.dim, 0.0), std::vector<double>(m.dim, 0.0)};
          }
        },
        spec.family);
  }

  State state_;
};

/// A finite realization X_1..X_n with provenance.
struct TimeSeries {
  std::vector<double> values;
  std::optional<ModelSpec> spec;
  std::uint64_t seed = 0;
  std::size_t burn_in = 0;

  TimeSeries() = default;
  explicit TimeSeries(std::vector<double> v, std::optional<ModelSpec> s = std::nullopt,
                      std::uint64_t seed_ = 0, std::size_t burn = 0)
      : values(std::move(v)), spec(std::move(s)), seed(seed_), burn_in(burn) {
    if (values.size() < 2) throw DomainError("a time series needs n >= 2");
    if (!detail::all_finite(values)) throw DomainError("time series values must be finite");
  }

  [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
  [[nodiscard]] std::span<const double> view() const noexcept { return values; }
  operator std::span<const double>() const noexcept { return values; }  // NOLINT
};

inline constexpr std::size_t kDefaultBurnIn = 1000;
inline constexpr double kExplosionBound = 1e12;

namespace detail {

inline void check_finite_step(double x, std::size_t step) {
  if (!std::isfinite(x) || std::abs(x) > kExplosionBound) throw ExplosionError(step, x);
}

/// Runs `steps` transitions drawing innovations from `rng`; writes the last
/// `keep` outputs into `out` (may be null when keep == 0). `step_offset`
/// shifts the step index reported on explosion.
inline void drive(Recursion& rec, InnovationSampler& draw, Rng& rng, std::size_t steps,
                  std::size_t keep, double* out, std::size_t step_offset = 0) {
  const std::size_t skip = steps - keep;
  for (std::size_t t = 0; t < steps; ++t) {
    const double x = rec.next(draw(rng));
    check_finite_step(x, step_offset + t + 1);
    if (t >= skip) out[t - skip] = x;
  }
}

} // namespace detail

/// Simulates n values after discarding `burn_in` steps from the zero state.
inline TimeSeries simulate(const ModelSpec& spec, std::size_t n, std::size_t burn_in,
                           std::uint64_t seed) {
  if (n < 2) throw DomainError("simulate requires n >= 2");
  Recursion rec(spec);
  InnovationSampler draw(spec.innovation());
  Rng rng = Rng::stream(seed, 0);
  std::vector<double> out(n);
  detail::drive(rec, draw, rng, burn_in + n, n, out.data());
  return TimeSeries(std::move(out), spec, seed, burn_in);
}

inline TimeSeries simulate(const ModelSpec& spec, std::size_t n, std::uint64_t seed) {
  return simulate(spec, n, kDefaultBurnIn, seed);
}

/// Two trajectories sharing eps_1..eps_n and differing only in the
/// pre-sample innovations.
struct CoupledPair {
  TimeSeries primary;
  TimeSeries coupled;
  double primary_start = 0.0;  // X_0
  double coupled_start = 0.0;  // X'_0
  std::vector<double> moment_trace;  // filled by gmc
};

/// Builds a coupled pair. Each trajectory runs `burn_in` pre-sample steps on
/// its own innovation stream, then both receive the same eps_1..eps_n.
inline CoupledPair simulate_coupled(const ModelSpec& spec, std::size_t n, std::uint64_t seed,
                                    std::size_t burn_in = kDefaultBurnIn) {
  if (n < 2) throw DomainError("simulate_coupled requires n >= 2");
  if (burn_in == 0) throw DomainError("simulate_coupled needs burn_in >= 1 to form the pre-sample");
  Recursion primary(spec);
  Recursion coupled(spec);
  InnovationSampler draw(spec.innovation());
  Rng past = Rng::stream(seed, 1);
  Rng past_copy = Rng::stream(seed, 2);
  Rng shared = Rng::stream(seed, 3);

  double x0 = 0.0, x0c = 0.0;
  detail::drive(primary, draw, past, burn_in, 1, &x0);
  InnovationSampler draw_copy(spec.innovation());
  detail::drive(coupled, draw_copy, past_copy, burn_in, 1, &x0c);

  std::vector<double> a(n), b(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double eps = draw(shared);
    a[t] = primary.next(eps);
    b[t] = coupled.next(eps);
    detail::check_finite_step(a[t], burn_in + t + 1);
    detail::check_finite_step(b[t], burn_in + t + 1);
  }
  CoupledPair pair{TimeSeries(std::move(a), spec, seed, burn_in),
                   TimeSeries(std::move(b), spec, seed, burn_in), x0, x0c, {}};
  return pair;
}

/// Applies X_t - sum ar_i X_{t-i} = eta_t - sum ma_j eta_{t-j} to an
/// arbitrary input, zero initial state; the first `burn_in` outputs are
/// dropped.
inline TimeSeries arma_filter(const TimeSeries& innovations, std::span<const double> ar,
                              std::span<const double> ma, std::size_t burn_in = 0) {
  const double rho = companion_spectral_radius(ar);
  if (rho >= 1.0) throw StabilityError(rho);
  if (burn_in + 2 > innovations.size())
    throw DomainError("arma_filter burn-in leaves fewer than two values");
  detail::Lags x(ar.size()), eta(ma.size());
  std::vector<double> out;
  out.reserve(innovations.size() - burn_in);
  for (std::size_t t = 0; t < innovations.size(); ++t) {
    const double e = innovations.values[t];
    double v = e;
    for (std::size_t i = 0; i < ar.size(); ++i) v += ar[i] * x.at(i + 1);
    for (std::size_t j = 0; j < ma.size(); ++j) v -= ma[j] * eta.at(j + 1);
    x.push(v);
    eta.push(e);
    detail::check_finite_step(v, t + 1);
    if (t >= burn_in) out.push_back(v);
  }
  return TimeSeries(std::move(out), innovations.spec, innovations.seed, innovations.burn_in + burn_in);
}

/// ARMA(p, q) reduction X_t - sum ar X = u_t - sum ma u with white noise u of
/// the given variance. Every family with a closed-form second-order
/// structure maps to one.
struct LinearForm {
  std::vector<double> ar;
  std::vector<double> ma;
  double noise_variance = 1.0;
};

/// Second-order reduction of `spec`; throws UnsupportedFamily otherwise.
inline LinearForm linear_form(const ModelSpec& spec) {
  return std::visit(
      [&spec](const auto& m) -> LinearForm {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, family::Iid>) {
          return {{}, {}, m.innovation.variance};
        } else if constexpr (std::is_same_v<T, family::Ar>) {
          const double rho = companion_spectral_radius(m.coeffs);
          if (rho >= 1.0) throw StabilityError(rho);
          return {m.coeffs, {}, m.innovation.variance};
        } else if constexpr (std::is_same_v<T, family::Arma>) {
          double var = m.innovation.variance;
          if (m.driver) {
            const LinearForm inner = linear_form(*m.driver);
            if (!inner.ar.empty() || !inner.ma.empty())
              throw UnsupportedFamily("arma driver must be white noise for a closed-form autocovariance");
            var = inner.noise_variance;
          }
          return {m.ar, m.ma, var};
        } else if constexpr (std::is_same_v<T, family::ArArch>) {
          const auto& t = m.theta;
          if (t[1] != 0.0 || t[4] != 0.0)
            throw UnsupportedFamily("ar_arch has a closed form only with theta2 = theta5 = 0");
          const double v = m.innovation.variance;
          const double denom = 1.0 - t[0] * t[0] - v * t[3] * t[3];
          if (!(denom > 0.0)) throw UnsupportedFamily("ar_arch parameters give infinite variance");
          const double r0 = v * t[2] * t[2] / denom;
          return {{t[0]}, {}, r0 * (1.0 - t[0] * t[0])};
        } else if constexpr (std::is_same_v<T, family::AsymGarch>) {
          if (m.power != 2.0)
            throw UnsupportedFamily("asym_garch has a closed-form variance only for power = 2");
          const double v = m.innovation.variance;
          // symmetric innovations: E(|e| - gamma e)^2 = (1 + gamma^2) v
          const double z2 = (1.0 + m.gamma * m.gamma) * v;
          double persistence = 0.0;
          for (double a : m.alpha) persistence += a * z2;
          for (double b : m.beta) persistence += b;
          if (!(persistence < 1.0))
            throw UnsupportedFamily("asym_garch parameters give infinite variance");
          const double mean_h = m.alpha0 / (1.0 - persistence);
          return {{}, {}, v * mean_h};
        } else if constexpr (std::is_same_v<T, family::SignedVol>) {
          if (m.power != 2.0 || !m.g.nonnegative() || !m.c.nonnegative())
            throw UnsupportedFamily(
                "signed_vol has a closed-form variance only for power = 2 with nonnegative g and c");
          const double ec = m.c.mean(m.innovation);
          if (!(ec < 1.0)) throw UnsupportedFamily("signed_vol parameters give infinite variance");
          const double mean_s = m.g.mean(m.innovation) / (1.0 - ec);
          return {{}, {}, m.innovation.variance * mean_s};
        } else {
          throw UnsupportedFamily("no closed-form second-order structure for " + spec.name() +
                                  "; use the Monte Carlo oracle spectrum");
        }
      },
      spec.family);
}

/// Exact autocovariances r(0..max_lag). Linear families are summed over
/// psi-weights until the geometric tail drops below 1e-20 of the total.
inline std::vector<double> theoretical_acov(const ModelSpec& spec, std::size_t max_lag) {
  const LinearForm lf = linear_form(spec);
  const double rho = companion_spectral_radius(lf.ar);
  if (rho >= 1.0) throw StabilityError(rho);
  const std::size_t order = lf.ar.size() + lf.ma.size();
  std::size_t tail = order + 1;
  if (rho > 0.0) tail += static_cast<std::size_t>(std::ceil(std::log(1e-20) / std::log(rho))) + 16;
  const std::size_t terms = max_lag + tail + 1;
  if (terms > 50'000'000) throw UnsupportedFamily("AR polynomial too close to the unit circle");

  std::vector<double> psi(terms, 0.0);
  psi[0] = 1.0;
  for (std::size_t j = 1; j < terms; ++j) {
    double v = j <= lf.ma.size() ? -lf.ma[j - 1] : 0.0;
    for (std::size_t i = 1; i <= lf.ar.size() && i <= j; ++i) v += lf.ar[i - 1] * psi[j - i];
    psi[j] = v;
  }
  std::vector<double> r(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    stats::CompensatedSum s;
    for (std::size_t j = 0; j + k < terms; ++j) s.add(psi[j] * psi[j + k]);
    r[k] = lf.noise_variance * s.value();
  }
  return r;
}

/// f(lambda) = (1/2pi) sum_k r(k) e^{ik lambda} in closed transfer-function form.
inline double theoretical_spectrum(const ModelSpec& spec, double lambda) {
  const LinearForm lf = linear_form(spec);
  const double rho = companion_spectral_radius(lf.ar);
  if (rho >= 1.0) throw StabilityError(rho);
  const std::complex<double> z = std::polar(1.0, lambda);
  std::complex<double> num = 1.0, den = 1.0, zk = 1.0;
  const std::size_t deg = std::max(lf.ar.size(), lf.ma.size());
  for (std::size_t k = 1; k <= deg; ++k) {
    zk *= z;
    if (k <= lf.ma.size()) num -= lf.ma[k - 1] * zk;
    if (k <= lf.ar.size()) den -= lf.ar[k - 1] * zk;
  }
  return lf.noise_variance / (2.0 * std::numbers::pi) * std::norm(num) / std::norm(den);
}

enum class ContractionMethod { analytic, monte_carlo };

inline const char* to_string(ContractionMethod m) noexcept {
  return m == ContractionMethod::analytic ? "analytic" : "monte_carlo";
}

/// Lipschitz coefficients a_j = ||H_j(eps)||_alpha^{alpha'} and the verdict
/// sum a_j < 1, alpha' = min(1, alpha).
struct ContractionReport {
  double alpha = 0.0;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;  // zeros for analytic entries
  double total = 0.0;
  bool satisfied = false;
  ContractionMethod method = ContractionMethod::analytic;
};

namespace detail {

inline bool is_integer(double x) noexcept { return x == std::floor(x) && x < 64.0; }

inline double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

/// E(c + d|eps|)^alpha for c, d >= 0 and integer alpha.
inline double shifted_abs_moment(double c, double d, int alpha, const InnovationSpec& eps) {
  double s = 0.0;
  for (int i = 0; i <= alpha; ++i)
    s += binomial(alpha, i) * std::pow(c, alpha - i) * std::pow(d, i) * eps.abs_moment(i);
  return s;
}

} // namespace detail

/// Coefficients for families whose transition is Markov in the lagged
/// values (ar, expar, ar_arch; iid has no lags). Non-integer alpha with
/// ar_arch uses `mc_draws` Monte Carlo innovation draws.
inline ContractionReport contraction_coefficients(const ModelSpec& spec, double alpha,
                                                  std::size_t mc_draws = 200'000,
                                                  std::uint64_t seed = 0) {
  if (!(alpha > 0.0)) throw DomainError("contraction moment order alpha must be > 0");
  const double ap = std::min(1.0, alpha);
  ContractionReport rep;
  rep.alpha = alpha;

  if (spec.as<family::Iid>()) {
    // no state dependence
  } else if (const auto* ar = spec.as<family::Ar>()) {
    for (double phi : ar->coeffs) rep.coefficients.push_back(std::pow(std::abs(phi), ap));
  } else if (const auto* ex = spec.as<family::Expar>()) {
    rep.coefficients.push_back(std::pow(std::abs(ex->alpha1) + std::abs(ex->beta1), ap));
  } else if (const auto* aa = spec.as<family::ArArch>()) {
    const auto& eps = aa->innovation;
    if (!eps.has_moment(alpha)) throw DomainError("innovations lack the moment of order alpha");
    for (std::size_t j = 0; j < 2; ++j) {
      const double c = std::abs(aa->theta[j]);
      const double d = std::abs(aa->theta[j + 3]);
      if (d == 0.0 || detail::is_integer(alpha)) {
        const double m = d == 0.0 ? std::pow(c, alpha)
                                  : detail::shifted_abs_moment(c, d, static_cast<int>(alpha), eps);
        rep.coefficients.push_back(std::pow(m, ap / alpha));
      } else {
        rep.method = ContractionMethod::monte_carlo;
      }
    }
    if (rep.method == ContractionMethod::monte_carlo) {
      rep.coefficients.clear();
      InnovationSampler draw(eps);
      Rng rng = Rng::stream(seed, 0);
      std::vector<double> h1(mc_draws), h2(mc_draws);
      for (std::size_t i = 0; i < mc_draws; ++i) {
        const double e = std::abs(draw(rng));
        h1[i] = std::pow(std::abs(aa->theta[0]) + std::abs(aa->theta[3]) * e, alpha);
        h2[i] = std::pow(std::abs(aa->theta[1]) + std::abs(aa->theta[4]) * e, alpha);
      }
      for (const auto* h : {&h1, &h2}) {
        const double m = stats::mean(*h);
        const double se_m = stats::standard_error(*h);
        const double expo = ap / alpha;
        rep.coefficients.push_back(std::pow(m, expo));
        rep.standard_errors.push_back(expo * std::pow(m, expo - 1.0) * se_m);  // delta method
      }
    }
  } else {
    throw UnsupportedFamily("no Lipschitz coefficients H_j for " + spec.name() +
                            "; use gmc::garch_moment_matrix or gmc::estimate_decay");
  }
  if (rep.standard_errors.empty()) rep.standard_errors.assign(rep.coefficients.size(), 0.0);
  for (double a : rep.coefficients) rep.total += a;
  rep.satisfied = rep.total < 1.0;
  return rep;
}

/// Markovian form of a bilinear model:
/// X_t = H Z_{t-1} + c_0 eps_t,  Z_t = (A + B eps_t) Z_{t-1} + c eps_t + d eps_t^2.
///
/// Z_t stacks X_{t-r+1..t} (r = P lags, absent when P = 0) followed by
/// W_t[i] = sum_{k>=i} [a_k X_{t+i-k} + (c_k + sum_l b_{lk} X_{t+i-k-l}) eps_{t+i-k}],
/// i = 1..max(p, q, Q), the part of X_{t+i} already fixed at time t.
struct BilinearMarkovForm {
  std::size_t r = 0;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::RowVectorXd H;
  Eigen::VectorXd c;
  Eigen::VectorXd d;
  double c0 = 1.0;
};

inline BilinearMarkovForm bilinear_markov_form(const family::Bilinear& m) {
  const std::size_t p = m.a.size();
  const std::size_t q = m.c.size() - 1;
  const std::size_t bq = m.b.empty() ? 0 : m.b.front().size();
  const std::size_t bp = m.b.empty() ? 0 : m.b.size() - 1;
  const std::size_t r = bq == 0 ? 0 : bp;
  const std::size_t w = std::max({p, q, bq, std::size_t{1}});
  const auto s = static_cast<Eigen::Index>(r + w);
  const double c0 = m.c[0];

  auto a_at = [&](std::size_t i) { return i >= 1 && i <= p ? m.a[i - 1] : 0.0; };
  auto c_at = [&](std::size_t i) { return i <= q ? m.c[i] : 0.0; };
  auto b_at = [&](std::size_t l, std::size_t k) {
    return l <= bp && k >= 1 && k <= bq ? m.b[l][k - 1] : 0.0;
  };

  BilinearMarkovForm f;
  f.r = r;
  f.c0 = c0;
  f.A = Eigen::MatrixXd::Zero(s, s);
  f.B = Eigen::MatrixXd::Zero(s, s);
  f.H = Eigen::RowVectorXd::Zero(s);
  f.c = Eigen::VectorXd::Zero(s);
  f.d = Eigen::VectorXd::Zero(s);
  const auto ri = static_cast<Eigen::Index>(r);
  f.H(ri) = 1.0;
  // lagged X block: shift, newest entry X_t = W_{t-1}[1] + c0 eps_t
  for (Eigen::Index i = 0; i + 1 < ri; ++i) f.A(i, i + 1) = 1.0;
  if (r > 0) {
    f.A(ri - 1, ri) = 1.0;
    f.c(ri - 1) = c0;
  }
  for (std::size_t i = 1; i <= w; ++i) {
    const auto row = static_cast<Eigen::Index>(r + i - 1);
    if (i < w) f.A(row, row + 1) = 1.0;
    f.A(row, ri) += a_at(i);
    f.c(row) = a_at(i) * c0 + c_at(i);
    f.B(row, ri) += b_at(0, i);
    f.d(row) = b_at(0, i) * c0;
    for (std::size_t l = 1; l <= r; ++l) f.B(row, ri - static_cast<Eigen::Index>(l)) += b_at(l, i);
  }
  return f;
}

} // namespace nlspec
