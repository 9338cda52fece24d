#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "nlspec/errors.hpp"
#include "nlspec/rng.hpp"

namespace nlspec {

enum class InnovationKind { gaussian, rademacher, student_t, uniform };

inline const char* to_string(InnovationKind k) noexcept {
  switch (k) {
    case InnovationKind::gaussian: return "gaussian";
    case InnovationKind::rademacher: return "rademacher";
    case InnovationKind::student_t: return "student_t";
    case InnovationKind::uniform: return "uniform";
  }
  return "?";
}

/// Law of the i.i.d. innovations. Every kind has mean zero; only the
/// gaussian kind carries a free variance, the others are unit variance.
struct InnovationSpec {
  InnovationKind kind = InnovationKind::gaussian;
  double variance = 1.0;
  double df = 0.0;  // student_t only

  static InnovationSpec gaussian(double variance = 1.0) {
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw DomainError("gaussian innovation variance must be finite and > 0");
    return {InnovationKind::gaussian, variance, 0.0};
  }
  static InnovationSpec rademacher() { return {InnovationKind::rademacher, 1.0, 0.0}; }
  /// Student t with `df` degrees of freedom rescaled to unit variance.
  static InnovationSpec student_t(double df) {
    if (!(df > 2.0)) throw DomainError("student_t innovations need df > 2 for finite variance");
    return {InnovationKind::student_t, 1.0, df};
  }
  static InnovationSpec uniform() { return {InnovationKind::uniform, 1.0, 0.0}; }

  void validate() const {
    switch (kind) {
      case InnovationKind::gaussian: (void)gaussian(variance); break;
      case InnovationKind::student_t: (void)student_t(df); break;
      default:
        if (variance != 1.0) throw DomainError(std::string(to_string(kind)) + " innovations have unit variance");
    }
  }

  /// True when E|eps|^order is finite.
  [[nodiscard]] bool has_moment(double order) const noexcept {
    return kind != InnovationKind::student_t || order < df;
  }

  /// Warning text if a procedure needing moments of `order` is run on this law.
  [[nodiscard]] std::optional<std::string> moment_warning(double order) const {
    if (has_moment(order)) return std::nullopt;
    return "student_t(df=" + std::to_string(df) + ") innovations lack a finite moment of order " +
           std::to_string(order);
  }

  /// E|eps|^p in closed form.
  [[nodiscard]] double abs_moment(double p) const {
    if (p == 0.0) return 1.0;
    if (!(p > 0.0)) throw DomainError("absolute moment order must be > 0");
    switch (kind) {
      case InnovationKind::gaussian:
        return std::pow(2.0 * variance, p / 2.0) * std::tgamma((p + 1.0) / 2.0) /
               std::sqrt(std::numbers::pi);
      case InnovationKind::rademacher:
        return 1.0;
      case InnovationKind::uniform: {
        const double half_width = std::sqrt(3.0);
        return std::pow(half_width, p) / (p + 1.0);
      }
      case InnovationKind::student_t: {
        if (p >= df) throw DomainError("student_t moment of order >= df is infinite");
        const double scale = std::sqrt((df - 2.0) / df);
        const double t_moment = std::pow(df, p / 2.0) * std::tgamma((p + 1.0) / 2.0) *
                                std::tgamma((df - p) / 2.0) /
                                (std::sqrt(std::numbers::pi) * std::tgamma(df / 2.0));
        return std::pow(scale, p) * t_moment;
      }
    }
    return 0.0;
  }

  bool operator==(const InnovationSpec&) const = default;
};

/// Stateful sampler for one innovation law; draws come from the caller's Rng.
class InnovationSampler {
public:
  explicit InnovationSampler(const InnovationSpec& spec)
      : spec_(spec),
        normal_(0.0, std::sqrt(spec.variance)),
        student_(spec.kind == InnovationKind::student_t ? spec.df : 3.0),
        t_scale_(spec.kind == InnovationKind::student_t ? std::sqrt((spec.df - 2.0) / spec.df) : 1.0) {}

  double operator()(Rng& rng) {
    switch (spec_.kind) {
      case InnovationKind::gaussian: return normal_(rng);
      case InnovationKind::rademacher: return (rng() >> 63) != 0 ? 1.0 : -1.0;
      case InnovationKind::uniform: return std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0);
      case InnovationKind::student_t: return t_scale_ * student_(rng);
    }
    return 0.0;
  }

  [[nodiscard]] const InnovationSpec& spec() const noexcept { return spec_; }

private:
  InnovationSpec spec_;
  std::normal_distribution<double> normal_;
  std::student_t_distribution<double> student_;
  double t_scale_;
};

} // namespace nlspec
