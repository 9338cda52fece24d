#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlspec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A parameter lies outside its admissible domain.
class DomainError : public Error {
public:
  using Error::Error;
};

/// A recursion left the finite range; `step` counts from 1 over burn-in plus sample.
class ExplosionError : public Error {
public:
  ExplosionError(std::size_t step, double value)
      : Error("recursion exploded at step " + std::to_string(step) +
              " (value " + std::to_string(value) + ")"),
        step_(step) {}
  [[nodiscard]] std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

/// AR polynomial with companion spectral radius >= 1.
class StabilityError : public Error {
public:
  explicit StabilityError(double radius)
      : Error("unstable autoregressive polynomial: spectral radius " +
              std::to_string(radius)),
        radius_(radius) {}
  [[nodiscard]] double spectral_radius() const noexcept { return radius_; }

private:
  double radius_;
};

/// No closed form for the requested quantity on this model family.
class UnsupportedFamily : public Error {
public:
  using Error::Error;
};

class BandwidthError : public Error {
public:
  using Error::Error;
};

/// The window violates the local-quadratic condition (no c2 constant).
class WindowConditionError : public Error {
public:
  using Error::Error;
};

class DegeneratePilot : public Error {
public:
  using Error::Error;
};

class SizeError : public Error {
public:
  using Error::Error;
};

/// Bad experiment or CLI configuration.
class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace nlspec
