#pragma once

#include <cstdint>
#include <limits>

namespace nlspec {

/// Counter-based generator: the i-th output is a bijective mix of (key, i).
///
/// A stream is identified by its key alone, so replicate `r` of a run with
/// seed `s` can be reconstructed anywhere via `Rng::stream(s, r)` without
/// touching other streams. Satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key = 0) noexcept : key_(mix(key ^ kStreamSalt)) {}

  /// Independent stream number `index` derived from `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index) noexcept {
    Rng r;
    r.key_ = mix(mix(seed ^ kStreamSalt) + kGolden * (index + 1));
    return r;
  }

  /// Child stream of this one; does not advance the parent.
  [[nodiscard]] Rng split(std::uint64_t index) const noexcept {
    Rng r;
    r.key_ = mix(key_ + kGolden * (index + 1) + kSplitSalt);
    return r;
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return mix(key_ + kGolden * counter_++); }

  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kStreamSalt = 0x6a09e667f3bcc909ULL;
  static constexpr std::uint64_t kSplitSalt = 0xbb67ae8584caa73bULL;

  // SplitMix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

} // namespace nlspec
