#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "nlspec/models.hpp"
#include "nlspec/spectral.hpp"
#include "nlspec/stats.hpp"

using namespace nlspec;
using std::numbers::pi;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
  return simulate(ModelSpec(family::Iid{InnovationSpec::gaussian()}), n, 0, seed).values;
}

std::vector<double> cosine_series(std::size_t n, std::size_t j) {
  std::vector<double> x(n);
  const double th = kTwoPi * static_cast<double>(j) / static_cast<double>(n);
  for (std::size_t k = 1; k <= n; ++k) x[k - 1] = std::cos(static_cast<double>(k) * th);
  return x;
}

double integral_of_square(const Window& w) {
  using boost::math::quadrature::gauss_kronrod;
  auto sq = [&](double t) { return w(t) * w(t); };
  // split at the parzen knot so each piece is smooth
  const double lo = gauss_kronrod<double, 61>::integrate(sq, 0.0, 0.5, 15, 1e-14);
  const double hi = gauss_kronrod<double, 61>::integrate(sq, 0.5, 1.0, 15, 1e-14);
  return 2.0 * (lo + hi);
}

}  // namespace

TEST(FourierTransform, ConstantSeriesOverFullPeriodVanishes) {
  const std::vector<double> x(8, 1.0);
  const auto s = fourier_transform(x, kTwoPi / 8);
  EXPECT_NEAR(std::abs(s), 0.0, 1e-14);
}

TEST(FourierTransform, UnitImpulseAtFirstIndex) {
  std::vector<double> x(6, 0.0);
  x[0] = 1.0;
  for (double th : {0.0, 0.3, 2.0, -1.1}) {
    const auto s = fourier_transform(x, th);
    EXPECT_NEAR(s.real(), std::cos(th), 1e-15);
    EXPECT_NEAR(s.imag(), std::sin(th), 1e-15);
  }
}

TEST(FourierTransform, CosineAtItsOwnFrequency) {
  for (std::size_t n : {16u, 64u, 101u})
    for (std::size_t j = 1; 2 * j < n; j += 3) {
      const auto s = fourier_transform(cosine_series(n, j), kTwoPi * double(j) / double(n));
      EXPECT_NEAR(s.real(), n / 2.0, 1e-10);
      EXPECT_NEAR(s.imag(), 0.0, 1e-10);
    }
}

TEST(Periodogram, CosineSpike) {
  const std::size_t n = 64, j = 5;
  const auto p = periodogram(cosine_series(n, j));
  EXPECT_NEAR(p.ordinates[j], n / (8 * pi), 1e-11);
  for (std::size_t i = 0; i < p.ordinates.size(); ++i)
    if (i != j) {
      EXPECT_NEAR(p.ordinates[i], 0.0, 1e-11);
    }
}

TEST(Periodogram, ZeroSumSeriesHasZeroAtOrigin) {
  const std::vector<double> x{1.0, -2.0, 0.5, 0.5};
  EXPECT_NEAR(periodogram(x).ordinates[0], 0.0, 1e-16);
}

TEST(Periodogram, MatchesDirectTransform) {
  const auto x = white_noise(37, 1);
  const auto p = periodogram(x);
  for (std::size_t j = 0; j < p.ordinates.size(); ++j) {
    const double m = std::norm(fourier_transform(x, p.frequency(static_cast<long>(j))));
    EXPECT_NEAR(p.ordinates[j], m / (kTwoPi * 37), 1e-12);
    EXPECT_GE(p.ordinates[j], 0.0);
  }
}

TEST(Periodogram, WhiteNoiseMeanIsFlatSpectrum) {
  const auto p = periodogram(white_noise(4096, 2));
  std::vector<double> inner(p.ordinates.begin() + 1, p.ordinates.begin() + 1 + p.interior_count());
  EXPECT_NEAR(stats::mean(inner), 1 / kTwoPi, 0.05 / kTwoPi);
}

TEST(Periodogram, Errors) {
  EXPECT_THROW(periodogram(std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(periodogram(std::vector<double>{1.0, 2.0, 3.0}, 2), DomainError);
}

TEST(Periodogram, PaddedGridInvertsToSampleAcov) {
  for (std::size_t n : {7u, 64u, 301u}) {
    const auto x = white_noise(n, n);
    const auto p = padded_periodogram(x);
    const double r0 = sample_acov(x, 0);
    for (long k = -static_cast<long>(n) + 1; k < static_cast<long>(n); ++k)
      ASSERT_NEAR(periodogram_inverse(p, k), sample_acov(x, k), 1e-9 * r0) << "n=" << n << " k=" << k;
  }
}

TEST(Periodogram, FourierGridInvertsToCircularAcov) {
  const std::size_t n = 50;
  const auto x = white_noise(n, 3);
  const auto p = periodogram(x);
  for (long k = 1; k < static_cast<long>(n); ++k)
    EXPECT_NEAR(periodogram_inverse(p, k), sample_acov(x, k) + sample_acov(x, static_cast<long>(n) - k), 1e-12);
  EXPECT_NEAR(periodogram_inverse(p, 0), sample_acov(x, 0), 1e-12);
}

TEST(SampleAcov, Examples) {
  const std::vector<double> alt{1, -1, 1, -1};
  EXPECT_DOUBLE_EQ(sample_acov(alt, 1), -0.75);
  EXPECT_DOUBLE_EQ(sample_acov(alt, -1), -0.75);
  const std::vector<double> zero(10, 0.0);
  for (long k = 0; k < 10; ++k) EXPECT_EQ(sample_acov(zero, k), 0.0);
  const std::vector<double> x{0.5, 2.0, -1.0};
  EXPECT_DOUBLE_EQ(sample_acov(x, 0), (0.25 + 4.0 + 1.0) / 3.0);
  EXPECT_THROW(sample_acov(x, 3), DomainError);
  EXPECT_THROW(sample_acov(x, -3), DomainError);
  EXPECT_THROW(sample_acov_sequence(x, 3), DomainError);
}

TEST(Window, ProfileConstants) {
  const auto th = window_profile(WindowKind::tukey_hanning);
  EXPECT_DOUBLE_EQ(th.sq_integral, 0.75);
  EXPECT_NEAR(*th.c2, pi * pi / 4, 1e-15);
  const auto pz = window_profile(WindowKind::parzen);
  EXPECT_EQ(*pz.c2, 6.0);
  EXPECT_NEAR(pz.sq_integral, integral_of_square(pz), 1e-10);
  EXPECT_NEAR(th.sq_integral, integral_of_square(th), 1e-10);
  const auto bt = window_profile(WindowKind::bartlett);
  EXPECT_FALSE(bt.c2.has_value());
  EXPECT_NEAR(bt.sq_integral, integral_of_square(bt), 1e-10);
  EXPECT_TRUE(pz.nonneg_spectral_window);
  EXPECT_THROW(window_profile("hamming"), DomainError);
  EXPECT_EQ(window_profile("tukey-hanning").kind, WindowKind::tukey_hanning);
}

TEST(Window, ShapeInvariants) {
  for (auto k : {WindowKind::parzen, WindowKind::tukey_hanning, WindowKind::bartlett}) {
    const auto w = window_profile(k);
    EXPECT_EQ(w(0.0), 1.0);
    EXPECT_EQ(w(1.5), 0.0);
    EXPECT_EQ(w(-1.01), 0.0);
    for (double t = 0.0; t <= 1.0; t += 0.01) EXPECT_EQ(w(t), w(-t));
    // c2 as the limit of x^-2 (1 - a(x))
    if (w.c2) {
      EXPECT_NEAR((1 - w(1e-4)) / 1e-8, *w.c2, 1e-3 * *w.c2);
    }
  }
}

TEST(LagWindow, SingleLagHandExpansion) {
  const std::vector<double> x{0.3, -1.2, 0.8, 2.0, -0.4};
  const auto w = window_profile(WindowKind::tukey_hanning);
  const std::vector<double> ls{0.0, 0.7, pi};
  const auto est = lag_window_estimate(x, w, 1, ls);
  for (std::size_t i = 0; i < ls.size(); ++i) {
    const double hand = (sample_acov(x, 0) + 2 * sample_acov(x, 1) * w(1.0) * std::cos(ls[i])) / kTwoPi;
    EXPECT_NEAR(est.values[i], hand, 1e-15);
  }
  // a(1) = 0 for every window, so B_n = 1 reduces to r(0)/2pi
  EXPECT_NEAR(est.values[1], sample_acov(x, 0) / kTwoPi, 1e-15);
}

TEST(LagWindow, BandwidthErrors) {
  const auto x = white_noise(16, 4);
  const auto ls = frequency_grid(5);
  EXPECT_THROW(lag_window_estimate(x, window_profile(WindowKind::parzen), 0, ls), BandwidthError);
  EXPECT_THROW(lag_window_estimate(x, window_profile(WindowKind::parzen), 16, ls), BandwidthError);
  EXPECT_NO_THROW(lag_window_estimate(x, window_profile(WindowKind::parzen), 15, ls));
}

TEST(LagWindow, DefaultGrid) {
  const auto g = frequency_grid();
  ASSERT_EQ(g.size(), 257u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), pi);
  EXPECT_NEAR(g[128], pi / 2, 1e-15);
}

TEST(LagWindow, WhiteNoiseFlatWithinFifteenPercent) {
  const auto w = window_profile(WindowKind::parzen);
  const auto grid = frequency_grid();
  int good = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto est = lag_window_estimate(white_noise(1 << 14, 100 + seed), w, 32, grid);
    double worst = 0.0;
    for (double v : est.values) worst = std::max(worst, std::abs(v - 1 / kTwoPi));
    good += worst <= 0.15 / kTwoPi;
  }
  EXPECT_GE(good, 19);
}

TEST(LagWindow, SymmetryAndPeriodicity) {
  const auto x = white_noise(200, 5);
  const auto w = window_profile(WindowKind::tukey_hanning);
  const std::vector<double> ls{0.4, kTwoPi - 0.4, -0.4, 0.4 + kTwoPi};
  const auto est = lag_window_estimate(x, w, 12, ls);
  for (double v : est.values) EXPECT_NEAR(v, est.values[0], 1e-13);
}

TEST(EstimatorIdentity, PaddedSmootherEqualsLagWindow) {
  const auto x = white_noise(512, 6);
  const auto w = window_profile(WindowKind::parzen);
  const auto p = padded_periodogram(x);
  const std::vector<double> ls{pi / 3};
  const double a = lag_window_estimate(x, w, 16, ls).values[0];
  EXPECT_NEAR(estimate_from_periodogram(p, w, 16, pi / 3), a, 1e-9 * std::abs(a));
}

TEST(EstimatorIdentity, AllWindowsManyFrequencies) {
  const auto x = simulate(ModelSpec(family::Ar{{0.6}, InnovationSpec::gaussian()}), 97, 7).values;
  const auto p = padded_periodogram(x);
  const auto grid = frequency_grid(33);
  for (auto k : {WindowKind::parzen, WindowKind::tukey_hanning, WindowKind::bartlett}) {
    const auto w = window_profile(k);
    for (std::size_t b : {1u, 5u, 40u, 96u}) {
      const auto est = lag_window_estimate(x, w, b, grid);
      for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(estimate_from_periodogram(p, w, b, grid[i]), est.values[i],
                    1e-9 * std::max(1.0, std::abs(est.values[i])));
    }
  }
}

TEST(EstimatorIdentity, ConstantOrdinatesAgainstDoubleSum) {
  const std::size_t n = 40, b = 7;
  const double c = 2.5;
  const auto w = window_profile(WindowKind::parzen);
  Periodogram p{n, n, std::vector<double>(n / 2 + 1, c)};
  for (double lam : {0.0, 0.9, 2.2}) {
    // (1/n) sum_j c sum_{|k|<=B} a(k/B) e^{-ik(lam - w_j)}, j over a full period
    std::complex<double> s = 0.0;
    for (long j = -static_cast<long>(n - 1) / 2; j <= static_cast<long>(n / 2); ++j)
      for (long k = -static_cast<long>(b); k <= static_cast<long>(b); ++k) {
        const double om = kTwoPi * double(j) / double(n);
        s += c * w(double(k) / double(b)) * std::exp(std::complex<double>(0, -double(k) * (lam - om)));
      }
    EXPECT_NEAR(estimate_from_periodogram(p, w, b, lam), s.real() / double(n), 1e-12);
    // only k = 0 survives the sum over a full period
    EXPECT_NEAR(estimate_from_periodogram(p, w, b, lam), c, 1e-12);
  }
}

TEST(EstimatorIdentity, CosineSpikeSingleTerm) {
  const std::size_t n = 64, j = 6, b = 9;
  const auto w = window_profile(WindowKind::parzen);
  const auto p = periodogram(cosine_series(n, j));
  for (double lam : {0.2, 0.59, 1.7}) {
    // only I_{+-j} are nonzero
    const double om = kTwoPi * double(j) / double(n);
    const double direct = (n / (8 * pi)) * (lag_window_kernel(w, b, lam - om) + lag_window_kernel(w, b, lam + om)) /
                          double(n);
    EXPECT_NEAR(estimate_from_periodogram(p, w, b, lam), direct, 1e-12);
  }
}

TEST(AsymptoticVariance, Examples) {
  EXPECT_DOUBLE_EQ(asymptotic_variance(1.0, pi / 2, window_profile(WindowKind::parzen)), 151.0 / 280.0);
  EXPECT_DOUBLE_EQ(asymptotic_variance(1.0, 0.0, window_profile(WindowKind::tukey_hanning)), 1.5);
  EXPECT_DOUBLE_EQ(asymptotic_variance(2.0, pi, window_profile(WindowKind::tukey_hanning)), 6.0);
  EXPECT_THROW(asymptotic_variance(0.0, 1.0, window_profile(WindowKind::parzen)), DomainError);
}

TEST(SecondDerivative, Examples) {
  std::vector<double> iid(50, 0.0);
  iid[0] = 1.0;
  for (double l : {0.0, 1.0, pi}) EXPECT_EQ(spectral_second_derivative(iid, l), 0.0);

  const ModelSpec ar = family::Ar{{0.5}, InnovationSpec::gaussian()};
  const auto r200 = theoretical_acov(ar, 200);
  const auto r2000 = theoretical_acov(ar, 2000);
  EXPECT_NEAR(spectral_second_derivative(r200, 0.0), spectral_second_derivative(r2000, 0.0), 1e-8);

  std::vector<double> rnd = white_noise(30, 8);
  for (double l : {0.3, 1.4}) EXPECT_EQ(spectral_second_derivative(rnd, l), spectral_second_derivative(rnd, -l));
}

TEST(SecondDerivative, MatchesFiniteDifferenceOfClosedForm) {
  const ModelSpec ar = family::Ar{{0.5}, InnovationSpec::gaussian()};
  const auto r = theoretical_acov(ar, 400);
  const double l = pi / 3, h = 1e-3;
  const double fd = (theoretical_spectrum(ar, l + h) - 2 * theoretical_spectrum(ar, l) + theoretical_spectrum(ar, l - h)) /
                    (h * h);
  EXPECT_NEAR(spectral_second_derivative(r, l), fd, 1e-5);
}

TEST(AsymptoticBias, Examples) {
  EXPECT_EQ(asymptotic_bias(0.0, 10, window_profile(WindowKind::parzen)), 0.0);
  EXPECT_NEAR(asymptotic_bias(-1.0, 10, window_profile(WindowKind::parzen)), -0.06, 1e-15);
  EXPECT_THROW(asymptotic_bias(-1.0, 10, window_profile(WindowKind::bartlett)), WindowConditionError);
}

TEST(NormalizedKs, PointMassAtLogTwo) {
  // a spike series puts every interior ordinate except one at zero, so
  // use a reference that maps each ordinate onto ln 2 instead
  const auto x = white_noise(41, 9);
  const auto p = periodogram(x);
  auto f = [&](double lam) {
    const auto j = static_cast<std::size_t>(std::llround(lam / kTwoPi * 41));
    return p.ordinates[j] / std::log(2.0);
  };
  EXPECT_NEAR(normalized_periodogram_ks(x, f), 0.5, 1e-12);
}

TEST(NormalizedKs, WhiteNoiseMostlyBelowFivePercent) {
  int good = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    good += normalized_periodogram_ks(white_noise(4096, 500 + seed), [](double) { return 1 / kTwoPi; }) < 0.05;
  EXPECT_GE(good, 45);
}

TEST(NormalizedKs, Errors) {
  EXPECT_THROW(normalized_periodogram_ks(std::vector<double>{1.0, 2.0}, [](double) { return 1.0; }), DomainError);
  EXPECT_THROW(normalized_periodogram_ks(white_noise(16, 1), [](double) { return 0.0; }), DomainError);
}
