#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "nlspec/experiments.hpp"

using namespace nlspec;
using namespace nlspec::experiments;

namespace {

constexpr double kPi = std::numbers::pi;
const InnovationSpec kGauss = InnovationSpec::gaussian();

// AR(1) with unit innovation variance, everything in closed form
double ar1_f(double phi, double l) { return 1.0 / (2 * kPi * (1 + phi * phi - 2 * phi * std::cos(l))); }
double ar1_r(double phi, std::size_t k) { return std::pow(phi, static_cast<double>(k)) / (1 - phi * phi); }

ExperimentConfig small_density() {
  auto c = ExperimentConfig::defaults(Kind::density_clt);
  c.n_list = {1024};
  c.bandwidths = {8};
  c.reps = 100;
  c.seed = 17;
  return c;
}

}  // namespace

TEST(Kinds, NamesRoundTrip) {
  for (Kind k : kAllKinds) EXPECT_EQ(parse_kind(to_string(k)), k);
  EXPECT_THROW(parse_kind("density_clt"), ConfigError);
  EXPECT_THROW(parse_kind(""), ConfigError);
}

TEST(BiasExact, Ar1Example) {
  const auto c = ExperimentConfig::defaults(Kind::bias_exact);
  const auto rep = run_experiment(c);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(rep.stat("decreasing").value, 1.0);
  EXPECT_LT(rep.stat("final_ratio_deviation").value, 0.15);

  // independent route: closed-form r(k), f and a central difference of f for f''
  const double phi = 0.5, lam = kPi / 3, h = 1e-3;
  const double fdd = (ar1_f(phi, lam + h) - 2 * ar1_f(phi, lam) + ar1_f(phi, lam - h)) / (h * h);
  const Window w = window_profile(WindowKind::parzen);
  const auto& t = rep.table("bandwidths");
  ASSERT_EQ(t.rows.size(), 3u);
  std::vector<double> dev;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::size_t b = c.bandwidths[i];
    double ef = ar1_r(phi, 0);
    for (std::size_t k = 1; k <= b; ++k)
      ef += 2 * w(double(k) / double(b)) * (1 - double(k) / double(1 << 15)) * ar1_r(phi, k) * std::cos(k * lam);
    ef /= 2 * kPi;
    const double ratio = double(b * b) * (ef - ar1_f(phi, lam)) / (6.0 * fdd);
    EXPECT_NEAR(t.rows[i][1], ef, 1e-13);
    EXPECT_NEAR(t.rows[i][5], ratio, 1e-5);
    dev.push_back(std::abs(ratio - 1));
  }
  EXPECT_GT(dev[0], dev[1]);
  EXPECT_GT(dev[1], dev[2]);
  EXPECT_LT(dev[2], 0.15);
}

TEST(BiasExact, ConfigErrors) {
  auto c = ExperimentConfig::defaults(Kind::bias_exact);
  c.window = window_profile(WindowKind::bartlett);
  EXPECT_THROW(run_experiment(c), WindowConditionError);
  c = ExperimentConfig::defaults(Kind::bias_exact);
  c.spec = family::Expar{0.5, 0.3, 1.0, kGauss};
  EXPECT_THROW(run_experiment(c), UnsupportedFamily);
  c = ExperimentConfig::defaults(Kind::bias_exact);
  c.bandwidths = {};
  EXPECT_THROW(run_experiment(c), ConfigError);
  c = ExperimentConfig::defaults(Kind::bias_exact);
  c.n_list = {16};
  EXPECT_THROW(run_experiment(c), BandwidthError);
}

TEST(Validation, DegenerateReplicationCounts) {
  auto c = small_density();
  c.reps = 2;
  EXPECT_THROW(run_experiment(c), ConfigError);
  c.reps = 99;
  EXPECT_THROW(run_experiment(c), ConfigError);
}

TEST(Validation, ThresholdsAndNList) {
  auto c = small_density();
  c.thresholds["ks_max"] = 0.0;
  EXPECT_THROW(run_experiment(c), ConfigError);
  c = small_density();
  c.thresholds["variance_tol"] = -0.1;
  EXPECT_THROW(run_experiment(c), ConfigError);
  c = ExperimentConfig::defaults(Kind::max_dev);
  c.n_list = {4096, 1024};
  EXPECT_THROW(run_experiment(c), ConfigError);
  c.n_list = {};
  EXPECT_THROW(run_experiment(c), ConfigError);
  EXPECT_THROW((void)ExperimentConfig::defaults(Kind::max_dev).threshold("nope"), ConfigError);
}

TEST(Reproducibility, IndependentOfThreadCount) {
  auto a = small_density();
  auto b = a;
  b.threads = 4;
  const auto ra = run_experiment(a);
  const auto rb = run_experiment(b);
  ASSERT_EQ(ra.statistics.size(), rb.statistics.size());
  for (std::size_t i = 0; i < ra.statistics.size(); ++i) {
    EXPECT_EQ(ra.statistics[i].name, rb.statistics[i].name);
    EXPECT_EQ(ra.statistics[i].value, rb.statistics[i].value) << ra.statistics[i].name;
  }
  EXPECT_EQ(ra.samples, rb.samples);
  auto c = a;
  c.seed = 18;
  EXPECT_NE(run_experiment(c).samples, ra.samples);
}

TEST(Reproducibility, PassDependsOnlyOnThresholds) {
  auto loose = small_density();
  loose.thresholds = {{"variance_tol", 10.0}, {"variance_tol_boundary", 10.0}, {"ks_max", 1.0}};
  auto tight = small_density();
  tight.thresholds = {{"variance_tol", 1e-9}, {"variance_tol_boundary", 1e-9}, {"ks_max", 1e-9}};
  const auto rl = run_experiment(loose);
  const auto rt = run_experiment(tight);
  EXPECT_TRUE(rl.pass);
  EXPECT_FALSE(rt.pass);
  EXPECT_EQ(rl.samples, rt.samples);
  EXPECT_EQ(rl.thresholds.at("ks_max"), 1.0);
  EXPECT_EQ(rt.thresholds.at("ks_max"), 1e-9);
}

TEST(Oracle, IidIsFlat) {
  OracleSettings o;
  o.n = 1 << 14;
  o.bandwidth = 16;
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 3.0, kPi};
  const auto s = oracle_spectrum(family::Iid{kGauss}, grid, o, 3, 4);
  for (std::size_t i = 0; i < grid.size(); ++i)
    EXPECT_NEAR(s.values[i], 1 / (2 * kPi), 3 * s.standard_errors[i]) << grid[i];
}

TEST(Oracle, Ar1MatchesClosedForm) {
  const std::vector<double> grid{0.0, kPi / 4, kPi / 2, 3 * kPi / 4, kPi};
  const auto s = oracle_spectrum(family::Ar{{0.5}, kGauss}, grid, OracleSettings{}, 5, 4);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_NEAR(s.values[i], ar1_f(0.5, grid[i]), 3 * s.standard_errors[i]) << grid[i];
    EXPECT_DOUBLE_EQ(s(grid[i]), std::max(0.0, s.values[i]));
  }
}

TEST(Oracle, ExparPositiveSymmetricNormalized) {
  const ModelSpec m = family::Expar{0.5, 0.3, 1.0, kGauss};
  const auto s = oracle_spectrum(m, std::vector<double>{}, OracleSettings{}, 6, 4);
  const auto f = s.evaluator();
  const std::size_t k = 2000;
  double integral = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double l = -kPi + 2 * kPi * double(i) / double(k);
    EXPECT_GT(f(l), 0.0);
    EXPECT_DOUBLE_EQ(f(l), f(-l));
    integral += (i == 0 || i == k ? 0.5 : 1.0) * f(l);
  }
  integral *= 2 * kPi / double(k);
  // separate long run for the sample variance
  const TimeSeries x = simulate(m, 1 << 18, kDefaultBurnIn, 999);
  double r0 = 0.0, mean = 0.0;
  for (double v : x.values) mean += v;
  mean /= double(x.values.size());
  for (double v : x.values) r0 += (v - mean) * (v - mean);
  r0 /= double(x.values.size());
  EXPECT_NEAR(integral, r0, 0.05 * r0);
}

TEST(Oracle, BudgetAndReps) {
  OracleSettings o;
  o.budget = 1e5;
  EXPECT_THROW(oracle_spectrum(family::Iid{kGauss}, std::vector<double>{0.0}, o, 1), SizeError);
  o = OracleSettings{};
  o.reps = 1;
  EXPECT_THROW(oracle_spectrum(family::Iid{kGauss}, std::vector<double>{0.0}, o, 1), DomainError);
}

TEST(ReferenceSpectrum, ClosedFormWhenAvailable) {
  const auto ref = reference_spectrum(family::Ar{{0.5}, kGauss}, OracleSettings{}, 1, 1, kDefaultBurnIn);
  EXPECT_TRUE(ref.closed_form);
  EXPECT_NEAR(ref.f(1.0), ar1_f(0.5, 1.0), 1e-12);
  OracleSettings o;
  o.n = 4096;
  o.bandwidth = 16;
  const auto nl = reference_spectrum(family::Expar{0.5, 0.3, 1.0, kGauss}, o, 1, 1, kDefaultBurnIn);
  EXPECT_FALSE(nl.closed_form);
}

TEST(EcdfExp, IidSmall) {
  auto c = ExperimentConfig::defaults(Kind::ecdf_exp);
  c.spec = family::Iid{kGauss};
  c.seed = 4;
  const auto rep = run_experiment(c);
  EXPECT_EQ(rep.samples.at("ks").size(), 20u);
  EXPECT_TRUE(rep.pass) << rep.stat("ks_median").value;
}

TEST(Defaults, ThresholdsPositiveAndBandwidths) {
  for (Kind k : kAllKinds) {
    const auto c = ExperimentConfig::defaults(k);
    EXPECT_FALSE(c.thresholds.empty());
    for (const auto& [name, v] : c.thresholds) EXPECT_GT(v, 0.0) << name;
  }
  auto c = ExperimentConfig::defaults(Kind::max_dev);
  EXPECT_EQ(c.bandwidth_for(0), 12u);  // 4096^0.3 = 12.1
  EXPECT_EQ(c.bandwidth_for(2), 28u);  // 65536^0.3 = 27.9
  c.bandwidths = {4, 5};
  EXPECT_THROW((void)c.bandwidth_for(0), ConfigError);
}
