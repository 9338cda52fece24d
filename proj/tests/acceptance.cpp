// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
//   acceptance            run all criteria
//   acceptance 3 9 13     run a subset

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nlspec/nlspec.hpp"
#include "nls_io.hpp"

using namespace nlspec;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
const InnovationSpec kGauss = InnovationSpec::gaussian();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// 1 ------------------------------------------------------------------------
Outcome estimator_identity() {
  const std::vector<ModelSpec> specs{
      family::Iid{kGauss},
      family::Ar{{0.8}, InnovationSpec::student_t(6)},
      family::Expar{0.5, 0.3, 1.0, kGauss},
      family::AsymGarch{0.1, {0.1}, {0.8}, 2.0, 0.0, kGauss},
      family::ArArch{{0.3, 0.1, 1.0, 0.3, 0.1}, InnovationSpec::rademacher()},
      family::Bilinear{{0.3}, {1.0}, {{0.2}}, kGauss},
  };
  const std::size_t bws[] = {4, 8, 16, 32, 64};
  const Window w = window_profile(WindowKind::parzen);
  const auto grid = frequency_grid(257);
  std::vector<double> worst(50, 0.0);
  parallel_for(50, threads(), [&](std::size_t i) {
    const TimeSeries x = simulate(specs[i % specs.size()], 512, kDefaultBurnIn, experiments::derive_seed(101, i));
    const std::size_t b = bws[i % 5];
    const auto direct = lag_window_estimate(x.values, w, b, grid);
    const Periodogram p = padded_periodogram(x.values);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double via = estimate_from_periodogram(p, w, b, grid[g]);
      worst[i] = std::max(worst[i], std::abs(via - direct.values[g]) / std::abs(direct.values[g]));
    }
  });
  const double m = *std::max_element(worst.begin(), worst.end());
  return {m < 1e-9, "50 series, n = 512, 257 points: worst relative difference " + num(m, 3) + " (< 1e-9)"};
}

// 2 ------------------------------------------------------------------------
Outcome orthogonality() {
  const std::size_t n = 128;
  double worst = 0.0;
  for (std::size_t j = 1; j <= 63; ++j)
    for (std::size_t jp = 1; jp <= 63; ++jp)
      for (std::size_t h = 0; h <= 32; ++h) {
        const double tj = 2 * kPi * double(j) / double(n), tjp = 2 * kPi * double(jp) / double(n);
        double s = 0.0;
        for (std::size_t k = 1; k <= n; ++k) s += std::cos(double(k) * tj) * std::cos(double(k + h) * tjp);
        const double expect = j == jp ? 0.5 * double(n) * std::cos(double(h) * tj) : 0.0;
        worst = std::max(worst, std::abs(s - expect));
      }
  return {worst < 1e-8, "n = 128, all j, j' <= 63, h <= 32: worst absolute error " + num(worst, 3) + " (< 1e-8)"};
}

// 3 ------------------------------------------------------------------------
Outcome ecdf_exponential() {
  auto c = experiments::ExperimentConfig::defaults(experiments::Kind::ecdf_exp);
  c.spec = family::Expar{0.5, 0.3, 1.0, kGauss};
  c.n_list = {4096};
  c.reps = 20;
  c.thresholds = {{"ks_median", 0.05}};
  c.seed = 3;
  c.threads = threads();
  const auto rep = experiments::run_experiment(c);
  const double med = rep.stat("ks_median").value;
  return {med < 0.05, "expar(0.5, 0.3), n = 4096, 20 reps, oracle f: median KS " + num(med) + " (< 0.05)"};
}

// 4 ------------------------------------------------------------------------
Outcome fourier_clt() {
  std::string detail;
  bool ok = true;
  const std::vector<std::pair<std::string, ModelSpec>> specs{{"iid", family::Iid{kGauss}},
                                                             {"expar(0.5, 0.3)", family::Expar{0.5, 0.3, 1.0, kGauss}}};
  for (const auto& [name, spec] : specs) {
    auto c = experiments::ExperimentConfig::defaults(experiments::Kind::fourier_clt);
    c.spec = spec;
    c.n_list = {1024};
    c.reps = 1000;
    c.p = 2;
    c.draws = 5;
    c.thresholds = {{"ks_max", 0.06}};
    c.seed = 4;
    c.threads = threads();
    const double ks = experiments::run_experiment(c).stat("ks_worst").value;
    ok = ok && ks < 0.06;
    detail += (detail.empty() ? "" : ", ") + name + " worst KS " + num(ks);
  }
  return {ok, "n = 1024, 1000 reps, 5 draws, p = 2: " + detail + " (< 0.06)"};
}

experiments::ExperimentConfig density_setting(experiments::Kind kind, std::vector<double> lambdas) {
  auto c = experiments::ExperimentConfig::defaults(kind);
  c.spec = family::Iid{kGauss};
  c.n_list = {1 << 14};
  c.bandwidths = {32};
  c.window = window_profile(WindowKind::parzen);
  c.reps = 400;
  c.lambdas = std::move(lambdas);
  c.seed = 5;
  c.threads = threads();
  return c;
}

// 5 ------------------------------------------------------------------------
Outcome density_clt() {
  auto c = density_setting(experiments::Kind::density_clt, {kPi / 2, 0.0});
  c.thresholds = {{"variance_tol", 0.25}, {"variance_tol_boundary", 0.30}, {"ks_max", 0.07}};
  const auto rep = experiments::run_experiment(c);
  const auto& t = rep.table("lambdas");  // lambda, f, sigma2, variance, variance_se, ratio, ks, mean_f_n
  const double r_mid = t.rows[0][5], r_zero = t.rows[1][5];
  const double ks = std::max(t.rows[0][6], t.rows[1][6]);
  const bool ok = std::abs(r_mid - 1) <= 0.25 && std::abs(r_zero - 1) <= 0.30 && ks < 0.07;
  return {ok, "iid, n = 2^14, B = 32, 400 reps: variance ratio " + num(r_mid) + " at pi/2 (+-25%), " + num(r_zero) +
                  " at 0 (+-30%), worst KS " + num(ks) + " (< 0.07)"};
}

// 6 ------------------------------------------------------------------------
Outcome joint_independence() {
  auto c = density_setting(experiments::Kind::joint_indep, {kPi / 4, 3 * kPi / 4});
  c.thresholds = {{"corr_max", 0.15}};
  const double r = experiments::run_experiment(c).stat("max_abs_correlation").value;
  return {r < 0.15, "same setting, |corr(f_n(pi/4), f_n(3pi/4))| = " + num(r) + " (< 0.15)"};
}

// 7 ------------------------------------------------------------------------
Outcome max_deviation() {
  auto c = experiments::ExperimentConfig::defaults(experiments::Kind::max_dev);
  c.spec = family::Iid{kGauss};
  c.n_list = {1 << 12, 1 << 14, 1 << 16};
  c.bandwidths = {};
  c.bandwidth_scale = 1.0;
  c.bandwidth_exponent = 0.3;
  c.grid_points = 257;
  c.reps = 100;
  c.thresholds = {{"ratio_max", 1.3}};
  c.seed = 7;
  c.threads = threads();
  const auto rep = experiments::run_experiment(c);
  std::string trace;
  for (const auto& row : rep.table("sizes").rows) trace += (trace.empty() ? "" : " ") + num(row[2]);
  const double ratio = rep.stat("ratio_largest_to_smallest").value;
  return {ratio < 1.3, "n = 2^12, 2^14, 2^16, B = n^0.3, 100 reps: scaled max deviation " + trace +
                           ", ratio " + num(ratio) + " (< 1.3)"};
}

// 8 ------------------------------------------------------------------------
Outcome bias_exact() {
  auto c = experiments::ExperimentConfig::defaults(experiments::Kind::bias_exact);
  c.spec = family::Ar{{0.5}, kGauss};
  c.window = window_profile(WindowKind::parzen);
  c.n_list = {1 << 15};
  c.bandwidths = {8, 16, 32};
  c.lambdas = {kPi / 3};
  c.thresholds = {{"ratio_tol", 0.15}};
  const auto rep = experiments::run_experiment(c);
  std::string trace;
  bool decreasing = true;
  double prev = INFINITY, last = 0.0;
  for (const auto& row : rep.table("bandwidths").rows) {
    last = std::abs(row[5] - 1);
    decreasing = decreasing && last < prev;
    prev = last;
    trace += (trace.empty() ? "" : ", ") + num(last);
  }
  return {decreasing && last < 0.15,
          "ar(0.5), lambda = pi/3, B = 8, 16, 32: |ratio - 1| = " + trace + " (decreasing, < 0.15 at 32)"};
}

// 9 ------------------------------------------------------------------------
Outcome bootstrap_consistency() {
  std::string detail;
  bool ok = true;
  for (auto v : {bootstrap::Variant::residual, bootstrap::Variant::exponential}) {
    auto c = experiments::ExperimentConfig::defaults(experiments::Kind::bootstrap_consistency);
    c.spec = family::Ar{{0.5}, kGauss};
    c.n_list = {512, 2048};
    c.variant = v;
    c.repetitions = 10;
    c.min_wins = 8;
    c.thresholds = {{"variance_tol", 0.30}};
    c.seed = 9;
    c.threads = threads();
    const auto rep = experiments::run_experiment(c);
    const double ratio = rep.stat("variance_ratio_largest_n").value;
    const double wins = rep.stat("wins").value;
    ok = ok && std::abs(ratio - 1) <= 0.30 && wins >= 8;
    detail += std::string(detail.empty() ? "" : "; ") + bootstrap::to_string(v) + ": variance ratio " + num(ratio) +
              " at n = 2048 (+-30%), d2 shrinks in " + num(wins, 2) + "/10 (>= 8)";
  }
  return {ok, "ar(0.5), n = 512, 2048: " + detail};
}

// 10 -----------------------------------------------------------------------
Outcome gmc_decay() {
  std::vector<std::size_t> lags(20);
  for (std::size_t i = 0; i < 20; ++i) lags[i] = i + 1;
  std::string detail;
  bool ok = true;
  for (double phi : {0.3, 0.5, 0.8}) {
    const auto fit = gmc::estimate_decay(family::Ar{{phi}, kGauss}, 2.0, lags, 2000, 10, threads());
    ok = ok && std::abs(fit.rho_hat - phi * phi) <= 0.05;
    detail += "ar(" + num(phi) + ") rho " + num(fit.rho_hat) + ", ";
  }
  const auto ex = gmc::estimate_decay(family::Expar{0.5, 0.3, 1.0, kGauss}, 2.0, lags, 2000, 10, threads());
  ok = ok && ex.rho_hat <= 0.64 * 1.1;
  return {ok, detail + "expar(0.5, 0.3) rho " + num(ex.rho_hat) + " (phi^2 +- 0.05; expar <= 0.704)"};
}

// 11 -----------------------------------------------------------------------
Outcome garch_condition() {
  const family::AsymGarch g{0.1, {0.1}, {0.8}, 2.0, 0.0, kGauss};
  const auto a = gmc::garch_moment_matrix(g, 1);
  const auto mc = gmc::garch_moment_matrix(g, 1, gmc::MonteCarloMode{100000, 11, 20});
  const bool exact = std::abs(a.spectral_radius - 0.9) <= 1e-12 && std::abs(a.delta - std::sqrt(1.3)) <= 1e-12;
  const double z_rho = std::abs(mc.spectral_radius - a.spectral_radius) / mc.spectral_radius_se;
  const double z_delta = std::abs(mc.delta - a.delta) / mc.delta_se;
  return {exact && z_rho <= 3 && z_delta <= 3,
          "analytic radius " + num(a.spectral_radius, 17) + ", delta " + num(a.delta, 17) +
              "; Monte Carlo off by " + num(z_rho, 2) + " and " + num(z_delta, 2) + " SE (<= 3)"};
}

// 12 -----------------------------------------------------------------------
Outcome flat_spectrum() {
  const ModelSpec g = family::AsymGarch{0.1, {0.1}, {0.8}, 2.0, 0.0, kGauss};
  const std::size_t n = 1 << 14;
  const std::size_t b = static_cast<std::size_t>(std::llround(std::pow(double(n), 0.2)));
  const double flat = theoretical_acov(g, 0)[0] / (2 * kPi);
  const auto grid = frequency_grid(257);
  const Window w = window_profile(WindowKind::parzen);
  std::vector<double> dev(20);
  parallel_for(20, threads(), [&](std::size_t s) {
    const TimeSeries x = simulate(g, n, kDefaultBurnIn, s);
    for (double v : lag_window_estimate(x.values, w, b, grid).values) dev[s] = std::max(dev[s], std::abs(v / flat - 1));
  });
  const auto good = std::count_if(dev.begin(), dev.end(), [](double d) { return d <= 0.15; });
  return {good >= 18, "asym_garch(0.1, 0.1, 0.8), n = 2^14, B = " + std::to_string(b) + ": " +
                          std::to_string(good) + "/20 seeds within 15% of r(0)/2pi everywhere (>= 18), worst " +
                          num(*std::max_element(dev.begin(), dev.end()))};
}

// 13 -----------------------------------------------------------------------
std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

int run_nls(const std::vector<std::string>& args, const fs::path& log) {
  std::string cmd = shell_quote(NLS_BINARY);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >" + shell_quote(log.string()) + " 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("nls-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string series = (root / "sim" / "series.csv").string();
  const fs::path cfg = root / "density.cfg";
  nls::write_file(cfg,
                  "# small density run\n"
                  "n = 1024\nBn = 8\nreps = 100\nlambda = [pi, 1.0]\nseed = 21\n"
                  "[model]\nfamily = expar\nalpha1 = 0.5\nbeta1 = 0.3\n"
                  "[oracle]\nn = 8192\nreps = 4\nbandwidth = 16\n");
  struct Run {
    std::string name;
    std::vector<std::string> args;
    bool env_seed = false;
  };
  const std::vector<Run> runs{
      {"sim", {"simulate", "--model", "expar", "--alpha1", "0.5", "--beta1", "0.3", "--n", "2048", "--seed", "7"}},
      {"sim-env", {"simulate", "--model", "asym_garch", "--alpha0", "0.1", "--garch-alpha", "0.1", "--garch-beta", "0.8",
                   "--n", "500"}, true},
      {"spec", {"spectrum", "--model", "ar", "--phi", "0.5", "--n", "1024", "--seed", "3", "--check-identity"}},
      {"spec-in", {"spectrum", "--input", series, "--Bn", "8", "--window", "tukey-hanning", "--subtract-mean"}},
      {"boot", {"bootstrap", "--model", "ar", "--phi", "0.5", "--n", "512", "--n-boot", "200", "--seed", "5",
                "--variant", "exponential", "--threads", "3"}},
      {"decay", {"gmc", "decay", "--model", "expar", "--alpha1", "0.5", "--beta1", "0.3", "--max-lag", "10", "--reps",
                 "200", "--seed", "2"}},
      {"garch", {"gmc", "garch-condition", "--model", "asym_garch", "--alpha0", "0.1", "--garch-alpha", "0.1",
                 "--garch-beta", "0.8", "--m", "2", "--mc-reps", "20000", "--seed", "4"}},
      {"bias", {"verify", "bias-exact"}},
      {"density", {"verify", "density-clt", "--config", cfg.string(), "--threads", "2"}},
  };
  std::size_t matched = 0;
  std::string problems;
  for (const auto& r : runs) {
    auto args = r.args;
    args.insert(args.end(), {"--out", (root / r.name).string()});
    if (r.env_seed) ::setenv("NLS_SEED", "1234", 1);
    const int rc = run_nls(args, root / (r.name + ".log"));
    ::unsetenv("NLS_SEED");
    if (rc != 0 && rc != 3) {
      problems += " " + r.name + " exited " + std::to_string(rc) + ";";
      continue;
    }
    try {
      const auto first = nlohmann::json::parse(nls::read_file(root / r.name / "manifest.json"));
      std::vector<std::string> replay = first.at("replay");
      const std::string replay_dir = (root / (r.name + "-replay")).string();
      for (std::size_t i = 0; i + 1 < replay.size(); ++i)
        if (replay[i] == "--out") replay[i + 1] = replay_dir;
      const int rc2 = run_nls(replay, root / (r.name + "-replay.log"));
      const auto second = nlohmann::json::parse(nls::read_file(fs::path(replay_dir) / "manifest.json"));
      bool same = rc2 == first.at("exit_code").get<int>() && !first.at("outputs").empty() &&
                  first.at("outputs").size() == second.at("outputs").size();
      for (const auto& [name, entry] : first.at("outputs").items()) {
        if (!second.at("outputs").contains(name)) {
          same = false;
          break;
        }
        const std::string h = entry.at("sha256");
        // the recorded hash must describe the file on disk in both runs
        same = same && h == second.at("outputs").at(name).at("sha256").get<std::string>() &&
               h == nls::sha256_hex(nls::read_file(entry.at("path").get<std::string>())) &&
               h == nls::sha256_hex(nls::read_file(fs::path(replay_dir) / name));
      }
      if (same) ++matched;
      else problems += " " + r.name + " differs on replay;";
    } catch (const std::exception& e) {
      problems += " " + r.name + ": " + e.what() + ";";
    }
  }
  const bool ok = matched == runs.size();
  if (ok) fs::remove_all(root);
  return {ok, std::to_string(matched) + "/" + std::to_string(runs.size()) +
                  " commands hash-identical when replayed from their manifests" +
                  (problems.empty() ? "" : " (" + problems + " logs in " + root.string() + ")")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "estimator identity", estimator_identity},
      {2, "orthogonality identity", orthogonality},
      {3, "normalized ordinates vs exp(1)", ecdf_exponential},
      {4, "Fourier transform CLT", fourier_clt},
      {5, "lag-window CLT", density_clt},
      {6, "cross-frequency independence", joint_independence},
      {7, "maximal deviation", max_deviation},
      {8, "exact bias constant", bias_exact},
      {9, "bootstrap consistency", bootstrap_consistency},
      {10, "GMC decay", gmc_decay},
      {11, "GARCH moment condition", garch_condition},
      {12, "flat GARCH spectrum", flat_spectrum},
      {13, "CLI reproducibility", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
