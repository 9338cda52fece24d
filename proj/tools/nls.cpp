#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nls_config.hpp"
#include "nls_io.hpp"
#include "nlspec/nlspec.hpp"

#ifndef NLS_VERSION
#define NLS_VERSION "0.0.0"
#endif

namespace {

using nlohmann::ordered_json;
using namespace nlspec;

enum Exit { kOk = 0, kRuntime = 1, kUsage = 2, kVerifyFail = 3 };

struct Invocation {
  std::string command;
  std::vector<std::string> positionals;
  std::string config_path;
  std::string out = "nls-out";
  std::map<std::string, std::string> overrides;  // key -> value from flags
  std::vector<std::string> argv;
};

// Seeds for the bootstrap resampling stream sit away from the series stream.
std::uint64_t derive_seed_for_bootstrap(std::uint64_t seed) { return Rng::stream(seed, experiments::kAuxStreams)(); }

// Flags that land in the config under run.* / model.*.
struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const std::vector<FlagSpec> kRunFlags{
    {"--n", "run.n", "sample size (verify: list)"},
    {"--seed", "run.seed", "master seed (falls back to NLS_SEED, then 0)"},
    {"--burn-in", "run.burn_in", "burn-in steps discarded before the sample"},
    {"--window", "run.window", "parzen | tukey-hanning | bartlett"},
    {"--Bn", "run.Bn", "truncation lag B_n"},
    {"--Bn-pilot", "run.Bn_pilot", "pilot truncation lag (must be < B_n)"},
    {"--lambda", "run.lambda", "frequency or comma list in [0, pi]"},
    {"--grid", "run.grid", "number of grid points on [0, pi]"},
    {"--variant", "run.variant", "residual | exponential"},
    {"--n-boot", "run.n_boot", "bootstrap replicates"},
    {"--reps", "run.reps", "Monte Carlo replications"},
    {"--threads", "run.threads", "worker thread cap"},
    {"--input", "run.input", "series file (CSV t,x or one value per line)"},
    {"--reference", "run.reference", "reference sample for d2 (bootstrap)"},
    {"--alpha", "run.alpha", "moment order for gmc"},
    {"--lags", "run.lags", "gmc lags (comma list)"},
    {"--max-lag", "run.max_lag", "gmc lags 1..max-lag"},
    {"--m", "run.m", "Kronecker power for garch-condition"},
    {"--mc-reps", "run.mc_reps", "Monte Carlo draws for garch-condition"},
};

const std::vector<FlagSpec> kModelFlags{
    {"--model", "model.family", "iid | ar | arma | expar | ar_arch | bilinear | asym_garch | signed_vol | rc_ar"},
    {"--innovation", "model.innovation", "gaussian | rademacher | student_t | uniform"},
    {"--variance", "model.variance", "innovation variance"},
    {"--df", "model.df", "student_t degrees of freedom"},
    {"--phi", "model.phi", "ar coefficients"},
    {"--ar", "model.ar", "arma AR coefficients"},
    {"--ma", "model.ma", "arma MA coefficients"},
    {"--alpha1", "model.alpha1", "expar alpha1"},
    {"--beta1", "model.beta1", "expar beta1"},
    {"--a", "model.a", "expar a / bilinear AR coefficients"},
    {"--theta", "model.theta", "ar_arch theta1..theta5"},
    {"--c", "model.c", "bilinear c0..cq"},
    {"--alpha0", "model.alpha0", "asym_garch alpha0"},
    {"--garch-alpha", "model.alpha", "asym_garch alpha_1..alpha_r"},
    {"--garch-beta", "model.beta", "asym_garch beta_1..beta_s"},
    {"--power", "model.power", "asym_garch / signed_vol power"},
    {"--gamma", "model.gamma", "asym_garch asymmetry"},
};

const std::vector<FlagSpec> kSwitches{
    {"--subtract-mean", "run.subtract_mean", "subtract the sample mean first"},
    {"--require-gmc", "run.require_gmc", "reject models failing the contraction condition"},
    {"--check-identity", "run.check_identity", "cross-check the two estimator routes"},
};

std::uint64_t resolve_seed(const nls::Config& c) {
  if (c.has("run.seed")) return c.count("run.seed");
  if (const char* env = std::getenv("NLS_SEED")) {
    nls::Config tmp;
    tmp.set("run.seed", env, "NLS_SEED");
    return tmp.count("run.seed");
  }
  return 0;
}

ModelSpec checked_model(const nls::Config& c) {
  if (!c.has("model.family")) throw ConfigError("no model given (use --model or a [model] section)");
  ModelSpec spec = nls::model_from(c);
  if (c.flag("run.require_gmc", false)) nls::require_gmc(spec);
  return spec;
}

std::size_t checked_n(const nls::Config& c) {
  const std::size_t n = c.count("run.n");
  if (n < 2) throw ConfigError("--n must be at least 2 (got " + std::to_string(n) + ")");
  return n;
}

/// The input series: --input file, else a simulated model series.
TimeSeries obtain_series(const nls::Config& c, std::uint64_t seed) {
  TimeSeries ts = [&] {
    if (c.has("run.input")) {
      const std::string path = c.str("run.input");
      auto v = nls::parse_series(nls::read_file(path), path);
      if (v.size() < 2) throw ConfigError(path + ": need at least 2 observations");
      return TimeSeries(std::move(v));
    }
    return simulate(checked_model(c), checked_n(c), c.count("run.burn_in", kDefaultBurnIn), seed);
  }();
  if (c.flag("run.subtract_mean", false)) {
    const double m = stats::mean(ts.values);
    for (auto& v : ts.values) v -= m;
  }
  return ts;
}

ordered_json stats_json(const std::vector<double>& x) {
  ordered_json j;
  j["count"] = x.size();
  j["mean"] = stats::mean(x);
  j["variance"] = x.size() > 1 ? stats::variance(x) : 0.0;
  ordered_json q;
  for (double p : {0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975}) q[nls::fmt(p)] = stats::quantile(x, p);
  j["quantiles"] = q;
  return j;
}

int cmd_simulate(const nls::Config& c, std::uint64_t seed, nls::OutputDir& out) {
  const ModelSpec spec = checked_model(c);
  const std::size_t n = checked_n(c);
  const auto ts = simulate(spec, n, c.count("run.burn_in", kDefaultBurnIn), seed);
  std::vector<std::vector<double>> rows;
  rows.reserve(n);
  for (std::size_t t = 0; t < n; ++t) rows.push_back({static_cast<double>(t + 1), ts.values[t]});
  out.write("series.csv", nls::csv_text({"t", "x"}, rows));
  return kOk;
}

int cmd_spectrum(const nls::Config& c, std::uint64_t seed, nls::OutputDir& out) {
  const TimeSeries ts = obtain_series(c, seed);
  const std::size_t n = ts.size();
  const Window w = window_profile(c.str("run.window", "parzen"));
  const std::size_t bn =
      c.count("run.Bn", std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::pow(double(n), 0.2)))));
  const auto lambdas = c.has("run.lambda") ? c.nums("run.lambda") : frequency_grid(c.count("run.grid", 257));
  for (double l : lambdas)
    if (!(l >= 0.0 && l <= std::numbers::pi)) throw ConfigError("lambda " + nls::fmt(l) + " outside [0, pi]");
  const auto est = lag_window_estimate(ts.values, w, bn, lambdas);

  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < lambdas.size(); ++i) rows.push_back({lambdas[i], est.values[i]});
  out.write("spectrum.csv", nls::csv_text({"lambda", "f_n"}, rows));

  const Periodogram p = periodogram(ts.values);
  rows.clear();
  for (std::size_t j = 0; j < p.ordinates.size(); ++j) rows.push_back({p.frequency(j), p.ordinates[j]});
  out.write("periodogram.csv", nls::csv_text({"omega", "I"}, rows));

  ordered_json s;
  s["n"] = n;
  s["window"] = to_string(w.kind);
  s["Bn"] = bn;
  s["points"] = lambdas.size();
  int code = kOk;
  if (c.flag("run.check_identity", false)) {
    const Periodogram padded = padded_periodogram(ts.values);
    double worst = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double alt = estimate_from_periodogram(padded, w, bn, lambdas[i]);
      const double scale = std::max(std::abs(est.values[i]), 1e-300);
      worst = std::max(worst, std::abs(alt - est.values[i]) / scale);
    }
    s["identity_max_relative_error"] = worst;
    s["identity_tolerance"] = 1e-9;
    s["identity_ok"] = worst <= 1e-9;
    if (worst > 1e-9) {
      std::cerr << "nls: estimator routes disagree (max relative error " << worst << ")\n";
      code = kVerifyFail;
    }
  }
  out.write_json("summary.json", s);
  return code;
}

int cmd_bootstrap(const nls::Config& c, std::uint64_t seed, nls::OutputDir& out) {
  const TimeSeries ts = obtain_series(c, seed);
  const std::size_t n = ts.size();
  bootstrap::Config bc;
  bc.window = window_profile(c.str("run.window", "parzen"));
  if (c.has("run.Bn") || c.has("run.Bn_pilot")) {
    if (!c.has("run.Bn") || !c.has("run.Bn_pilot")) throw ConfigError("give both --Bn and --Bn-pilot, or neither");
    bc.bandwidth = c.count("run.Bn");
    bc.pilot_bandwidth = c.count("run.Bn_pilot");
  } else {
    std::tie(bc.bandwidth, bc.pilot_bandwidth) = bootstrap::default_bandwidths(n);
  }
  bc.variant = bootstrap::parse_variant(c.str("run.variant", "residual"));
  bc.n_boot = c.count("run.n_boot", 400);
  bc.seed = derive_seed_for_bootstrap(seed);
  bc.threads = static_cast<unsigned>(c.count("run.threads", 1));
  const double lambda = c.num("run.lambda", std::numbers::pi / 2);
  bc.validate(n);

  const auto dist = bootstrap::bootstrap_distribution(ts.values, bc, lambda);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < dist.samples.size(); ++i) rows.push_back({double(i + 1), dist.samples[i]});
  out.write("bootstrap.csv", nls::csv_text({"replicate", "g_star"}, rows));

  ordered_json s;
  s["n"] = n;
  s["lambda"] = lambda;
  s["variant"] = bootstrap::to_string(bc.variant);
  s["window"] = to_string(bc.window.kind);
  s["Bn"] = bc.bandwidth;
  s["Bn_pilot"] = bc.pilot_bandwidth;
  s["n_boot"] = bc.n_boot;
  s["pilot_at_lambda"] = dist.pilot_at_lambda;
  s["target_variance"] = asymptotic_variance(dist.pilot_at_lambda, lambda, bc.window);
  s["samples"] = stats_json(dist.samples);
  s["residual_mean"] = dist.diagnostics.residual_mean;
  s["residual_variance"] = dist.diagnostics.residual_variance;
  if (c.has("run.reference")) {
    const std::string path = c.str("run.reference");
    const auto ref = nls::parse_series(nls::read_file(path), path);
    if (ref.empty()) throw ConfigError(path + ": reference sample is empty");
    s["d2_reference"] = bootstrap::mallows_d2(dist.samples, ref);
  }
  out.write_json("summary.json", s);
  return kOk;
}

int cmd_gmc_decay(const nls::Config& c, std::uint64_t seed, nls::OutputDir& out) {
  const ModelSpec spec = checked_model(c);
  const double alpha = c.num("run.alpha", 2.0);
  if (!(alpha > 0.0)) throw ConfigError("--alpha must be > 0 (got " + nls::fmt(alpha) + ")");
  std::vector<std::size_t> lags;
  if (c.has("run.lags")) {
    lags = c.counts("run.lags");
  } else {
    const std::size_t k = c.count("run.max_lag", 20);
    for (std::size_t i = 1; i <= k; ++i) lags.push_back(i);
  }
  const auto fit = gmc::estimate_decay(spec, alpha, lags, c.count("run.reps", 2000), seed,
                                       static_cast<unsigned>(c.count("run.threads", 1)),
                                       c.count("run.burn_in", kDefaultBurnIn));
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < fit.lags.size(); ++i)
    rows.push_back({double(fit.lags[i]), fit.moments[i], fit.standard_errors[i]});
  out.write("gmc.csv", nls::csv_text({"lag", "moment", "stderr"}, rows));

  ordered_json j;
  j["model"] = spec.name();
  j["alpha"] = alpha;
  j["reps"] = fit.reps;
  j["rho_hat"] = fit.rho_hat;
  j["C_hat"] = fit.c_hat;
  j["r2"] = fit.r2;
  j["fitted_points"] = fit.fitted_points;
  j["floor_hit"] = fit.floor_hit;
  try {
    const auto cr = contraction_coefficients(spec, alpha);
    ordered_json k;
    k["coefficients"] = cr.coefficients;
    k["total"] = cr.total;
    k["satisfied"] = cr.satisfied;
    k["method"] = to_string(cr.method);
    j["contraction"] = k;
  } catch (const UnsupportedFamily&) {
    j["contraction"] = nullptr;
  }
  out.write_json("fit.json", j);
  return kOk;
}

int cmd_gmc_garch(const nls::Config& c, std::uint64_t seed, nls::OutputDir& out) {
  const ModelSpec spec = checked_model(c);
  const std::size_t m = c.count("run.m", 1);
  if (m < 1) throw ConfigError("--m must be >= 1");
  std::optional<gmc::MonteCarloMode> mc;
  if (c.has("run.mc_reps") || m != 1 || !gmc::mean_garch_z(*spec.as<family::AsymGarch>()))
    mc = gmc::MonteCarloMode{c.count("run.mc_reps", 100000), seed, 20};
  const auto r = gmc::garch_moment_matrix(spec, static_cast<int>(m), mc);
  ordered_json j;
  j["model"] = spec.name();
  j["m"] = r.m;
  j["estimation"] = gmc::to_string(r.estimation);
  j["spectral_radius"] = r.spectral_radius;
  j["delta"] = r.delta;
  j["satisfied_delta"] = r.satisfied_delta;
  j["satisfied_rho"] = r.satisfied_rho;
  j["verdicts_disagree"] = r.verdicts_disagree;
  if (r.estimation == gmc::Estimation::monte_carlo) {
    j["reps"] = r.reps;
    j["spectral_radius_se"] = r.spectral_radius_se;
    j["delta_se"] = r.delta_se;
  }
  out.write_json("condition.json", j);
  return kOk;
}

int cmd_verify(const nls::Config& c, const std::string& kind_name, std::uint64_t seed, nls::OutputDir& out) {
  const auto kind = experiments::parse_kind(kind_name);
  auto cfg = nls::experiment_from(kind, c);
  cfg.seed = seed;
  const auto rep = experiments::run_experiment(cfg);

  ordered_json j;
  j["kind"] = experiments::to_string(rep.kind);
  j["pass"] = rep.pass;
  ordered_json st = ordered_json::object();
  for (const auto& s : rep.statistics) {
    ordered_json v;
    v["value"] = s.value;
    v["se"] = s.standard_error;
    st[s.name] = v;
    j[s.name] = s.value;
  }
  j["statistics"] = st;
  j["thresholds"] = rep.thresholds;
  j["notes"] = rep.notes;
  ordered_json tables = ordered_json::object();
  for (const auto& t : rep.tables) {
    ordered_json rows = ordered_json::array();
    for (const auto& r : t.rows) {
      ordered_json row;
      for (std::size_t i = 0; i < t.columns.size() && i < r.size(); ++i) row[t.columns[i]] = r[i];
      rows.push_back(row);
    }
    tables[t.name] = rows;
    out.write("table_" + t.name + ".csv", nls::csv_text(t.columns, t.rows));
  }
  j["tables"] = tables;
  for (const auto& [name, v] : rep.samples) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < v.size(); ++i) rows.push_back({double(i + 1), v[i]});
    out.write("samples_" + name + ".csv", nls::csv_text({"index", "value"}, rows));
  }
  out.write_json("report.json", j);
  return rep.pass ? kOk : kVerifyFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nls: spectral analysis of nonlinear time series"};
  app.require_subcommand(1);
  app.set_version_flag("--version", NLS_VERSION);
  Invocation inv;
  for (int i = 0; i < argc; ++i) inv.argv.emplace_back(argv[i]);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", inv.config_path, "config file (key = value, [section])");
    sub->add_option("--out", inv.out, "output directory")->capture_default_str();
    for (const auto& group : {&kRunFlags, &kModelFlags})
      for (const auto& f : *group) {
        const std::string key = f.key;
        sub->add_option_function<std::string>(f.flag, [&inv, key](const std::string& v) { inv.overrides[key] = v; },
                                              f.help);
      }
    for (const auto& f : kSwitches) {
      const std::string key = f.key;
      sub->add_flag_callback(f.flag, [&inv, key] { inv.overrides[key] = "true"; }, f.help);
    }
  };

  auto* sim = app.add_subcommand("simulate", "simulate a model; writes series.csv (t,x)");
  auto* spec = app.add_subcommand("spectrum", "lag-window estimate; writes spectrum.csv and periodogram.csv");
  auto* boot = app.add_subcommand("bootstrap", "frequency-domain bootstrap; writes bootstrap.csv and summary.json");
  auto* gmcc = app.add_subcommand("gmc", "moment contraction decay (or: gmc garch-condition)");
  auto* ver = app.add_subcommand("verify", "run one verification experiment; exit 0 iff it passes");
  for (auto* s : {sim, spec, boot, gmcc, ver}) add_common(s);
  std::string gmc_mode, kind;
  gmcc->add_option("mode", gmc_mode, "garch-condition")->check(CLI::IsMember({"decay", "garch-condition"}));
  ver->add_option("kind", kind, experiments::kind_list())->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  for (auto* s : app.get_subcommands()) inv.command = s->get_name();

  const std::string started = nls::utc_timestamp();
  try {
    nls::Config cfg = inv.config_path.empty() ? nls::Config{} : nls::Config::load(inv.config_path);
    for (const auto& [k, v] : inv.overrides) cfg.set(k, v, "--" + k.substr(k.find('.') + 1));
    if (cfg.has("run.out")) throw ConfigError("'out' is a flag, not a config key");
    for (const char* key : {"run.input", "run.reference"})
      if (cfg.has(key))
        cfg.set(key, std::filesystem::absolute(cfg.str(key)).lexically_normal().string(), cfg.entries().at(key).origin);
    const std::uint64_t seed = resolve_seed(cfg);
    cfg.set("run.seed", std::to_string(seed), "resolved");
    if (!kind.empty()) inv.positionals = {kind};
    if (!gmc_mode.empty()) inv.positionals = {gmc_mode};

    nls::OutputDir out(std::filesystem::absolute(inv.out).lexically_normal());
    int code = kOk;
    if (inv.command == "simulate") code = cmd_simulate(cfg, seed, out);
    else if (inv.command == "spectrum") code = cmd_spectrum(cfg, seed, out);
    else if (inv.command == "bootstrap") code = cmd_bootstrap(cfg, seed, out);
    else if (inv.command == "gmc") code = gmc_mode == "garch-condition" ? cmd_gmc_garch(cfg, seed, out)
                                                                         : cmd_gmc_decay(cfg, seed, out);
    else if (inv.command == "verify") code = cmd_verify(cfg, kind, seed, out);

    // Replaying the echoed config with the same positionals reproduces the outputs.
    const std::string echo = cfg.to_text();
    nls::write_file(out.path() / "config.txt", echo);
    ordered_json m;
    m["command"] = inv.command;
    m["positionals"] = inv.positionals;
    m["argv"] = inv.argv;
    std::vector<std::string> replay{inv.command};
    replay.insert(replay.end(), inv.positionals.begin(), inv.positionals.end());
    replay.insert(replay.end(), {"--config", (out.path() / "config.txt").string(), "--out", out.path().string()});
    m["replay"] = replay;
    m["config"] = echo;
    m["seed"] = seed;
    m["version"] = NLS_VERSION;
    m["started"] = started;
    m["finished"] = nls::utc_timestamp();
    m["exit_code"] = code;
    ordered_json files = ordered_json::object();
    for (const auto& [name, hash] : out.files()) {
      ordered_json f;
      f["path"] = (out.path() / name).string();
      f["sha256"] = hash;
      files[name] = f;
    }
    m["outputs"] = files;
    nls::write_file(out.path() / "manifest.json", m.dump(2) + "\n");
    return code;
  } catch (const ConfigError& e) {
    std::cerr << "nls: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const BandwidthError& e) {
    std::cerr << "nls: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const WindowConditionError& e) {
    std::cerr << "nls: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const StabilityError& e) {
    std::cerr << "nls: invalid model: " << e.what() << "\n";
    return kUsage;
  } catch (const UnsupportedFamily& e) {
    std::cerr << "nls: unsupported: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    std::cerr << "nls: invalid parameter: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "nls: error: " << e.what() << "\n";
    return kRuntime;
  }
}
