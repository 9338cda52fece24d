#pragma once

// Config text format used by the nls tool.
//
//   file    := { line '\n' }
//   line    := [ section | pair ] [ '#' comment ]
//   section := '[' name ']'
//   pair    := key '=' value
//   value   := scalar | '[' [ scalar { ',' scalar } ] ']'
//   scalar  := '"' chars '"' | bare
//
// Numbers are decimal literals or multiples of pi: pi, pi/2, 3*pi/4, -pi.
// Names and keys are [A-Za-z0-9_-]+. Bare scalars run to the next ',', ']'
// or '#', trimmed. Keys before the first section live in section "run".
// A key may appear once per section. Entries are addressed "section.key".

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlspec/nlspec.hpp"

namespace nls {

struct Entry {
  std::vector<std::string> items;
  bool is_list = false;
  std::string origin;  // "file:line" or "--flag"
};

class Config {
public:
  static Config parse(const std::string& text, const std::string& source = "<config>") {
    Config cfg;
    std::istringstream in(text);
    std::string line, section = "run";
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = source + ":" + std::to_string(lineno);
      std::size_t i = 0;
      skip_ws(line, i);
      if (i >= line.size() || line[i] == '#') continue;
      if (line[i] == '[') {
        ++i;
        skip_ws(line, i);
        const std::string name = read_name(line, i);
        skip_ws(line, i);
        if (name.empty() || i >= line.size() || line[i] != ']')
          throw nlspec::ConfigError(where + ": malformed section header");
        ++i;
        expect_end(line, i, where);
        section = name;
        continue;
      }
      const std::string key = read_name(line, i);
      if (key.empty()) throw nlspec::ConfigError(where + ": expected a key");
      skip_ws(line, i);
      if (i >= line.size() || line[i] != '=') throw nlspec::ConfigError(where + ": expected '=' after '" + key + "'");
      ++i;
      skip_ws(line, i);
      Entry e;
      e.origin = where;
      if (i < line.size() && line[i] == '[') {
        e.is_list = true;
        ++i;
        skip_ws(line, i);
        if (i < line.size() && line[i] == ']') {
          ++i;
        } else {
          for (;;) {
            e.items.push_back(read_scalar(line, i, where));
            skip_ws(line, i);
            if (i < line.size() && line[i] == ',') {
              ++i;
              skip_ws(line, i);
              continue;
            }
            if (i < line.size() && line[i] == ']') {
              ++i;
              break;
            }
            throw nlspec::ConfigError(where + ": unterminated list for '" + key + "'");
          }
        }
      } else {
        e.items.push_back(read_scalar(line, i, where));
        if (e.items.back().empty()) throw nlspec::ConfigError(where + ": empty value for '" + key + "'");
      }
      expect_end(line, i, where);
      const std::string full = section + "." + key;
      if (cfg.entries_.count(full))
        throw nlspec::ConfigError(where + ": duplicate key '" + full + "' (first at " + cfg.entries_[full].origin +
                                  ")");
      cfg.entries_[full] = std::move(e);
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  /// Overrides (or adds) one entry. A comma inside `value` makes a list.
  void set(const std::string& key, const std::string& value, const std::string& origin) {
    Entry e;
    e.origin = origin;
    std::string v = value;
    if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    e.is_list = v.find(',') != std::string::npos || (!value.empty() && value.front() == '[');
    std::stringstream ss(v);
    std::string item;
    if (e.is_list) {
      while (std::getline(ss, item, ',')) e.items.push_back(trim(item));
    } else {
      e.items.push_back(trim(v));
    }
    entries_[key] = std::move(e);
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) > 0; }
  [[nodiscard]] const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  [[nodiscard]] std::string str(const std::string& key) const {
    const Entry& e = at(key);
    if (e.is_list || e.items.size() != 1) throw error(e, key, "expected a single value");
    return e.items[0];
  }
  [[nodiscard]] std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? str(key) : fallback;
  }

  [[nodiscard]] double num(const std::string& key) const {
    const Entry& e = at(key);
    if (e.is_list || e.items.size() != 1) throw error(e, key, "expected a number");
    return to_double(e, key, e.items[0]);
  }
  [[nodiscard]] double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

  [[nodiscard]] std::size_t count(const std::string& key) const {
    const Entry& e = at(key);
    if (e.is_list || e.items.size() != 1) throw error(e, key, "expected a nonnegative integer");
    return to_count(e, key, e.items[0]);
  }
  [[nodiscard]] std::size_t count(const std::string& key, std::size_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  [[nodiscard]] bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw error(at(key), key, "expected true or false, got '" + v + "'");
  }

  [[nodiscard]] std::vector<double> nums(const std::string& key) const {
    const Entry& e = at(key);
    std::vector<double> out;
    for (const auto& s : e.items) out.push_back(to_double(e, key, s));
    return out;
  }
  [[nodiscard]] std::vector<std::size_t> counts(const std::string& key) const {
    const Entry& e = at(key);
    std::vector<std::size_t> out;
    for (const auto& s : e.items) out.push_back(to_count(e, key, s));
    return out;
  }

  /// Canonical text form: sections sorted, keys sorted; parses back to an
  /// equal config.
  [[nodiscard]] std::string to_text() const {
    std::string out, section;
    for (const auto& [key, e] : entries_) {
      const auto dot = key.find('.');
      const std::string s = key.substr(0, dot);
      if (s != section) {
        if (!out.empty()) out += "\n";
        out += "[" + s + "]\n";
        section = s;
      }
      out += key.substr(dot + 1) + " = ";
      if (e.is_list) out += "[";
      for (std::size_t i = 0; i < e.items.size(); ++i) {
        if (i) out += ", ";
        out += quote(e.items[i]);
      }
      if (e.is_list) out += "]";
      out += "\n";
    }
    return out;
  }

  /// Keys present under `section.` that are not in `known`.
  [[nodiscard]] std::vector<std::string> unknown_keys(const std::string& section,
                                                      const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    const std::string prefix = section + ".";
    for (const auto& [key, e] : entries_) {
      if (key.rfind(prefix, 0) != 0) continue;
      const std::string k = key.substr(prefix.size());
      if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(e.origin + ": unknown key '" + key + "'");
    }
    return out;
  }

private:
  std::map<std::string, Entry> entries_;

  const Entry& at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw nlspec::ConfigError("missing required setting '" + key + "'");
    return it->second;
  }

  static nlspec::ConfigError error(const Entry& e, const std::string& key, const std::string& what) {
    return nlspec::ConfigError(e.origin + ": " + key + ": " + what);
  }

  static double to_double(const Entry& e, const std::string& key, const std::string& s) {
    if (const auto at = s.find("pi"); at != std::string::npos) {
      // [m*]pi[/d]
      double m = 1.0, d = 1.0;
      const std::string head = s.substr(0, at), tail = s.substr(at + 2);
      if (head == "-") m = -1.0;
      else if (!head.empty() && (head.back() != '*' || !parse_plain(head.substr(0, head.size() - 1), m)))
        throw error(e, key, "'" + s + "' is not a number");
      if (!tail.empty() && (tail.front() != '/' || !parse_plain(tail.substr(1), d) || d == 0.0))
        throw error(e, key, "'" + s + "' is not a number");
      return m * std::numbers::pi / d;
    }
    double v = 0.0;
    if (!parse_plain(s, v)) throw error(e, key, "'" + s + "' is not a number");
    return v;
  }

  static bool parse_plain(const std::string& s, double& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size() && !s.empty();
  }

  static std::size_t to_count(const Entry& e, const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw error(e, key, "'" + s + "' is not a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    std::string t = s.substr(b, e - b + 1);
    if (t.size() >= 2 && t.front() == '"' && t.back() == '"') t = t.substr(1, t.size() - 2);
    return t;
  }

  static std::string quote(const std::string& s) {
    const bool bare = !s.empty() && s.find_first_of(",]#\"[ \t") == std::string::npos;
    return bare ? s : "\"" + s + "\"";
  }

  static void skip_ws(const std::string& s, std::size_t& i) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
  }

  static std::string read_name(const std::string& s, std::size_t& i) {
    const std::size_t b = i;
    while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_' || s[i] == '-')) ++i;
    return s.substr(b, i - b);
  }

  static std::string read_scalar(const std::string& s, std::size_t& i, const std::string& where) {
    if (i < s.size() && s[i] == '"') {
      const auto close = s.find('"', i + 1);
      if (close == std::string::npos) throw nlspec::ConfigError(where + ": unterminated string");
      std::string v = s.substr(i + 1, close - i - 1);
      i = close + 1;
      return v;
    }
    const std::size_t b = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#') ++i;
    std::string v = s.substr(b, i - b);
    const auto e = v.find_last_not_of(" \t\r");
    return e == std::string::npos ? "" : v.substr(0, e + 1);
  }

  static void expect_end(const std::string& s, std::size_t i, const std::string& where) {
    skip_ws(s, i);
    if (i < s.size() && s[i] != '#') throw nlspec::ConfigError(where + ": unexpected text '" + s.substr(i) + "'");
  }
};

inline nlspec::InnovationSpec innovation_from(const Config& c, const std::string& sec) {
  const std::string kind = c.str(sec + ".innovation", "gaussian");
  const double var = c.num(sec + ".variance", 1.0);
  nlspec::InnovationSpec e;
  if (kind == "gaussian") e = nlspec::InnovationSpec::gaussian(var);
  else if (kind == "rademacher") e = nlspec::InnovationSpec::rademacher();
  else if (kind == "student_t") e = nlspec::InnovationSpec::student_t(c.num(sec + ".df"));
  else if (kind == "uniform") e = nlspec::InnovationSpec::uniform();
  else
    throw nlspec::ConfigError("unknown innovation '" + kind + "' (gaussian, rademacher, student_t, uniform)");
  if (kind != "gaussian" && c.has(sec + ".variance")) {
    e.variance = var;
    e.validate();
  }
  return e;
}

inline std::vector<double> list_or_empty(const Config& c, const std::string& key) {
  return c.has(key) ? c.nums(key) : std::vector<double>{};
}

inline nlspec::CoefficientFunction coefficient_from(const Config& c, const std::string& prefix) {
  using K = nlspec::CoefficientFunction::Kind;
  const std::string kind = c.str(prefix + "_kind", "constant");
  K k;
  if (kind == "constant") k = K::constant;
  else if (kind == "linear") k = K::linear;
  else if (kind == "abs") k = K::abs;
  else if (kind == "square") k = K::square;
  else throw nlspec::ConfigError(prefix + "_kind: unknown '" + kind + "' (constant, linear, abs, square)");
  return {k, c.num(prefix + "0", 0.0), c.num(prefix + "1", 0.0)};
}

/// Builds the model described under `sec.` (default section "model").
///
/// family = iid | ar | arma | expar | ar_arch | bilinear | asym_garch |
///          signed_vol | rc_ar, plus innovation/variance/df and the
/// family's parameters (see README).
inline nlspec::ModelSpec model_from(const Config& c, const std::string& sec = "model") {
  namespace f = nlspec::family;
  const std::string fam = c.str(sec + ".family");
  const auto eps = innovation_from(c, sec);
  auto k = [&](const std::string& key) { return sec + "." + key; };
  if (fam == "iid") return f::Iid{eps};
  if (fam == "ar") return f::Ar{c.nums(k("phi")), eps};
  if (fam == "arma") {
    std::shared_ptr<const nlspec::ModelSpec> driver;
    if (c.has(k("driver"))) {
      const std::string d = c.str(k("driver"));
      if (d != "none") driver = std::make_shared<const nlspec::ModelSpec>(model_from(c, d));
    }
    return f::Arma{list_or_empty(c, k("ar")), list_or_empty(c, k("ma")), eps, driver};
  }
  if (fam == "expar") return f::Expar{c.num(k("alpha1")), c.num(k("beta1")), c.num(k("a"), 1.0), eps};
  if (fam == "ar_arch") {
    const auto t = c.nums(k("theta"));
    if (t.size() != 5) throw nlspec::ConfigError(sec + ".theta: ar_arch needs exactly 5 values");
    return f::ArArch{{t[0], t[1], t[2], t[3], t[4]}, eps};
  }
  if (fam == "bilinear") {
    f::Bilinear b;
    b.a = list_or_empty(c, k("a"));
    if (c.has(k("c"))) b.c = c.nums(k("c"));
    // rows b0, b1, ... hold b_{j1}..b_{jQ}
    for (std::size_t j = 0; c.has(k("b" + std::to_string(j))); ++j) b.b.push_back(c.nums(k("b" + std::to_string(j))));
    b.innovation = eps;
    return b;
  }
  if (fam == "asym_garch")
    return f::AsymGarch{c.num(k("alpha0")), c.nums(k("alpha")), list_or_empty(c, k("beta")),
                        c.num(k("power"), 2.0), c.num(k("gamma"), 0.0), eps};
  if (fam == "signed_vol")
    return f::SignedVol{coefficient_from(c, k("g")), coefficient_from(c, k("c")), c.num(k("power"), 2.0), eps};
  if (fam == "rc_ar")
    return f::RcAr{c.count(k("dim"), 1), c.nums(k("a0")), c.nums(k("a1")), c.nums(k("b0")), c.nums(k("b1")), eps};
  throw nlspec::ConfigError(
      "unknown model family '" + fam +
      "' (iid, ar, arma, expar, ar_arch, bilinear, asym_garch, signed_vol, rc_ar)");
}

/// Rejects a model whose contraction condition fails (used by
/// --require-gmc). Families without a checkable condition pass through.
inline void require_gmc(const nlspec::ModelSpec& spec) {
  if (const auto* e = spec.as<nlspec::family::Expar>()) {
    const double s = std::abs(e->alpha1) + std::abs(e->beta1);
    if (!(s < 1.0))
      throw nlspec::ConfigError("expar contracts geometrically only when |alpha1| + |beta1| < 1 (got " +
                                std::to_string(s) + ")");
    return;
  }
  if (const auto* g = spec.as<nlspec::family::AsymGarch>()) {
    const auto r = nlspec::gmc::garch_moment_matrix(spec, 1, nlspec::gmc::mean_garch_z(*g)
                                                                 ? std::nullopt
                                                                 : std::optional(nlspec::gmc::MonteCarloMode{}));
    if (!r.satisfied_rho)
      throw nlspec::ConfigError("asym_garch moment condition fails: spectral radius " +
                                std::to_string(r.spectral_radius) + " >= 1");
    return;
  }
  try {
    const auto r = nlspec::contraction_coefficients(spec, 2.0);
    if (!r.satisfied)
      throw nlspec::ConfigError(spec.name() + " fails the contraction condition: sum of a_j = " +
                                std::to_string(r.total) + " >= 1");
  } catch (const nlspec::UnsupportedFamily&) {
  }
}

/// Experiment settings: defaults for `kind`, overridden by run.* keys,
/// thresholds.* and oracle.*; the model comes from model.* when present.
inline nlspec::experiments::ExperimentConfig experiment_from(nlspec::experiments::Kind kind, const Config& c) {
  auto e = nlspec::experiments::ExperimentConfig::defaults(kind);
  if (c.has("model.family")) e.spec = model_from(c);
  if (c.has("run.n")) e.n_list = c.counts("run.n");
  e.reps = c.count("run.reps", e.reps);
  if (c.has("run.window")) e.window = nlspec::window_profile(c.str("run.window"));
  if (c.has("run.bandwidths")) e.bandwidths = c.counts("run.bandwidths");
  else if (c.has("run.Bn")) e.bandwidths = c.counts("run.Bn");
  e.bandwidth_scale = c.num("run.bandwidth_scale", e.bandwidth_scale);
  e.bandwidth_exponent = c.num("run.bandwidth_exponent", e.bandwidth_exponent);
  if (c.has("run.lambda")) e.lambdas = c.nums("run.lambda");
  e.grid_points = c.count("run.grid", e.grid_points);
  e.p = c.count("run.p", e.p);
  e.draws = c.count("run.draws", e.draws);
  if (c.has("run.pilot_bandwidths")) e.pilot_bandwidths = c.counts("run.pilot_bandwidths");
  else if (c.has("run.Bn_pilot")) e.pilot_bandwidths = c.counts("run.Bn_pilot");
  e.pilot_scale = c.num("run.pilot_scale", e.pilot_scale);
  if (c.has("run.variant")) e.variant = nlspec::bootstrap::parse_variant(c.str("run.variant"));
  e.n_boot = c.count("run.n_boot", e.n_boot);
  e.repetitions = c.count("run.repetitions", e.repetitions);
  e.min_wins = c.count("run.min_wins", e.min_wins);
  e.normalized = c.flag("run.normalized", e.normalized);
  e.acov_truncation = c.count("run.acov_truncation", e.acov_truncation);
  e.burn_in = c.count("run.burn_in", e.burn_in);
  e.seed = c.count("run.seed", e.seed);
  e.threads = static_cast<unsigned>(c.count("run.threads", e.threads));
  for (const auto& [key, entry] : c.entries()) {
    if (key.rfind("thresholds.", 0) != 0) continue;
    const std::string name = key.substr(11);
    if (!e.thresholds.count(name))
      throw nlspec::ConfigError(entry.origin + ": threshold '" + name + "' is not defined for " +
                                nlspec::experiments::to_string(kind));
    e.thresholds[name] = c.num(key);
  }
  e.oracle.n = c.count("oracle.n", e.oracle.n);
  e.oracle.reps = c.count("oracle.reps", e.oracle.reps);
  e.oracle.bandwidth = c.count("oracle.bandwidth", e.oracle.bandwidth);
  e.oracle.budget = c.num("oracle.budget", e.oracle.budget);
  return e;
}

}  // namespace nls
