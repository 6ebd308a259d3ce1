#pragma once

// Scenario configuration files.
//
//   # comment
//   scenario.name = fig3b_visibility
//   cavity.g      = 7.8
//   noise.sigma_phi = 0.06pi
//
// Every key is `section.key`; sections are cavity, noise, losses and scenario.
// Angles may carry a trailing "pi". Unknown keys are collected and reported
// together; anything else that is wrong stops at the first offending line.

#include <algorithm>
#include <charconv>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "catsim/cavity.hpp"
#include "catsim/channels.hpp"
#include "catsim/error.hpp"
#include "catsim/protocol.hpp"

namespace catsim {

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "fig2_cats",        "fig3a_squeezing",   "fig3b_visibility", "fig4a_xi_scan",  "fig4b_theta_scan",
      "fig5_stokes",      "fig6_truth_table",  "s3_phase_scan",    "s4_detuned_cat", "tomo_roundtrip"};
  return names;
}

struct ScenarioSettings {
  double alpha = 1.4;       ///< input amplitude of the reflected pulse
  double theta = 0.0;       ///< phase of the final spin rotation
  int samples = 30000;      ///< homodyne records per dataset; 0 skips the sampled path
  int mle_dim = 20;
  int grid_points = 101;
  double grid_extent = 4.0;  ///< Wigner grids cover [-extent, extent]^2
  int steps = 5;             ///< points in the xi and theta scans
  std::string state = "odd_cat:1.4";  ///< tomo_roundtrip input, see parse_state_spec
  double loss = 0.25;                 ///< tomo_roundtrip forward detection loss
  std::optional<double> loss_correction;  ///< defaults to `loss`
  double l_det = 0.46;                    ///< detection loss assumed by the gate table
  double detuning = 0.3;                  ///< light-cavity detuning of s4_detuned_cat, MHz

  double correction() const { return loss_correction.value_or(loss); }
};

struct Config {
  std::string name;
  std::uint64_t seed = 1;
  CavityParams cavity = CavityParams::from_total(7.8, 2.5, 2.3, 3.0);
  double sigma_phi = 0.06 * kPi;
  double eps_detect = 0.013;
  LossBudget losses = LossBudget::reference();
  ScenarioSettings scenario;

  /// Noise channels for the light leaving the cavity, with the budget's propagation and detection loss.
  NoiseConfig noise() const { return {sigma_phi, eps_detect, losses.propagation_detection()}; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& v, int line, const std::string& key, bool angle) {
  std::string body = v;
  double scale = 1.0;
  if (angle && body.size() >= 2 && body.compare(body.size() - 2, 2, "pi") == 0) {
    body = trim(body.substr(0, body.size() - 2));
    scale = kPi;
    if (body.empty()) body = "1";
  }
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(body.c_str(), &end);
  if (body.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'", line);
  return x * scale;
}

inline long long parse_int(const std::string& v, int line, const std::string& key) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError(key + ": expected an integer, got '" + v + "'", line);
  return x;
}

/// Shortest text that reads back as exactly x.
inline std::string format_real(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

struct KeyDef {
  std::string key;
  std::function<void(Config&, const std::string&, int)> set;
  std::function<std::string(const Config&)> get;
};

inline void require(bool ok, const std::string& key, const std::string& what, int line) {
  if (!ok) throw ConfigError(key + " " + what, line);
}

template <class Get>
KeyDef real_key(const std::string& key, Get ref, double lo, double hi, bool lo_open, bool hi_open,
                bool angle = false) {
  return {key,
          [=](Config& c, const std::string& v, int line) {
            const double x = parse_real(v, line, key, angle);
            const bool ok = (lo_open ? x > lo : x >= lo) && (hi_open ? x < hi : x <= hi);
            if (!ok) {
              std::ostringstream os;
              os << "must lie in " << (lo_open ? "(" : "[") << format_real(lo) << ", " << format_real(hi)
                 << (hi_open ? ")" : "]") << ", got " << v;
              throw ConfigError(key + " " + os.str(), line);
            }
            ref(c) = x;
          },
          [=](const Config& c) { return format_real(ref(c)); }};
}

template <class Get>
KeyDef int_key(const std::string& key, Get ref, long long lo, long long hi) {
  return {key,
          [=](Config& c, const std::string& v, int line) {
            const long long x = parse_int(v, line, key);
            require(x >= lo && x <= hi, key,
                    "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + v, line);
            ref(c) = static_cast<int>(x);
          },
          [=](const Config& c) { return std::to_string(ref(c)); }};
}

inline const std::vector<std::string>& budget_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> out;
    const LossBudget ref = LossBudget::reference();
    for (const auto& e : ref.entries())
      if (e.group != "eff") out.push_back(e.label);
    return out;
  }();
  return labels;
}

inline double budget_loss(const LossBudget& b, const std::string& label) {
  for (const auto& e : b.entries())
    if (e.label == label) return e.loss;
  return 0.0;
}

inline const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<KeyDef> t;
    t.push_back({"scenario.name",
                 [](Config& c, const std::string& v, int line) {
                   bool known = false;
                   for (const auto& n : scenario_names()) known = known || n == v;
                   if (!known) {
                     std::string list;
                     for (const auto& n : scenario_names()) list += (list.empty() ? "" : ", ") + n;
                     throw ConfigError("scenario.name: unknown scenario '" + v + "' (expected one of " + list + ")",
                                       line);
                   }
                   c.name = v;
                 },
                 [](const Config& c) { return c.name; }});
    t.push_back({"scenario.seed",
                 [](Config& c, const std::string& v, int line) {
                   const long long x = parse_int(v, line, "scenario.seed");
                   require(x >= 0, "scenario.seed", "must be >= 0", line);
                   c.seed = static_cast<std::uint64_t>(x);
                 },
                 [](const Config& c) { return std::to_string(c.seed); }});
    t.push_back(real_key("scenario.alpha", [](auto& c) -> auto& { return c.scenario.alpha; }, 0.0, 4.0, true,
                         false));
    t.push_back(real_key("scenario.theta", [](auto& c) -> auto& { return c.scenario.theta; }, -2.0 * kPi,
                         2.0 * kPi, false, false, true));
    t.push_back(int_key("scenario.samples", [](auto& c) -> auto& { return c.scenario.samples; }, 0, 10000000));
    t.push_back(int_key("scenario.mle_dim", [](auto& c) -> auto& { return c.scenario.mle_dim; }, 2, 60));
    t.push_back(int_key("scenario.grid_points", [](auto& c) -> auto& { return c.scenario.grid_points; }, 3, 1001));
    t.push_back(real_key("scenario.grid_extent", [](auto& c) -> auto& { return c.scenario.grid_extent; }, 0.0,
                         20.0, true, false));
    t.push_back(int_key("scenario.steps", [](auto& c) -> auto& { return c.scenario.steps; }, 2, 1000));
    t.push_back({"scenario.state", [](Config& c, const std::string& v, int) { c.scenario.state = v; },
                 [](const Config& c) { return c.scenario.state; }});
    t.push_back(real_key("scenario.loss", [](auto& c) -> auto& { return c.scenario.loss; }, 0.0, 1.0, false,
                         true));
    t.push_back({"scenario.loss_correction",
                 [](Config& c, const std::string& v, int line) {
                   const double x = parse_real(v, line, "scenario.loss_correction", false);
                   require(x >= 0.0 && x < 1.0, "scenario.loss_correction", "must lie in [0, 1), got " + v, line);
                   c.scenario.loss_correction = x;
                 },
                 [](const Config& c) { return format_real(c.scenario.correction()); }});
    t.push_back(real_key("scenario.l_det", [](auto& c) -> auto& { return c.scenario.l_det; }, 0.0, 1.0, false,
                         true));

    t.push_back(real_key("scenario.detuning", [](auto& c) -> auto& { return c.scenario.detuning; }, -50.0, 50.0,
                         false, false));

    t.push_back(real_key("cavity.g", [](auto& c) -> auto& { return c.cavity.g; }, 0.0, inf, false, true));
    t.push_back(real_key("cavity.kappa", [](auto& c) -> auto& { return c.cavity.kappa; }, 0.0, inf, true, true));
    t.push_back(real_key("cavity.kappa_r", [](auto& c) -> auto& { return c.cavity.kappa_r; }, 0.0, inf, true,
                         true));
    t.push_back(real_key("cavity.kappa_t", [](auto& c) -> auto& { return c.cavity.kappa_t; }, 0.0, inf, false,
                         true));
    t.push_back(real_key("cavity.kappa_m", [](auto& c) -> auto& { return c.cavity.kappa_m; }, 0.0, inf, false,
                         true));
    t.push_back(real_key("cavity.gamma", [](auto& c) -> auto& { return c.cavity.gamma; }, 0.0, inf, false,
                         true));
    t.push_back(real_key("cavity.delta", [](auto& c) -> auto& { return c.cavity.delta; }, -inf, inf, true,
                         true));

    t.push_back(real_key("noise.sigma_phi", [](auto& c) -> auto& { return c.sigma_phi; }, 0.0, 2.0 * kPi, false,
                         false, true));
    t.push_back(real_key("noise.eps_detect", [](auto& c) -> auto& { return c.eps_detect; }, 0.0, 1.0, false,
                         false));

    for (const auto& label : budget_labels()) {
      const std::string key = "losses." + label;
      t.push_back({key,
                   [label, key](Config& c, const std::string& v, int line) {
                     const double x = parse_real(v, line, key, false);
                     require(x >= 0.0 && x < 1.0, key, "must lie in [0, 1), got " + v, line);
                     std::string group;
                     for (const auto& e : c.losses.entries())
                       if (e.label == label) group = e.group;
                     c.losses.add(label, group, x);
                   },
                   [label](const Config& c) { return format_real(budget_loss(c.losses, label)); }});
    }
    return t;
  }();
  return table;
}

}  // namespace detail

/// Parses a configuration. `scenario.name` is required; everything else has a default.
inline Config parse_config(std::istream& is) {
  Config cfg;
  const auto& table = detail::key_table();
  std::map<std::string, int> seen;
  std::vector<std::string> unknown;
  std::string raw;
  int lineno = 0;
  bool kappa_split_given = false;
  int cavity_line = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'section.key = value'", lineno);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto dot = key.find('.');
    if (key.empty() || dot == std::string::npos || dot == 0 || dot + 1 == key.size())
      throw ConfigError("expected 'section.key = value', got key '" + key + "'", lineno);
    const std::string section = key.substr(0, dot);
    if (section != "cavity" && section != "noise" && section != "losses" && section != "scenario")
      throw ConfigError("unknown section '" + section + "' (expected cavity, noise, losses or scenario)", lineno);
    if (value.empty()) throw ConfigError(key + ": missing value", lineno);
    const auto it = std::find_if(table.begin(), table.end(), [&](const detail::KeyDef& d) { return d.key == key; });
    if (it == table.end()) {
      unknown.push_back(key + " (line " + std::to_string(lineno) + ")");
      continue;
    }
    if (auto prev = seen.find(key); prev != seen.end())
      throw ConfigError(key + " already set on line " + std::to_string(prev->second), lineno);
    seen[key] = lineno;
    it->set(cfg, value, lineno);
    if (key == "cavity.kappa_t" || key == "cavity.kappa_m") kappa_split_given = true;
    if (section == "cavity") cavity_line = lineno;
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw ConfigError("unknown keys: " + list);
  }
  if (cfg.name.empty()) throw ConfigError("scenario.name is required");
  auto& cav = cfg.cavity;
  if (!kappa_split_given) {
    // split the parasitic decay as CavityParams::from_total does
    cav.kappa_t = 0.5 * (cav.kappa - cav.kappa_r);
    cav.kappa_m = cav.kappa - cav.kappa_r - cav.kappa_t;
  }
  try {
    cav.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(e.what()) + " (check cavity.kappa, cavity.kappa_r, cavity.kappa_t, cavity.kappa_m)",
                      cavity_line);
  }
  if (cav.kappa_t < 0.0 || cav.kappa_m < 0.0) throw ConfigError("cavity.kappa_r must not exceed cavity.kappa");
  return cfg;
}

inline Config parse_config_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline Config load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config(f);
}

/// Every setting in canonical form; parse_config(write_config(c)) reproduces c.
inline void write_config(const Config& c, std::ostream& os) {
  for (const auto& d : detail::key_table()) os << d.key << " = " << d.get(c) << '\n';
}

}  // namespace catsim
