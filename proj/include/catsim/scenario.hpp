#pragma once

// Scenario runner: each scenario writes CSV tables, Wigner grids, a manifest
// and summary.json into one output directory. Output depends only on the
// configuration and the seed.

#include <Eigen/Core>
#include <boost/version.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "catsim/cavity.hpp"
#include "catsim/channels.hpp"
#include "catsim/config.hpp"
#include "catsim/entangle.hpp"
#include "catsim/homodyne.hpp"
#include "catsim/protocol.hpp"
#include "catsim/quadrature.hpp"
#include "catsim/tomo.hpp"

#ifndef CATSIM_VERSION
#define CATSIM_VERSION "unversioned"
#endif

namespace catsim {

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string expected;
};

struct ScenarioReport {
  std::string scenario;
  std::vector<Check> checks;
  std::vector<std::string> files;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// State specifications: vacuum | fock:N | coherent:A | even_cat:A | odd_cat:A |
// cat:A:THETA[:XI[:PHI]]. Angles accept a trailing "pi".

inline DensityMatrix parse_state_spec(const std::string& spec, int dim = 0) {
  std::vector<std::string> f;
  {
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) f.push_back(detail::trim(part));
  }
  auto bad = [&](const std::string& why) { return ConfigError("state '" + spec + "': " + why); };
  if (f.empty() || f[0].empty()) throw bad("empty specification");
  auto num = [&](std::size_t i, bool angle) {
    if (i >= f.size()) throw bad("missing field " + std::to_string(i));
    return detail::parse_real(f[i], 0, "state field", angle);
  };
  auto pick_dim = [&](double a) { return dim > 0 ? dim : std::max(2, choose_dim(std::abs(a)) + 2); };
  const std::string& kind = f[0];
  std::size_t expected_fields = 0;
  DensityMatrix rho;
  if (kind == "vacuum") {
    expected_fields = 1;
    rho = DensityMatrix::pure(StateVector::fock(0, dim > 0 ? dim : 8));
  } else if (kind == "fock") {
    expected_fields = 2;
    const long long n = detail::parse_int(f.size() > 1 ? f[1] : "", 0, "state field");
    if (n < 0 || n > 60) throw bad("photon number must lie in [0, 60]");
    const int d = dim > 0 ? dim : static_cast<int>(n) + 8;
    if (n >= d) throw bad("photon number exceeds the Fock cutoff");
    rho = DensityMatrix::pure(StateVector::fock(static_cast<int>(n), d));
  } else if (kind == "coherent") {
    expected_fields = 2;
    const double a = num(1, false);
    rho = DensityMatrix::pure(coherent_state(a, pick_dim(a)));
  } else if (kind == "even_cat" || kind == "odd_cat") {
    expected_fields = 2;
    const double a = num(1, false);
    if (a == 0.0 && kind == "odd_cat") throw bad("odd cat needs alpha > 0");
    CatParams p;
    p.alpha = a;
    p.theta = kind == "even_cat" ? 0.0 : kPi;
    rho = DensityMatrix::pure(cat_state(p, pick_dim(a)));
  } else if (kind == "cat") {
    CatParams p;
    p.alpha = num(1, false);
    p.theta = num(2, true);
    if (f.size() > 3) p.xi = num(3, true);
    if (f.size() > 4) p.phi = num(4, true);
    expected_fields = std::max<std::size_t>(3, std::min<std::size_t>(f.size(), 5));
    rho = DensityMatrix::pure(cat_state(p, pick_dim(std::abs(p.alpha))));
  } else {
    throw bad("unknown kind '" + kind + "' (expected vacuum, fock, coherent, even_cat, odd_cat or cat)");
  }
  if (f.size() != expected_fields) throw bad("wrong number of fields");
  return rho;
}

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", x);
  return buf;
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  Table& row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw std::logic_error("Table: row width differs from header");
    rows_.push_back(std::move(cells));
    return *this;
  }

  void write(std::ostream& os) const {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

class OutputDir {
 public:
  OutputDir(std::filesystem::path root, ScenarioReport& report) : root_(std::move(root)), report_(report) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec || !std::filesystem::is_directory(root_))
      throw Error("cannot create output directory " + root_.string() + (ec ? ": " + ec.message() : ""));
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const auto path = root_ / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    body(f);
    f.flush();
    if (!f) throw Error("write failed: " + path.string());
    report_.files.push_back(name);
  }

  void table(const std::string& name, const Table& t) {
    write(name, [&](std::ostream& os) { t.write(os); });
  }

  void grid(const std::string& name, const WignerGrid& g) {
    write(name, [&](std::ostream& os) { write_wigner_csv(g, os); });
  }

 private:
  std::filesystem::path root_;
  ScenarioReport& report_;
};

inline GridSpec grid_of(const ScenarioSettings& s) {
  GridSpec g;
  g.q_min = g.p_min = -s.grid_extent;
  g.q_max = g.p_max = s.grid_extent;
  g.nq = g.np = s.grid_points;
  return g;
}

inline void check(ScenarioReport& r, std::string name, bool pass, double value, std::string expected) {
  r.checks.push_back({std::move(name), pass, value, std::move(expected)});
}

/// Phase f of the fringe cos(k u + f) along the line through (q0, p0) perpendicular to `dir`.
inline double fringe_phase(const CMatrix& op, double k, double dir, double q0, double p0) {
  double c = 0.0, s = 0.0;
  const double nx = -std::sin(dir), ny = std::cos(dir);
  for (int j = 0; j < 401; ++j) {
    const double u = -3.0 + 6.0 * j / 400.0;
    const double w = wigner_point(op, q0 + u * nx, p0 + u * ny);
    c += w * std::cos(k * u);
    s += w * std::sin(k * u);
  }
  return std::atan2(-s, c);
}

inline MleOptions mle_options(const Config& cfg, double correction) {
  MleOptions o;
  o.dim = cfg.scenario.mle_dim;
  o.loss_correction_L = correction;
  return o;
}

/// Light state for one atomic outcome, including the detection error.
inline DensityMatrix outcome_state(const AtomLightState& s, AtomState a, double eps, double* prob = nullptr) {
  const Projection pr = project_atom(s, a, eps);
  if (prob) *prob = pr.prob;
  return pr.rho_light;
}

inline const char* outcome_name(AtomState a) { return a == AtomState::kUp ? "up" : "down"; }

// ---------------------------------------------------------------------------

inline void run_fig2(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  const NoiseConfig noise = cfg.noise();
  NoiseConfig corrected = noise;
  corrected.extra_loss_after = 0.0;
  const SpinRotation rot{kPi / 2.0, sc.theta};
  const AtomLightState raw = run_protocol(cfg.cavity, sc.alpha, rot, noise);
  const AtomLightState cor = run_protocol(cfg.cavity, sc.alpha, rot, corrected);
  const ReflectionBranches br = reflection_branches(cfg.cavity, sc.alpha);
  const GridSpec g = grid_of(sc);

  Table t({"outcome", "version", "path", "probability", "w00", "parity", "fidelity_ideal"});
  double w00_odd_raw = 0.0;
  DensityMatrix model[2][2];  // [outcome][raw, corrected]
  double probs[2][2] = {};
  for (AtomState a : {AtomState::kDown, AtomState::kUp}) {
    const int ai = static_cast<int>(a);
    // outcome down carries e^{i theta}, up carries e^{i(theta + pi)}
    const double cat_phase = sc.theta + (a == AtomState::kUp ? kPi : 0.0);
    for (int v = 0; v < 2; ++v) {
      const char* version = v == 0 ? "raw" : "corrected";
      double prob = 0.0;
      model[ai][v] = outcome_state(v == 0 ? raw : cor, a, noise.eps_detect, &prob);
      probs[ai][v] = prob;
      const DensityMatrix& rho = model[ai][v];
      const double shrink = v == 0 ? std::sqrt(1.0 - noise.extra_loss_after) : 1.0;
      ReflectionBranches scaled = br;
      scaled.r_up *= shrink;
      scaled.r_down *= shrink;
      const double f = fidelity(rho, ideal_output_cat(scaled, cat_phase, rho.dim()));
      const double w00 = wigner_point(rho, 0.0, 0.0);
      if (a == AtomState::kUp && v == 0) w00_odd_raw = w00;
      t.row({outcome_name(a), version, "model", num(prob), num(w00), num(parity_expectation(rho)), num(f)});
      out.grid(std::string("wigner_model_") + outcome_name(a) + "_" + version + ".csv", wigner(rho, g));
    }
  }
  const double v_raw = fringe_visibility(model[1][0], model[0][0]);
  const double v_cor = fringe_visibility(model[1][1], model[0][1]);
  rep.metrics["visibility_raw"] = v_raw;
  rep.metrics["visibility_corrected"] = v_cor;
  rep.metrics["propagation_detection_loss"] = noise.extra_loss_after;

  if (sc.samples > 0) {
    std::uint64_t k = 0;
    for (AtomState a : {AtomState::kDown, AtomState::kUp}) {
      const DensityMatrix& truth = model[static_cast<int>(a)][0];
      const MeasurementRun run = sample_quadratures(truth, sc.samples, 0.0, derive_seed(cfg.seed, k++));
      for (int v = 0; v < 2; ++v) {
        const char* version = v == 0 ? "raw" : "corrected";
        const MleResult r = mle_rhor(run, mle_options(cfg, v == 0 ? 0.0 : noise.extra_loss_after));
        const DensityMatrix& ref = model[static_cast<int>(a)][v];
        const double f = fidelity(r.rho_hat, resize(ref, sc.mle_dim));
        t.row({outcome_name(a), version, "tomography", num(probs[static_cast<int>(a)][v]), num(wigner_point(r.rho_hat, 0.0, 0.0)),
               num(parity_expectation(r.rho_hat)), num(f)});
        out.grid(std::string("wigner_tomo_") + outcome_name(a) + "_" + version + ".csv", wigner(r.rho_hat, g));
        if (v == 0) check(rep, std::string("tomography fidelity with model, ") + outcome_name(a), f > 0.9, f, "> 0.9");
      }
    }
  }
  out.table("cats.csv", t);
  check(rep, "odd cat W(0,0) negative (raw model)", w00_odd_raw < 0.0, w00_odd_raw, "< 0");
  check(rep, "correction raises the visibility", v_cor > v_raw, v_cor - v_raw, "> 0");
}

inline void run_fig3a(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  Table t({"alpha_sq", "loss", "ratio_model", "ratio_fock", "db_model", "db_fock"});
  double best = 0.0, worst_diff = 0.0;
  for (double L : {0.0, cfg.scenario.l_det}) {
    for (int i = 1; i <= 26; ++i) {
      const double a2 = 0.05 * i;
      CatParams p;
      p.alpha = std::sqrt(a2);
      p.theta = 0.0;
      const DensityMatrix rho = loss_channel(DensityMatrix::pure(cat_state(p, choose_dim(std::sqrt(a2)) + 4)), L);
      const double fock = quadrature_std(rho, kPi / 2.0) / kVacuumStd;
      const double model = squeezing_model(a2, L);
      worst_diff = std::max(worst_diff, std::abs(fock - model));
      if (L > 0.0) best = std::max(best, squeezing_db(model));
      t.row({num(a2), num(L), num(model), num(fock), num(squeezing_db(model)), num(squeezing_db(fock))});
    }
  }
  out.table("squeezing.csv", t);
  rep.metrics["max_squeezing_db"] = best;
  check(rep, "Fock moments match the squeezing model", worst_diff < 1e-6, worst_diff, "< 1e-6");
  check(rep, "maximum squeezing at l_det within 1.1..1.6 dB", best > 1.1 && best < 1.6, best, "(1.1, 1.6)");
  const double r = squeezing_model(0.5, 0.0);
  check(rep, "lossless ratio at alpha^2 = 0.5", std::abs(r - 0.680) < 1e-3, r, "0.680");
}

inline void run_fig3b(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  Table t({"alpha_sq", "loss", "v_model", "v_fock", "v_sampled"});
  double worst = 0.0, worst_sampled = 0.0;
  std::uint64_t k = 0;
  for (double L : {0.19, 0.46}) {
    for (int i = 1; i <= 16; ++i) {
      const double a2 = 0.25 * i, a = std::sqrt(a2);
      const int d = choose_dim(a) + 4;
      CatParams p;
      p.alpha = a;
      p.theta = 0.0;
      const DensityMatrix even = loss_channel(DensityMatrix::pure(cat_state(p, d)), L);
      p.theta = kPi;
      const DensityMatrix odd = loss_channel(DensityMatrix::pure(cat_state(p, d)), L);
      const double model = visibility_model(a2, L), fock = fringe_visibility(even, odd);
      worst = std::max(worst, std::abs(model - fock));
      std::string sampled = "nan";
      if (sc.samples > 0) {
        const MleOptions o = mle_options(cfg, 0.0);
        const DensityMatrix e = mle_rhor(sample_quadratures(even, sc.samples, 0.0, derive_seed(cfg.seed, k++)), o).rho_hat;
        const DensityMatrix od = mle_rhor(sample_quadratures(odd, sc.samples, 0.0, derive_seed(cfg.seed, k++)), o).rho_hat;
        const double v = fringe_visibility(e, od);
        worst_sampled = std::max(worst_sampled, std::abs(v - model));
        sampled = num(v);
      }
      t.row({num(a2), num(L), num(model), num(fock), sampled});
    }
  }
  out.table("visibility.csv", t);

  // Full protocol with the configured noise against the cavity-only prediction.
  const double l_eff = efficiency(cfg.cavity).L_eff;
  Table n({"alpha_sq", "v_noisy_protocol", "v_model_l_eff"});
  bool below = true, positive = true;
  for (int i = 1; i <= 16; ++i) {
    const double a2 = 0.25 * i;
    const AtomLightState s = run_protocol(cfg.cavity, std::sqrt(a2), SpinRotation{}, cfg.noise());
    const double v = fringe_visibility(outcome_state(s, AtomState::kDown, cfg.eps_detect),
                                       outcome_state(s, AtomState::kUp, cfg.eps_detect));
    const double m = visibility_model(a2, l_eff);
    below = below && v < m;
    positive = positive && v > 0.0;
    n.row({num(a2), num(v), num(m)});
  }
  out.table("visibility_noisy.csv", n);
  check(rep, "Fock visibility matches the sinh ratio", worst < 1e-9, worst, "< 1e-9");
  if (sc.samples > 0) {
    // binomial-scale tolerance of the reconstructed centre values
    const double tol = 6.0 / std::sqrt(static_cast<double>(sc.samples)) + 0.02;
    check(rep, "sampled visibility within Monte-Carlo tolerance", worst_sampled < tol, worst_sampled,
          "< " + num(tol));
  }
  check(rep, "noisy protocol visibility below the L_eff curve", below, below ? 1.0 : 0.0, "true");
  check(rep, "noisy protocol visibility above zero", positive, positive ? 1.0 : 0.0, "true");
}

inline void run_fig4a(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  const NoiseConfig noise = cfg.noise();
  const GridSpec g = grid_of(sc);
  const ReflectionBranches br = reflection_branches(cfg.cavity, sc.alpha);
  Table t({"xi", "outcome", "probability", "w00", "parity", "mean_q", "mean_p"});
  double mean_q_end = 0.0, mean_q_start = 0.0, expected_start = 0.0;
  for (int k = 0; k < sc.steps; ++k) {
    const double xi = 0.5 * kPi * k / (sc.steps - 1);
    const AtomLightState s = run_protocol(cfg.cavity, sc.alpha, SpinRotation{xi, sc.theta}, noise);
    for (AtomState a : {AtomState::kUp, AtomState::kDown}) {
      double prob = 0.0;
      const DensityMatrix rho = outcome_state(s, a, noise.eps_detect, &prob);
      const double mq = quadrature_moments(rho, 0.0).mean, mp = quadrature_moments(rho, kPi / 2.0).mean;
      t.row({num(xi), outcome_name(a), num(prob), num(wigner_point(rho, 0.0, 0.0)), num(parity_expectation(rho)),
             num(mq), num(mp)});
      out.grid("wigner_xi" + std::to_string(k) + "_" + outcome_name(a) + ".csv", wigner(rho, g));
      if (a == AtomState::kDown && k == 0) mean_q_start = mq;
      if (a == AtomState::kDown && k == sc.steps - 1) mean_q_end = mq;
    }
  }
  // xi = 0 leaves the down outcome in the down branch, blurred by loss, phase noise and detection error.
  const double shrink = std::sqrt(1.0 - noise.extra_loss_after) * std::exp(-0.5 * noise.sigma_phi * noise.sigma_phi);
  expected_start = std::sqrt(2.0) * shrink *
                   ((1.0 - noise.eps_detect) * br.r_down.real() + noise.eps_detect * br.r_up.real());
  out.table("xi_scan.csv", t);
  check(rep, "xi = 0 gives the displaced coherent branch", std::abs(mean_q_start - expected_start) < 1e-6,
        mean_q_start, num(expected_start));
  const double cat_mean = std::sqrt(2.0) * shrink * 0.5 * (br.r_down.real() + br.r_up.real());
  check(rep, "xi = pi/2 centres the two branches", std::abs(mean_q_end - cat_mean) < 0.05, mean_q_end,
        num(cat_mean) + " +/- 0.05");
}

inline void run_fig4b(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  const NoiseConfig noise = cfg.noise();
  const GridSpec g = grid_of(sc);
  const ReflectionBranches br = reflection_branches(cfg.cavity, sc.alpha);
  const Complex sep = br.r_up - br.r_down;
  const double k_fringe = std::sqrt(2.0) * std::abs(sep);
  const double dir = std::arg(sep);
  // fringes sit halfway between the branches, shrunk by the loss after the cavity
  const Complex mid = 0.5 * (br.r_up + br.r_down) * std::sqrt(2.0 * (1.0 - noise.extra_loss_after));
  Table t({"theta", "probability", "w00", "parity", "fringe_phase"});
  std::vector<double> phases;
  double parity_first = 0.0, parity_last = 0.0;
  for (int k = 0; k < sc.steps; ++k) {
    const double theta = kPi * k / (sc.steps - 1);
    const AtomLightState s = run_protocol(cfg.cavity, sc.alpha, SpinRotation{kPi / 2.0, theta}, noise);
    double prob = 0.0;
    const DensityMatrix rho = outcome_state(s, AtomState::kDown, noise.eps_detect, &prob);
    const double ph = fringe_phase(rho.matrix(), k_fringe, dir, mid.real(), mid.imag());
    phases.push_back(ph);
    const double par = parity_expectation(rho);
    if (k == 0) parity_first = par;
    if (k == sc.steps - 1) parity_last = par;
    t.row({num(theta), num(prob), num(wigner_point(rho, 0.0, 0.0)), num(par), num(ph)});
    out.grid("wigner_theta" + std::to_string(k) + ".csv", wigner(rho, g));
  }
  out.table("theta_scan.csv", t);
  double total = 0.0;
  for (std::size_t i = 1; i < phases.size(); ++i) total += std::remainder(phases[i] - phases[i - 1], 2.0 * kPi);
  check(rep, "theta = 0 gives an even cat", parity_first > 0.0, parity_first, "> 0");
  check(rep, "theta = pi gives an odd cat", parity_last < 0.0, parity_last, "< 0");
  check(rep, "fringes shift by pi across the scan", std::abs(std::abs(total) - kPi) < 0.05, total, "+/- pi");
}

inline void run_fig5(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  const NoiseConfig noise = cfg.noise();
  NoiseConfig corrected = noise;
  corrected.extra_loss_after = 0.0;
  const SpinRotation none{0.0, 0.0};
  const AtomLightState raw = run_protocol(cfg.cavity, sc.alpha, none, noise);
  const AtomLightState cor = run_protocol(cfg.cavity, sc.alpha, none, corrected);
  const GridSpec g = grid_of(sc);
  const double n_raw = negativity(raw), n_cor = negativity(cor);
  for (int v = 0; v < 2; ++v) {
    const std::string version = v == 0 ? "raw" : "corrected";
    const JointWignerSet w = joint_wigner_stokes(v == 0 ? raw : cor, g);
    out.grid("stokes_I_" + version + ".csv", *w.grid_i);
    out.grid("stokes_x_" + version + ".csv", *w.grid_x);
    out.grid("stokes_y_" + version + ".csv", *w.grid_y);
    out.grid("stokes_z_" + version + ".csv", *w.grid_z);
  }
  Table t({"path", "version", "negativity"});
  t.row({"model", "raw", num(n_raw)}).row({"model", "corrected", num(n_cor)});
  rep.metrics["negativity_raw"] = n_raw;
  rep.metrics["negativity_corrected"] = n_cor;

  if (sc.samples > 0) {
    // One homodyne dataset per atomic basis and outcome, as in the experiment.
    std::uint64_t k = 0;
    ConditionalPair pairs[2][3];  // [raw, corrected][x, y, z]
    const Basis bases[3] = {Basis::kX, Basis::kY, Basis::kZ};
    for (int b = 0; b < 3; ++b) {
      for (bool plus : {true, false}) {
        const Projection pr = project_atom(raw, bases[b], plus, noise.eps_detect);
        const MeasurementRun run = sample_quadratures(pr.rho_light, sc.samples, 0.0, derive_seed(cfg.seed, k++));
        for (int v = 0; v < 2; ++v) {
          const CMatrix rho = mle_rhor(run, mle_options(cfg, v == 0 ? 0.0 : noise.extra_loss_after)).rho_hat.matrix();
          ConditionalPair& c = pairs[v][b];
          (plus ? c.p_plus : c.p_minus) = pr.prob;
          (plus ? c.rho_plus : c.rho_minus) = rho;
        }
      }
    }
    for (int v = 0; v < 2; ++v) {
      const std::string version = v == 0 ? "raw" : "corrected";
      const JointWignerSet w = stokes_from_conditionals(pairs[v][0], pairs[v][1], pairs[v][2], g);
      const double n = negativity(assemble_matrix(w), w.dim());
      t.row({"tomography", version, num(n)});
      rep.metrics["negativity_tomography_" + version] = n;
      out.grid("stokes_tomo_I_" + version + ".csv", *w.grid_i);
      out.grid("stokes_tomo_x_" + version + ".csv", *w.grid_x);
      out.grid("stokes_tomo_y_" + version + ".csv", *w.grid_y);
      out.grid("stokes_tomo_z_" + version + ".csv", *w.grid_z);
    }
  }
  out.table("negativity.csv", t);
  check(rep, "noisy protocol state is entangled", n_raw > 0.0 && n_raw < 0.5, n_raw, "(0, 0.5)");
  check(rep, "loss correction raises the negativity", n_cor > n_raw, n_cor - n_raw, "> 0");
}

inline void write_truth_table(OutputDir& out, const std::string& name, const GateTable& g) {
  static const char* labels[4] = {"up,+a", "up,-a", "down,+a", "down,-a"};
  Table t({"input", "output", "overlap", "sign"});
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      t.row({std::string("\"") + labels[i] + "\"", std::string("\"") + labels[j] + "\"", num(g.overlap[i][j]),
             num(g.sign[i][j])});
  out.table(name, t);
}

inline bool flip_pattern_holds(const GateTable& g) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (j != cnot_target(i) && g.sign[i][j] >= g.sign[i][cnot_target(i)]) return false;
  return true;
}

/// Lossless resonator in the strong-coupling limit: reflection amplitudes +1 and -1.
inline CavityParams ideal_cavity() { return CavityParams{1e4, 2.5, 2.5, 0.0, 0.0, 3.0, 0.0}; }

inline void run_fig6(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const double a = cfg.scenario.alpha;
  const GateTable quiet = gate_truth_table(ideal_cavity(), a, NoiseConfig{});
  const GateTable cavity_only = gate_truth_table(cfg.cavity, a, NoiseConfig{});
  const GateTable noisy = gate_truth_table(cfg.cavity, a, cfg.noise(), cfg.scenario.l_det);
  write_truth_table(out, "truth_table_noiseless.csv", quiet);
  write_truth_table(out, "truth_table_cavity_only.csv", cavity_only);
  write_truth_table(out, "truth_table_noisy.csv", noisy);
  auto summarize = [](const GateTable& g) {
    return nlohmann::ordered_json{{"sign_fidelity", g.sign_fidelity},
                                  {"mean_fidelity", g.mean_fidelity},
                                  {"alpha_det", g.alpha_det},
                                  {"basis_overlap", g.basis_overlap}};
  };
  rep.metrics["noiseless"] = summarize(quiet);
  rep.metrics["cavity_only"] = summarize(cavity_only);
  rep.metrics["noisy"] = summarize(noisy);
  // Even a perfect gate misassigns the sign when the Gaussian tail of |+a> crosses q = 0.
  const double tail = 0.5 * std::erfc(2.0 * a / std::sqrt(2.0));
  rep.metrics["noiseless_gaussian_tail"] = tail;
  check(rep, "noiseless flip pattern", flip_pattern_holds(quiet), quiet.sign_fidelity, "CNOT pattern");
  check(rep, "noiseless sign fidelity within 0.01 of 1", std::abs(1.0 - quiet.sign_fidelity) <= 0.01,
        quiet.sign_fidelity, "1 +/- 0.01");
  check(rep, "noisy flip pattern", flip_pattern_holds(noisy), noisy.sign_fidelity, "CNOT pattern");
  check(rep, "noisy sign fidelity", noisy.sign_fidelity >= 0.9, noisy.sign_fidelity, ">= 0.9");
}

inline void run_s3(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  Table t({"detuning_mhz", "phi_over_pi", "abs_r_coupled", "abs_r_uncoupled", "arg_r_coupled", "arg_r_uncoupled"});
  double worst = 0.0, phi0 = 0.0;
  for (int i = 0; i <= 10; ++i) {
    CavityParams p = cfg.cavity;
    p.delta = -2.5 + 0.5 * i;
    const Complex rc = reflection_amplitude(p, true), ru = reflection_amplitude(p, false);
    const double phi = conditional_phase(p);
    double direct = std::fmod(std::arg(ru) - std::arg(rc), 2.0 * kPi);
    if (direct < 0.0) direct += 2.0 * kPi;
    worst = std::max(worst, std::abs(std::remainder(phi - direct, 2.0 * kPi)));
    if (i == 5) phi0 = phi;
    t.row({num(p.delta), num(phi / kPi), num(std::abs(rc)), num(std::abs(ru)), num(std::arg(rc)), num(std::arg(ru))});
  }
  out.table("phase_scan.csv", t);
  check(rep, "phase matches the reflection arguments", worst < 1e-9, worst, "< 1e-9");
  check(rep, "phase is pi on resonance", std::abs(phi0 - kPi) < 1e-12, phi0 / kPi, "1 (units of pi)");
}

inline void run_s4(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  CavityParams p = cfg.cavity;
  p.delta = sc.detuning;
  const NoiseConfig noise = cfg.noise();
  const AtomLightState s = run_protocol(p, sc.alpha, SpinRotation{kPi / 2.0, sc.theta}, noise);
  const ReflectionBranches br = reflection_branches(p, sc.alpha);
  const GridSpec g = grid_of(sc);
  Table t({"outcome", "probability", "w00", "parity", "mean_q", "mean_p"});
  for (AtomState a : {AtomState::kUp, AtomState::kDown}) {
    double prob = 0.0;
    const DensityMatrix rho = outcome_state(s, a, noise.eps_detect, &prob);
    t.row({outcome_name(a), num(prob), num(wigner_point(rho, 0.0, 0.0)), num(parity_expectation(rho)),
           num(quadrature_moments(rho, 0.0).mean), num(quadrature_moments(rho, kPi / 2.0).mean)});
    out.grid(std::string("wigner_detuned_") + outcome_name(a) + ".csv", wigner(rho, g));
  }
  out.table("detuned_cat.csv", t);
  const double phi = conditional_phase(p);
  const double between = std::remainder(std::arg(br.r_down) - std::arg(br.r_up), 2.0 * kPi);
  rep.metrics["detuning_mhz"] = p.delta;
  rep.metrics["phi_over_pi"] = phi / kPi;
  rep.metrics["r_coupled"] = {br.r_up.real(), br.r_up.imag()};
  rep.metrics["r_uncoupled"] = {br.r_down.real(), br.r_down.imag()};
  check(rep, "branch angle equals the conditional phase",
        std::abs(std::remainder(between - phi, 2.0 * kPi)) < 1e-9, between / kPi, num(phi / kPi) + " (units of pi)");
}

inline void run_tomo_roundtrip(const Config& cfg, OutputDir& out, ScenarioReport& rep) {
  const auto& sc = cfg.scenario;
  if (sc.samples < 1) throw ConfigError("tomo_roundtrip needs scenario.samples >= 1");
  const DensityMatrix truth = parse_state_spec(sc.state);
  if (sc.correction() > sc.loss)
    throw ConfigError("scenario.loss_correction must not exceed scenario.loss");
  const MeasurementRun run = sample_quadratures(truth, sc.samples, sc.loss, cfg.seed, sc.state);
  out.write("records.csv", [&](std::ostream& os) { write_records(run, os); });
  const MleOptions o = mle_options(cfg, sc.correction());
  const MleResult r = mle_rhor(run, o);
  // the reconstruction targets the state with the uncorrected part of the loss still applied
  const double residual = 1.0 - (1.0 - sc.loss) / (1.0 - sc.correction());
  const DensityMatrix target_d = resize(loss_channel(truth, std::max(0.0, residual)), sc.mle_dim);
  const double f = fidelity(r.rho_hat, target_d);
  const UncertaintySummary u = uncertainty(run, r.rho_hat, o);

  const GridSpec g = grid_of(sc);
  out.grid("wigner_truth.csv", wigner(target_d, g));
  out.grid("wigner_mle.csv", wigner(r.rho_hat, g));
  if (sc.correction() == 0.0) out.grid("wigner_radon.csv", inverse_radon(run, g));
  out.write("rho_real.csv", [&](std::ostream& os) { write_matrix_csv(r.rho_hat.matrix().real(), "real", os); });
  out.write("rho_imag.csv", [&](std::ostream& os) { write_matrix_csv(r.rho_hat.matrix().imag(), "imag", os); });
  Table lt({"iteration", "loglik"});
  for (std::size_t i = 0; i < r.loglik.size(); ++i) lt.row({std::to_string(i), num(r.loglik[i])});
  out.table("loglik.csv", lt);

  bool monotone = true;
  for (std::size_t i = 1; i < r.loglik.size(); ++i) monotone = monotone && r.loglik[i] >= r.loglik[i - 1];
  rep.metrics["fidelity"] = f;
  rep.metrics["iterations"] = r.iterations;
  rep.metrics["converged"] = r.converged;
  rep.metrics["parity"] = parity_expectation(r.rho_hat);
  rep.metrics["sigma_parity"] = u.sigma_parity;
  rep.metrics["mean_photon_number"] = mean_photon_number(r.rho_hat);
  rep.metrics["sigma_mean_photon_number"] = u.sigma_mean_n;
  rep.metrics["uncertainty_method"] = u.method;
  const double thresh = sc.correction() > 0.0 ? 0.95 : 0.97;
  check(rep, "reconstruction fidelity", f > thresh, f, "> " + num(thresh));
  check(rep, "log-likelihood never decreases", monotone, monotone ? 1.0 : 0.0, "true");
}

inline void write_manifest(const Config& cfg, const ScenarioReport& rep, std::ostream& os) {
  os << "catsim " << CATSIM_VERSION << '\n';
  os << "eigen " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
  os << "boost " << BOOST_LIB_VERSION << '\n';
  os << "scenario " << rep.scenario << '\n';
  os << "seed " << cfg.seed << "\n\n[config]\n";
  write_config(cfg, os);
  os << "\n[files]\n";
  for (const auto& f : rep.files) os << f << '\n';
}

}  // namespace detail

/// Runs the configured scenario and writes its outputs into `out_dir`.
inline ScenarioReport run_scenario(const Config& cfg, const std::filesystem::path& out_dir) {
  ScenarioReport rep;
  rep.scenario = cfg.name;
  detail::OutputDir out(out_dir, rep);
  using Runner = void (*)(const Config&, detail::OutputDir&, ScenarioReport&);
  static const std::vector<std::pair<std::string, Runner>> runners = {
      {"fig2_cats", detail::run_fig2},          {"fig3a_squeezing", detail::run_fig3a},
      {"fig3b_visibility", detail::run_fig3b},  {"fig4a_xi_scan", detail::run_fig4a},
      {"fig4b_theta_scan", detail::run_fig4b},  {"fig5_stokes", detail::run_fig5},
      {"fig6_truth_table", detail::run_fig6},   {"s3_phase_scan", detail::run_s3},
      {"s4_detuned_cat", detail::run_s4},       {"tomo_roundtrip", detail::run_tomo_roundtrip}};
  const auto it = std::find_if(runners.begin(), runners.end(), [&](const auto& r) { return r.first == cfg.name; });
  if (it == runners.end()) throw ConfigError("unknown scenario '" + cfg.name + "'");
  it->second(cfg, out, rep);

  nlohmann::ordered_json j;
  j["scenario"] = rep.scenario;
  j["seed"] = cfg.seed;
  j["metrics"] = rep.metrics;
  j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : rep.checks)
    j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"expected", c.expected}});
  j["all_pass"] = rep.all_pass();
  out.write("summary.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  out.write("manifest.txt", [&](std::ostream& os) { detail::write_manifest(cfg, rep, os); });
  return rep;
}

}  // namespace catsim
