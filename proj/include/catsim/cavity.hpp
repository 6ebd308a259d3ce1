#pragma once

// Input-output model of a single-sided cavity containing one three-level atom.
//
// Rates are stored as ordinary frequencies in MHz: a field decay rate of
// 2pi x 2.5 MHz is stored as kappa = 2.5. Formulas are evaluated with the
// angular values 2*pi*rate and the angular detuning 2*pi*delta:
//   r(D) = 1 - 2 kr (2i pi D + gm) / ((2i pi D + k)(2i pi D + gm) + g^2)
// with every rate in rad/us. Dropping the 2*pi on the detuning while keeping
// angular rates (or vice versa) distorts the whole phase curve.

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "catsim/fock.hpp"

namespace catsim {

struct CavityParams {
  double g = 7.8;
  double kappa = 2.5;
  double kappa_r = 2.3;
  double kappa_t = 0.1;
  double kappa_m = 0.1;
  double gamma = 3.0;
  double delta = 0.0;  ///< light-cavity detuning, MHz
  /// Recorded for reference only; no formula uses it.
  double finesse = 6e4;

  void validate() const {
    if (g < 0 || kappa < 0 || kappa_r < 0 || kappa_t < 0 || kappa_m < 0 || gamma < 0)
      throw std::invalid_argument("CavityParams: rates must be >= 0");
    if (!(kappa_r > 0)) throw std::invalid_argument("CavityParams: kappa_r must be > 0");
    if (std::abs(kappa - (kappa_r + kappa_t + kappa_m)) > 1e-9)
      throw std::invalid_argument("CavityParams: kappa must equal kappa_r + kappa_t + kappa_m");
  }

  /// Splits the parasitic decay kappa - kappa_r equally into transmission and mirror loss.
  static CavityParams from_total(double g, double kappa, double kappa_r, double gamma,
                                 double delta = 0.0) {
    CavityParams p;
    p.g = g;
    p.kappa = kappa;
    p.kappa_r = kappa_r;
    p.kappa_t = 0.5 * (kappa - kappa_r);
    p.kappa_m = kappa - kappa_r - p.kappa_t;
    p.gamma = gamma;
    p.delta = delta;
    p.validate();
    return p;
  }
};

/// Output amplitudes of the reflected, transmitted, mirror-loss and atom-scattered modes.
struct ModeAmplitudes {
  Complex r, t, m, a;

  double total_flux() const { return std::norm(r) + std::norm(t) + std::norm(m) + std::norm(a); }
};

namespace detail {

inline constexpr double kTwoPi = 2.0 * kPi;

// Steady-state amplitudes for atom number n (0 or 1) at arbitrary detuning.
// On resonance they reduce to the closed forms used by mode_amplitudes().
inline ModeAmplitudes branch_amplitudes(const CavityParams& p, int n, Complex alpha) {
  const Complex s{0.0, kTwoPi * p.delta};
  const double k = kTwoPi * p.kappa, kr = kTwoPi * p.kappa_r, kt = kTwoPi * p.kappa_t,
               km = kTwoPi * p.kappa_m, gm = kTwoPi * p.gamma, g = kTwoPi * p.g;
  const Complex den = (s + k) * (s + gm) + static_cast<double>(n) * g * g;
  ModeAmplitudes out;
  out.r = (1.0 - 2.0 * kr * (s + gm) / den) * alpha;
  out.t = 2.0 * std::sqrt(kr * kt) * (s + gm) / den * alpha;
  out.m = 2.0 * std::sqrt(kr * km) * (s + gm) / den * alpha;
  out.a = 2.0 * std::sqrt(kr * gm) * std::sqrt(static_cast<double>(n)) * g / den * alpha;
  return out;
}

}  // namespace detail

/// Resonant mode amplitudes for N coupling atoms (N = 1 for the coupling state).
inline ModeAmplitudes mode_amplitudes(const CavityParams& p, int n_atoms, Complex alpha) {
  if (p.delta != 0.0)
    throw std::invalid_argument(
        "mode_amplitudes: closed forms hold on resonance only; use reflection_amplitude for "
        "delta != 0");
  if (n_atoms != 0 && n_atoms != 1) throw std::invalid_argument("mode_amplitudes: N must be 0 or 1");
  const double g2 = p.g * p.g;
  const double n = n_atoms;
  const double den = n * g2 + p.kappa * p.gamma;
  ModeAmplitudes out;
  out.r = (n * g2 + (p.kappa - 2.0 * p.kappa_r) * p.gamma) / den * alpha;
  out.t = 2.0 * std::sqrt(p.kappa_r * p.kappa_t) * p.gamma / den * alpha;
  out.m = 2.0 * std::sqrt(p.kappa_r * p.kappa_m) * p.gamma / den * alpha;
  out.a = 2.0 * std::sqrt(p.kappa_r * p.gamma) * std::sqrt(n) * p.g / den * alpha;
  return out;
}

/// Complex reflection amplitude at the configured detuning; g = 0 when !coupled.
inline Complex reflection_amplitude(const CavityParams& p, bool coupled) {
  return detail::branch_amplitudes(p, coupled ? 1 : 0, 1.0).r;
}

/// Phase shift between the non-coupling and the coupling reflection, in [0, 2pi).
inline double conditional_phase(const CavityParams& p) {
  double phi = std::arg(reflection_amplitude(p, false)) - std::arg(reflection_amplitude(p, true));
  phi = std::fmod(phi, detail::kTwoPi);
  if (phi < 0.0) phi += detail::kTwoPi;
  if (phi >= detail::kTwoPi) phi -= detail::kTwoPi;
  return phi;
}

struct Efficiency {
  double eta;      ///< output cat size per input amplitude
  double C;        ///< cooperativity g^2/(2 kappa gamma)
  double eta_esc;  ///< escape efficiency kappa_r/kappa
  double L_cav;    ///< total intensity loss 1 - eta^2
  double L_eff;    ///< coherence-reducing loss 1 - eta
};

inline Efficiency efficiency(const CavityParams& p) {
  const double g2 = p.g * p.g;
  Efficiency e{};
  e.eta_esc = p.kappa_r / p.kappa;
  e.eta = e.eta_esc * g2 / (g2 + p.kappa * p.gamma);
  e.C = (p.kappa * p.gamma > 0.0) ? g2 / (2.0 * p.kappa * p.gamma) : INFINITY;
  e.L_cav = 1.0 - e.eta * e.eta;
  e.L_eff = 1.0 - e.eta;
  return e;
}

}  // namespace catsim
