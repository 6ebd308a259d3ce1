#pragma once

// The cat-generation sequence: atomic pi/2 rotation, state-dependent
// reflection with loss modes, trace over the environment, a second rotation,
// propagation noise and finally projection of the atom.
//
// Atom basis ordering is {up, down}: index 0 is the coupling state (one
// coupling atom in the cavity), index 1 the non-coupling state.

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "catsim/cavity.hpp"
#include "catsim/channels.hpp"
#include "catsim/fock.hpp"
#include "catsim/quadrature.hpp"

namespace catsim {

enum class AtomState : int { kUp = 0, kDown = 1 };

/// Joint atom-light density matrix; block (s, s') is the light operator for atom ket s, bra s'.
class AtomLightState {
 public:
  AtomLightState() = default;
  AtomLightState(int dim_light, const CMatrix& rho) : dim_(dim_light), rho_(rho) {
    if (rho.rows() != 2 * dim_light)
      throw std::invalid_argument("AtomLightState: matrix size must be 2 * dim_light");
  }

  /// |atom><atom| (x) rho_light.
  static AtomLightState product(const Eigen::Vector2cd& atom, const DensityMatrix& light) {
    const Eigen::Vector2cd a = atom.normalized();
    const int d = light.dim();
    CMatrix m(2 * d, 2 * d);
    for (int s = 0; s < 2; ++s)
      for (int t = 0; t < 2; ++t) m.block(s * d, t * d, d, d) = a(s) * std::conj(a(t)) * light.matrix();
    return AtomLightState(d, m);
  }

  int dim_light() const { return dim_; }
  const CMatrix& matrix() const { return rho_.matrix(); }
  CMatrix block(AtomState s, AtomState t) const {
    return rho_.matrix().block(static_cast<int>(s) * dim_, static_cast<int>(t) * dim_, dim_, dim_);
  }
  CMatrix block(int s, int t) const { return rho_.matrix().block(s * dim_, t * dim_, dim_, dim_); }

 private:
  int dim_ = 0;
  DensityMatrix rho_;
};

/// Rotation of the atomic spin by `area` about an equatorial axis at angle `phase`.
struct SpinRotation {
  double area = kPi / 2.0;
  double phase = 0.0;

  /// Columns are the images of |up> and |down>; R(pi/2, 0)|up> = (|up> + |down>)/sqrt(2).
  Eigen::Matrix2cd matrix() const {
    const double c = std::cos(area / 2.0), s = std::sin(area / 2.0);
    Eigen::Matrix2cd r;
    r << c, -std::polar(s, phase), std::polar(s, -phase), c;
    return r;
  }
};

struct NoiseConfig {
  double sigma_phi = 0.0;         ///< rms optical phase noise, rad
  double eps_detect = 0.0;        ///< atomic state detection error probability
  double extra_loss_after = 0.0;  ///< propagation + detection loss applied after the cavity

  void validate() const {
    if (!(sigma_phi >= 0.0)) throw std::invalid_argument("NoiseConfig: sigma_phi must be >= 0");
    if (!(eps_detect >= 0.0 && eps_detect <= 1.0))
      throw std::invalid_argument("NoiseConfig: eps_detect outside [0, 1]");
    if (!(extra_loss_after >= 0.0 && extra_loss_after < 1.0))
      throw std::invalid_argument("NoiseConfig: extra_loss_after outside [0, 1)");
  }

  /// Reference-set-up noise: 0.06 pi phase noise, 1.3 % detection error, itemized propagation losses.
  static NoiseConfig reference() {
    return {0.06 * kPi, 0.013, LossBudget::reference().propagation_detection()};
  }
};

struct ProtocolOptions {
  int dim = 0;  ///< Fock cutoff; 0 picks one from the largest branch amplitude
  double eps_trunc = kDefaultTruncation;
  /// Displace the output so the two branches are centred on the origin.
  bool recenter = false;
};

/// Amplitudes of the two reflected branches and the overlap of their loss modes.
struct ReflectionBranches {
  Complex r_up, r_down;
  Complex loss_overlap;  ///< <l_down|l_up>
};

inline ReflectionBranches reflection_branches(const CavityParams& p, Complex alpha) {
  const ModeAmplitudes up = detail::branch_amplitudes(p, 1, alpha);
  const ModeAmplitudes dn = detail::branch_amplitudes(p, 0, alpha);
  ReflectionBranches b;
  b.r_up = up.r;
  b.r_down = dn.r;
  b.loss_overlap = overlap(up.t, dn.t) * overlap(up.m, dn.m) * overlap(up.a, dn.a);
  return b;
}

namespace detail {

inline CMatrix rotate_atom(const CMatrix& rho, int d, const Eigen::Matrix2cd& r) {
  CMatrix out = CMatrix::Zero(2 * d, 2 * d);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int s = 0; s < 2; ++s)
        for (int t = 0; t < 2; ++t) {
          const Complex c = r(a, s) * std::conj(r(b, t));
          if (c == Complex{}) continue;
          out.block(a * d, b * d, d, d) += c * rho.block(s * d, t * d, d, d);
        }
  return out;
}

template <class F>
CMatrix map_blocks(const CMatrix& rho, int d, F&& f) {
  CMatrix out(2 * d, 2 * d);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t) out.block(s * d, t * d, d, d) = f(CMatrix(rho.block(s * d, t * d, d, d)));
  return out;
}

}  // namespace detail

/// Applies propagation loss and phase diffusion to the light factor.
inline AtomLightState apply_light_noise(const AtomLightState& s, double loss, double sigma_phi) {
  const int d = s.dim_light();
  CMatrix m = detail::map_blocks(s.matrix(), d, [&](const CMatrix& b) {
    return apply_phase_diffusion(apply_loss(b, loss), sigma_phi);
  });
  return AtomLightState(d, m / m.trace().real());
}

/// Full joint state after reflection, the second rotation and the noise channels.
inline AtomLightState run_protocol(const CavityParams& p, Complex alpha, const SpinRotation& rot2,
                                   const NoiseConfig& noise, const ProtocolOptions& opts = {}) {
  p.validate();
  noise.validate();
  const ReflectionBranches br = reflection_branches(p, alpha);
  Complex r[2] = {br.r_up, br.r_down};
  // first pi/2 pulse prepares (|up> + |down>)/sqrt(2)
  const Eigen::Vector2cd c0 = SpinRotation{kPi / 2.0, 0.0}.matrix().col(0);
  Complex c[2] = {c0(0), c0(1)};
  if (opts.recenter) {
    const Complex beta = -0.5 * (r[0] + r[1]);
    for (int s = 0; s < 2; ++s) {
      // D(beta)|r> = exp((beta r* - beta* r)/2) |r + beta>
      c[s] *= std::exp(0.5 * (beta * std::conj(r[s]) - std::conj(beta) * r[s]));
      r[s] += beta;
    }
  }
  const int d = opts.dim > 0 ? opts.dim
                             : std::max(2, choose_dim(std::max(std::abs(r[0]), std::abs(r[1])), opts.eps_trunc));
  const StateVector v[2] = {coherent_state(r[0], d, opts.eps_trunc), coherent_state(r[1], d, opts.eps_trunc)};
  // <l_t|l_s> for branch pair (s, t)
  const Complex lov[2][2] = {{1.0, br.loss_overlap}, {std::conj(br.loss_overlap), 1.0}};

  CMatrix rho = CMatrix::Zero(2 * d, 2 * d);
  for (int s = 0; s < 2; ++s)
    for (int t = 0; t < 2; ++t)
      rho.block(s * d, t * d, d, d) =
          c[s] * std::conj(c[t]) * lov[s][t] * v[s].amplitudes() * v[t].amplitudes().adjoint();
  rho = detail::rotate_atom(rho, d, rot2.matrix());
  AtomLightState out(d, rho);
  if (noise.extra_loss_after > 0.0 || noise.sigma_phi > 0.0)
    out = apply_light_noise(out, noise.extra_loss_after, noise.sigma_phi);
  return out;
}

enum class Basis { kX, kY, kZ };

/// Eigenvector of sigma_basis with eigenvalue +1 (plus) or -1.
inline Eigen::Vector2cd atom_eigenvector(Basis basis, bool plus) {
  const double h = 1.0 / std::sqrt(2.0);
  Eigen::Vector2cd e;
  switch (basis) {
    case Basis::kZ:
      e = plus ? Eigen::Vector2cd(1.0, 0.0) : Eigen::Vector2cd(0.0, 1.0);
      break;
    case Basis::kX:
      e << h, (plus ? h : -h);
      break;
    case Basis::kY:
      e << h, Complex(0.0, plus ? h : -h);
      break;
  }
  return e;
}

/// Unnormalized light operator <e| rho |e> for atom vector e.
inline CMatrix conditional_light(const AtomLightState& s, const Eigen::Vector2cd& e) {
  const int d = s.dim_light();
  CMatrix m = CMatrix::Zero(d, d);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) m += std::conj(e(a)) * e(b) * s.block(a, b);
  return m;
}

inline DensityMatrix reduced_light(const AtomLightState& s) {
  return DensityMatrix::normalized(s.block(0, 0) + s.block(1, 1));
}

struct Projection {
  double prob;
  DensityMatrix rho_light;
};

/// Projects the atom onto the +/- eigenstate of sigma_basis.
///
/// With eps > 0 the reported outcome is wrong with probability eps; the
/// returned state is then the Bayesian mixture of the two true conditionals,
/// built with detection_error_mix.
inline Projection project_atom(const AtomLightState& s, Basis basis, bool plus, double eps = 0.0) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("project_atom: eps outside [0, 1]");
  const CMatrix sel = conditional_light(s, atom_eigenvector(basis, plus));
  const CMatrix oth = conditional_light(s, atom_eigenvector(basis, !plus));
  const double p_sel = sel.trace().real();
  const double p_oth = oth.trace().real();
  const double p_obs = (1.0 - eps) * p_sel + eps * p_oth;
  if (p_obs < 1e-12) throw NumericalError("project_atom: outcome probability below 1e-12");
  if (p_sel < 1e-12) return {p_obs, DensityMatrix::normalized(oth)};
  DensityMatrix rho_sel = DensityMatrix::normalized(sel);
  if (eps == 0.0 || p_oth < 1e-12) return {p_obs, rho_sel};
  return {p_obs, detection_error_mix(rho_sel, DensityMatrix::normalized(oth), eps * p_oth / p_obs)};
}

inline Projection project_atom(const AtomLightState& s, AtomState outcome, double eps = 0.0) {
  return project_atom(s, Basis::kZ, outcome == AtomState::kUp, eps);
}

/// Closed-form light state of the lossy cavity cat, branches at +/- sqrt(eta) alpha0.
inline DensityMatrix lossy_cat_density(double alpha0, double eta, double theta, int dim = 0) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("lossy_cat_density: eta outside (0, 1]");
  const double r = std::sqrt(eta) * alpha0;
  const int d = dim > 0 ? dim : std::max(2, choose_dim(std::abs(r)));
  const CVector up = coherent_state(r, d).amplitudes();
  const CVector dn = coherent_state(-r, d).amplitudes();
  const double a02 = alpha0 * alpha0;
  const double coh = std::exp(-2.0 * (1.0 - eta) * a02);
  const Complex e = std::polar(1.0, theta);
  CMatrix m = up * up.adjoint() + dn * dn.adjoint() +
              coh * (std::conj(e) * up * dn.adjoint() + e * dn * up.adjoint());
  m /= 2.0 * (1.0 + std::exp(-2.0 * a02) * std::cos(theta));
  return DensityMatrix::normalized(m);
}

/// Fidelity of the lossy cavity cat with the ideal cat of the same size.
inline double lossy_cat_fidelity_model(double alpha0_sq, double eta, double theta) {
  const double num = (1.0 - std::exp(-4.0 * eta * alpha0_sq)) * (1.0 - std::exp(-2.0 * (1.0 - eta) * alpha0_sq));
  const double den = 2.0 * (1.0 + std::exp(-2.0 * eta * alpha0_sq) * std::cos(theta)) *
                     (1.0 + std::exp(-2.0 * alpha0_sq) * std::cos(theta));
  return 1.0 - num / den;
}

/// Ideal superposition |r_up> + e^{i theta}|r_down> of the reflected amplitudes.
inline StateVector ideal_output_cat(const ReflectionBranches& b, double theta, int dim) {
  return coherent_superposition(b.r_up, 1.0, b.r_down, std::polar(1.0, theta), dim);
}

// ---------------------------------------------------------------------------
// Gate characterization

struct GateTable {
  /// Rows: inputs |up,+a>, |up,-a>, |down,+a>, |down,-a>; columns: outputs in the same order.
  std::array<std::array<double, 4>, 4> overlap{};
  /// Same layout, light discriminated only by the sign of q.
  std::array<std::array<double, 4>, 4> sign{};
  double alpha_det = 0.0;
  double basis_overlap = 0.0;  ///< |<-a_det|a_det>|^2
  double mean_fidelity = 0.0;
  double sign_fidelity = 0.0;
};

/// Index of the ideal CNOT output for input row i (atom controls the light sign).
inline int cnot_target(int i) {
  static constexpr int kMap[4] = {0, 1, 3, 2};
  return kMap[i];
}

/// Truth table of the reflection gate on basis inputs |up/down> (x) |+/-alpha>.
///
/// Expected outputs are |+/- alpha_det> with alpha_det = alpha sqrt(1 - L_det).
/// When l_det is not given it is the model's own mean intensity loss
/// (cavity reflectivity times propagation transmission).
inline GateTable gate_truth_table(const CavityParams& p, double alpha, const NoiseConfig& noise,
                                  std::optional<double> l_det = std::nullopt, int dim = 0) {
  if (!(alpha > 0.0)) throw std::invalid_argument("gate_truth_table: alpha must be > 0");
  p.validate();
  noise.validate();
  const Complex r_atom[2] = {reflection_amplitude(p, true), reflection_amplitude(p, false)};
  const double trans = 0.5 * (std::norm(r_atom[0]) + std::norm(r_atom[1])) * (1.0 - noise.extra_loss_after);
  const double L_det = l_det.value_or(1.0 - trans);
  GateTable t;
  t.alpha_det = alpha * std::sqrt(1.0 - L_det);
  t.basis_overlap = std::norm(overlap(t.alpha_det, -t.alpha_det));
  const double amax = alpha * std::max({std::abs(r_atom[0]), std::abs(r_atom[1]), 1.0});
  const int d = dim > 0 ? dim : std::max(2, choose_dim(amax));
  const StateVector expected[2] = {coherent_state(t.alpha_det, d), coherent_state(-t.alpha_det, d)};

  for (int i = 0; i < 4; ++i) {
    const int atom_in = i / 2;
    const double sgn = (i % 2 == 0) ? 1.0 : -1.0;
    DensityMatrix out = DensityMatrix::pure(coherent_state(r_atom[atom_in] * sgn * alpha, d));
    out = phase_diffusion(loss_channel(out, noise.extra_loss_after), noise.sigma_phi);
    const double p_pos = quadrature_probability(out, 0.0, 0.0, std::numeric_limits<double>::infinity());
    for (int j = 0; j < 4; ++j) {
      const int atom_out = j / 2;
      const bool plus = (j % 2 == 0);
      const double p_atom = (atom_in == atom_out) ? 1.0 - noise.eps_detect : noise.eps_detect;
      t.overlap[i][j] = p_atom * fidelity(out, expected[plus ? 0 : 1]);
      t.sign[i][j] = p_atom * (plus ? p_pos : 1.0 - p_pos);
    }
  }
  for (int i = 0; i < 4; ++i) {
    t.mean_fidelity += 0.25 * t.overlap[i][cnot_target(i)];
    t.sign_fidelity += 0.25 * t.sign[i][cnot_target(i)];
  }
  return t;
}

}  // namespace catsim
