#pragma once

// Atom-light entanglement: the Stokes-like decomposition
//   rho_ac = 1/2 sum_i sigma_i (x) W_i,   W_i = Tr_atom[(sigma_i (x) 1) rho_ac],
// and the negativity of the partial transpose on the atom.

#include <optional>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "catsim/protocol.hpp"
#include "catsim/quadrature.hpp"

namespace catsim {

struct JointWignerSet {
  CMatrix w_i, w_x, w_y, w_z;
  // Filled only when a grid was requested.
  std::optional<WignerGrid> grid_i, grid_x, grid_y, grid_z;

  int dim() const { return static_cast<int>(w_i.rows()); }
};

namespace detail {

inline void fill_grids(JointWignerSet& set, const GridSpec& spec) {
  set.grid_i = wigner(set.w_i, spec);
  set.grid_x = wigner(set.w_x, spec);
  set.grid_y = wigner(set.w_y, spec);
  set.grid_z = wigner(set.w_z, spec);
}

}  // namespace detail

inline JointWignerSet joint_wigner_stokes(const AtomLightState& s, const std::optional<GridSpec>& grid = {}) {
  const CMatrix b00 = s.block(0, 0), b01 = s.block(0, 1), b10 = s.block(1, 0), b11 = s.block(1, 1);
  const Complex i{0.0, 1.0};
  JointWignerSet set{b00 + b11, b01 + b10, i * b01 - i * b10, b00 - b11, {}, {}, {}, {}};
  if (grid) detail::fill_grids(set, *grid);
  return set;
}

/// The same decomposition built from light states conditioned on atomic outcomes.
///
/// Each basis contributes p_+ rho_+ - p_- rho_-; W_I uses the z outcomes. This is
/// the route taken with measured data, where every conditional state comes from
/// its own tomography run.
struct ConditionalPair {
  double p_plus = 0.0, p_minus = 0.0;
  CMatrix rho_plus, rho_minus;
};

inline JointWignerSet stokes_from_conditionals(const ConditionalPair& x, const ConditionalPair& y,
                                               const ConditionalPair& z, const std::optional<GridSpec>& grid = {}) {
  const Eigen::Index d = z.rho_plus.rows();
  for (const ConditionalPair* c : {&x, &y, &z})
    if (c->rho_plus.rows() != d || c->rho_minus.rows() != d || c->rho_plus.cols() != d || c->rho_minus.cols() != d)
      throw std::invalid_argument("stokes_from_conditionals: inconsistent dimensions");
  auto diff = [](const ConditionalPair& c) -> CMatrix { return c.p_plus * c.rho_plus - c.p_minus * c.rho_minus; };
  JointWignerSet set{z.p_plus * z.rho_plus + z.p_minus * z.rho_minus, diff(x), diff(y), diff(z), {}, {}, {}, {}};
  if (grid) detail::fill_grids(set, *grid);
  return set;
}

/// 1/2 sum_i sigma_i (x) W_i as a plain matrix. Estimates assembled from
/// independent tomography runs need not be positive, so nothing is checked here.
inline CMatrix assemble_matrix(const JointWignerSet& set) {
  const int d = set.dim();
  for (const CMatrix* w : {&set.w_i, &set.w_x, &set.w_y, &set.w_z})
    if (w->rows() != d || w->cols() != d) throw std::invalid_argument("assemble_rho_ac: inconsistent dimensions");
  const Complex i{0.0, 1.0};
  CMatrix m(2 * d, 2 * d);
  m.block(0, 0, d, d) = 0.5 * (set.w_i + set.w_z);
  m.block(d, d, d, d) = 0.5 * (set.w_i - set.w_z);
  m.block(0, d, d, d) = 0.5 * (set.w_x - i * set.w_y);
  m.block(d, 0, d, d) = 0.5 * (set.w_x + i * set.w_y);
  return m;
}

/// Inverse of joint_wigner_stokes; throws NumericalError if the result is not a state.
inline AtomLightState assemble_rho_ac(const JointWignerSet& set) { return AtomLightState(set.dim(), assemble_matrix(set)); }

/// Partial transpose over the atom: swaps the off-diagonal blocks.
inline CMatrix partial_transpose_atom(const CMatrix& rho, int d) {
  CMatrix pt = rho;
  pt.block(0, d, d, d) = rho.block(d, 0, d, d);
  pt.block(d, 0, d, d) = rho.block(0, d, d, d);
  return pt;
}

/// (||rho^T_atom||_1 - Tr rho) / (2 Tr rho). Reduces to the usual definition for
/// normalized states and stays meaningful for reassembled estimates.
inline double negativity(const CMatrix& rho, int d) {
  const double tr = rho.trace().real();
  if (!(tr > 0.0)) throw NumericalError("negativity: state has non-positive trace");
  const CMatrix pt = partial_transpose_atom(rho, d);
  const Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (pt + pt.adjoint()), Eigen::EigenvaluesOnly);
  return std::max(0.0, (es.eigenvalues().cwiseAbs().sum() - tr) / (2.0 * tr));
}

inline double negativity(const AtomLightState& s) { return negativity(s.matrix(), s.dim_light()); }

}  // namespace catsim
