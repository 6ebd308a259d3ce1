#pragma once

// Truncated Fock-space states and the scalar quantities built on them.
//
// Quadrature convention used throughout the library:
//   q = (a + a^dag)/sqrt(2),  p = i(a^dag - a)/sqrt(2),
// so the vacuum has Var(q) = Var(p) = 1/2 and |alpha> is centred at
// (sqrt(2) Re alpha, sqrt(2) Im alpha).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "catsim/error.hpp"

namespace catsim {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDefaultTruncation = 1e-10;

/// Pure state over |0>..|dim-1>.
class StateVector {
 public:
  StateVector() = default;
  explicit StateVector(CVector amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.size() < 1) throw std::invalid_argument("StateVector: dim must be >= 1");
  }

  int dim() const { return static_cast<int>(amps_.size()); }
  const CVector& amplitudes() const { return amps_; }
  Complex operator[](int n) const { return amps_(n); }
  double norm() const { return amps_.norm(); }

  static StateVector fock(int n, int dim) {
    if (n < 0 || n >= dim) throw std::invalid_argument("fock: n outside [0, dim)");
    CVector v = CVector::Zero(dim);
    v(n) = 1.0;
    return StateVector(std::move(v));
  }

 private:
  CVector amps_;
};

/// Hermitian, unit-trace, positive semidefinite matrix in a truncated Fock basis.
///
/// Construction validates the invariants and then stores the exactly
/// Hermitian part, so accumulated round-off never leaks into later steps.
class DensityMatrix {
 public:
  static constexpr double kHermitianTol = 1e-12;
  static constexpr double kTraceTol = 1e-9;
  static constexpr double kPositivityTol = 1e-9;

  DensityMatrix() = default;

  explicit DensityMatrix(const CMatrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
      throw std::invalid_argument("DensityMatrix: matrix must be square and non-empty");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double herm_err = (m - m.adjoint()).cwiseAbs().maxCoeff();
    if (herm_err > kHermitianTol * scale)
      throw NumericalError("DensityMatrix: not Hermitian (error " + std::to_string(herm_err) + ")");
    rho_ = 0.5 * (m + m.adjoint());
    const double tr = rho_.trace().real();
    if (std::abs(tr - 1.0) > kTraceTol)
      throw NumericalError("DensityMatrix: trace " + std::to_string(tr) + " differs from 1");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kPositivityTol)
      throw NumericalError("DensityMatrix: negative eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()));
  }

  /// Normalizes the trace first; use for matrices that are positive up to scale.
  static DensityMatrix normalized(const CMatrix& m) {
    const double tr = m.trace().real();
    if (!(tr > 0.0)) throw NumericalError("DensityMatrix: non-positive trace");
    return DensityMatrix(m / tr);
  }

  static DensityMatrix pure(const StateVector& psi) {
    const CVector& v = psi.amplitudes();
    return normalized(v * v.adjoint());
  }

  int dim() const { return static_cast<int>(rho_.rows()); }
  const CMatrix& matrix() const { return rho_; }
  Complex operator()(int m, int n) const { return rho_(m, n); }

 private:
  CMatrix rho_;
};

/// Parameters of cos(xi/2)|alpha> + e^{i theta} sin(xi/2)|e^{i phi} alpha>.
struct CatParams {
  Complex alpha{0.0, 0.0};
  double phi = kPi;
  double theta = 0.0;
  double xi = kPi / 2.0;
};

namespace detail {

// Untruncated coherent amplitudes e^{-|a|^2/2} a^n / sqrt(n!) for n < dim.
inline CVector coherent_amplitudes(Complex alpha, int dim) {
  CVector c(dim);
  c(0) = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return c;
}

}  // namespace detail

/// Smallest Fock cutoff whose coherent-state tail mass beyond it is below eps.
inline int choose_dim(double alpha_max, double eps = kDefaultTruncation) {
  if (alpha_max < 0.0) throw std::invalid_argument("choose_dim: alpha_max must be >= 0");
  const double lambda = alpha_max * alpha_max;
  if (lambda == 0.0) return 1;
  const int nmax = static_cast<int>(lambda + 30.0 * std::sqrt(lambda) + 60.0);
  std::vector<double> p(nmax + 1);
  for (int n = 0; n <= nmax; ++n)
    p[n] = std::exp(-lambda + n * std::log(lambda) - std::lgamma(n + 1.0));
  // tail[d] = sum_{n >= d} p[n], accumulated from the small end of the tail
  double tail = 0.0;
  std::vector<double> tails(nmax + 2, 0.0);
  for (int n = nmax; n >= 0; --n) {
    tail += p[n];
    tails[n] = tail;
  }
  for (int d = 1; d <= nmax; ++d)
    if (tails[d] < eps) return d;
  return nmax + 1;
}

/// Truncated, renormalized coherent state.
inline StateVector coherent_state(Complex alpha, int dim, double eps = kDefaultTruncation) {
  if (dim < 1) throw std::invalid_argument("coherent_state: dim must be >= 1");
  CVector c = detail::coherent_amplitudes(alpha, dim);
  const double deficit = 1.0 - c.squaredNorm();
  if (deficit > eps)
    throw TruncationError("coherent_state: truncation error " + std::to_string(deficit) +
                          " at dim " + std::to_string(dim) + "; use dim >= " +
                          std::to_string(choose_dim(std::abs(alpha), eps)));
  c /= c.norm();
  return StateVector(std::move(c));
}

/// <beta|alpha>, exact (no truncation).
inline Complex overlap(Complex alpha, Complex beta) {
  return std::exp(-0.5 * (std::norm(alpha) + std::norm(beta)) + std::conj(beta) * alpha);
}

/// Normalized ca|a> + cb|b>; the norm includes the exact coherent overlap.
inline StateVector coherent_superposition(Complex a, Complex ca, Complex b, Complex cb, int dim,
                                          double eps = kDefaultTruncation) {
  if (dim < 1) throw std::invalid_argument("coherent_superposition: dim must be >= 1");
  CVector v = ca * detail::coherent_amplitudes(a, dim) + cb * detail::coherent_amplitudes(b, dim);
  const double n2 = std::norm(ca) + std::norm(cb) + 2.0 * std::real(std::conj(ca) * cb * overlap(b, a));
  if (!(n2 > 1e-300)) throw NumericalError("coherent_superposition: zero norm");
  const double deficit = 1.0 - v.squaredNorm() / n2;
  if (deficit > eps)
    throw TruncationError("coherent_superposition: truncation error " + std::to_string(deficit) +
                          " at dim " + std::to_string(dim) + "; use dim >= " +
                          std::to_string(choose_dim(std::max(std::abs(a), std::abs(b)), eps)));
  v /= v.norm();
  return StateVector(std::move(v));
}

/// Generalized two-component cat state.
inline StateVector cat_state(const CatParams& p, int dim, double eps = kDefaultTruncation) {
  return coherent_superposition(p.alpha, std::cos(p.xi / 2.0), std::polar(1.0, p.phi) * p.alpha,
                                std::polar(std::sin(p.xi / 2.0), p.theta), dim, eps);
}

inline double mean_photon_number(const StateVector& psi) {
  double s = 0.0;
  for (int n = 0; n < psi.dim(); ++n) s += n * std::norm(psi[n]);
  return s / psi.amplitudes().squaredNorm();
}

inline double mean_photon_number(const DensityMatrix& rho) {
  double s = 0.0;
  for (int n = 0; n < rho.dim(); ++n) s += n * rho(n, n).real();
  return s;
}

/// <psi|rho|psi>.
inline double fidelity(const DensityMatrix& rho, const StateVector& psi) {
  if (rho.dim() != psi.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  const CVector& v = psi.amplitudes();
  const double f = (v.adjoint() * rho.matrix() * v)(0, 0).real() / v.squaredNorm();
  return std::clamp(f, 0.0, 1.0);
}

/// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2.
inline double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  // Eigenvalues at rounding level are zeroed; their square roots would otherwise add O(1e-8) noise.
  const auto clipped_sqrt = [](Eigen::VectorXd ev) {
    const double floor = 1e-13 * std::max(ev.maxCoeff(), 0.0);
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
    return ev;
  };
  Eigen::SelfAdjointEigenSolver<CMatrix> ea(a.matrix());
  const CMatrix sqrt_a =
      ea.eigenvectors() * clipped_sqrt(ea.eigenvalues()).asDiagonal() * ea.eigenvectors().adjoint();
  const CMatrix inner = sqrt_a * b.matrix() * sqrt_a;
  Eigen::SelfAdjointEigenSolver<CMatrix> ei(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double tr = clipped_sqrt(ei.eigenvalues()).sum();
  return std::clamp(tr * tr, 0.0, 1.0);
}

/// Expectation of the photon-number parity operator (-1)^n.
inline double parity_expectation(const DensityMatrix& rho) {
  double s = 0.0;
  for (int n = 0; n < rho.dim(); ++n) s += (n % 2 == 0 ? 1.0 : -1.0) * rho(n, n).real();
  return s;
}

/// Photon-number parity operator as a matrix.
inline CMatrix parity_operator(int dim) {
  CMatrix p = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) p(n, n) = (n % 2 == 0) ? 1.0 : -1.0;
  return p;
}

/// Annihilation operator truncated to dim levels.
inline CMatrix annihilation(int dim) {
  CMatrix a = CMatrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

/// Embeds (or truncates, when smaller) a density matrix into a new cutoff.
inline DensityMatrix resize(const DensityMatrix& rho, int dim) {
  CMatrix m = CMatrix::Zero(dim, dim);
  const int k = std::min(dim, rho.dim());
  m.topLeftCorner(k, k) = rho.matrix().topLeftCorner(k, k);
  return DensityMatrix::normalized(m);
}

}  // namespace catsim
