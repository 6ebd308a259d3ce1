#pragma once

// Wigner functions, quadrature distributions and the scalar metrics derived
// from them (fringe visibility, squeezing).

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "catsim/fock.hpp"

namespace catsim {

// ---------------------------------------------------------------------------
// Hermite functions and quadrature distributions

/// Normalized Hermite functions psi_n(x) = H_n(x) e^{-x^2/2} / (pi^{1/4} sqrt(2^n n!)), n < dim.
///
/// Uses the recurrence on the normalized functions, so no factorial or power
/// of two is ever formed and nothing overflows at large n.
inline std::vector<double> hermite_functions(double x, int dim) {
  std::vector<double> psi(dim, 0.0);
  if (dim == 0) return psi;
  psi[0] = std::pow(kPi, -0.25) * std::exp(-0.5 * x * x);
  if (dim > 1) psi[1] = std::sqrt(2.0) * x * psi[0];
  for (int n = 2; n < dim; ++n)
    psi[n] = std::sqrt(2.0 / n) * x * psi[n - 1] - std::sqrt((n - 1.0) / n) * psi[n - 2];
  return psi;
}

/// Outer bound beyond which every psi_n, n < dim, is negligible.
inline double hermite_support(int dim) { return std::sqrt(2.0 * dim + 1.0) + 9.0; }

/// I_mn = integral of psi_m psi_n over [a, b]; infinite bounds are allowed.
inline Eigen::MatrixXd band_integrals(double a, double b, int dim) {
  const double lim = hermite_support(dim);
  a = std::max(a, -lim);
  b = std::min(b, lim);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim, dim);
  if (!(b > a)) return out;
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const int pieces = std::max(1, static_cast<int>(std::ceil((b - a) / 0.25)));
  const double h = (b - a) / pieces;
  const auto& abscissa = Rule::abscissa();
  const auto& weights = Rule::weights();
  Eigen::VectorXd psi(dim);
  auto accumulate = [&](double x, double w) {
    const auto v = hermite_functions(x, dim);
    for (int n = 0; n < dim; ++n) psi(n) = v[n];
    out.noalias() += w * psi * psi.transpose();
  };
  for (int i = 0; i < pieces; ++i) {
    const double mid = a + (i + 0.5) * h;
    const double half = 0.5 * h;
    // boost stores the non-negative half of a symmetric rule
    for (std::size_t j = 0; j < abscissa.size(); ++j) {
      const double w = weights[j] * half;
      if (abscissa[j] == 0.0) {
        accumulate(mid, w);
      } else {
        accumulate(mid + half * abscissa[j], w);
        accumulate(mid - half * abscissa[j], w);
      }
    }
  }
  return out;
}

/// <x_theta| rho |x_theta> for x_theta = (a e^{-i theta} + a^dag e^{i theta}) / sqrt(2).
inline double quadrature_pdf(const DensityMatrix& rho, double theta_lo, double x) {
  const int d = rho.dim();
  const auto psi = hermite_functions(x, d);
  CVector v(d);
  for (int n = 0; n < d; ++n) v(n) = std::polar(psi[n], n * theta_lo);
  return std::max(0.0, (v.adjoint() * rho.matrix() * v)(0, 0).real());
}

/// Probability that x_theta falls in [a, b].
inline double quadrature_probability(const DensityMatrix& rho, double theta_lo, double a, double b) {
  const int d = rho.dim();
  const Eigen::MatrixXd band = band_integrals(a, b, d);
  Complex s{};
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) s += rho(n, m) * std::polar(band(m, n), (m - n) * theta_lo);
  return std::clamp(s.real(), 0.0, 1.0);
}

struct QuadratureMoments {
  double mean;
  double variance;
};

/// Exact first and second moments of x_theta from the ladder-operator expectations.
inline QuadratureMoments quadrature_moments(const DensityMatrix& rho, double theta_lo) {
  const int d = rho.dim();
  Complex ea{}, ea2{};
  double en = 0.0;
  for (int n = 1; n < d; ++n) {
    ea += std::sqrt(static_cast<double>(n)) * rho(n, n - 1);
    en += n * rho(n, n).real();
  }
  for (int n = 2; n < d; ++n) ea2 += std::sqrt(n * (n - 1.0)) * rho(n, n - 2);
  const Complex ph = std::polar(1.0, -theta_lo);
  const double mean = std::sqrt(2.0) * std::real(ph * ea);
  const double second = std::real(ph * ph * ea2) + en + 0.5;
  return {mean, second - mean * mean};
}

inline double quadrature_std(const DensityMatrix& rho, double theta_lo) {
  return std::sqrt(std::max(0.0, quadrature_moments(rho, theta_lo).variance));
}

/// Smallest quadrature spread over LO phases, scanned on n_angles points in [0, pi).
inline double min_quadrature_std(const DensityMatrix& rho, int n_angles = 180) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n_angles; ++i) best = std::min(best, quadrature_std(rho, kPi * i / n_angles));
  return best;
}

/// Predicted Delta p / Delta p_vac of the lossy cat |a> + e^{i theta}|-a> (even cat by default).
inline double squeezing_model(double alpha_sq, double L, double theta = 0.0) {
  if (theta == 0.0) return std::sqrt(1.0 - 4.0 * (1.0 - L) * alpha_sq / (1.0 + std::exp(2.0 * alpha_sq)));
  // for sin(theta) != 0 the cat also has a nonzero mean p
  const double s = std::exp(-2.0 * alpha_sq), den = 1.0 + s * std::cos(theta);
  const double mean_p = s * std::sin(theta) / den;
  return std::sqrt(1.0 - 4.0 * (1.0 - L) * alpha_sq * (s * std::cos(theta) / den + mean_p * mean_p));
}

/// Noise reduction in dB for a standard-deviation ratio (positive means squeezed).
inline double squeezing_db(double std_ratio) { return -20.0 * std::log10(std_ratio); }

inline constexpr double kVacuumStd = 0.70710678118654752440;

// ---------------------------------------------------------------------------
// Wigner functions

struct GridSpec {
  double q_min = -4.0, q_max = 4.0, p_min = -4.0, p_max = 4.0;
  int nq = 101, np = 101;

  double q(int i) const { return nq > 1 ? q_min + (q_max - q_min) * i / (nq - 1) : q_min; }
  double p(int j) const { return np > 1 ? p_min + (p_max - p_min) * j / (np - 1) : p_min; }
  double dq() const { return nq > 1 ? (q_max - q_min) / (nq - 1) : 1.0; }
  double dp() const { return np > 1 ? (p_max - p_min) / (np - 1) : 1.0; }
};

struct WignerGrid {
  GridSpec spec;
  Eigen::MatrixXd values;  ///< values(i, j) = W(q_i, p_j)
  bool window_warning = false;

  /// Trapezoidal integral over the grid.
  double integral() const {
    double s = 0.0;
    for (int i = 0; i < spec.nq; ++i)
      for (int j = 0; j < spec.np; ++j) {
        double w = 1.0;
        if (i == 0 || i == spec.nq - 1) w *= 0.5;
        if (j == 0 || j == spec.np - 1) w *= 0.5;
        s += w * values(i, j);
      }
    return s * spec.dq() * spec.dp();
  }

  double min() const { return values.minCoeff(); }
  double max() const { return values.maxCoeff(); }
};

/// Evaluates W at one phase-space point through the displaced-parity series
///   W = (1/pi) sum_mn rho_nm <m| D(a) P D(a)^dag |n>,  a = (q + i p)/sqrt(2),
/// with the matrix elements written in terms of generalized Laguerre polynomials.
inline double wigner_point(const CMatrix& rho, double q, double p) {
  const int d = static_cast<int>(rho.rows());
  const Complex a{q / std::sqrt(2.0), p / std::sqrt(2.0)};
  const double x = 4.0 * std::norm(a);
  const double mod2a = 2.0 * std::abs(a);
  const double log2a = mod2a > 0.0 ? std::log(mod2a) : -std::numeric_limits<double>::infinity();
  const double arg = std::arg(a);
  std::vector<double> lgam(d + 1);
  for (int n = 0; n <= d; ++n) lgam[n] = std::lgamma(n + 1.0);

  double diag = 0.0;
  Complex off{};
  for (int k = 0; k < d; ++k) {
    if (k > 0 && mod2a == 0.0) break;
    const Complex phase = std::polar(1.0, k * arg);
    double lm2 = 0.0, lm1 = 0.0;
    for (int n = 0; n + k < d; ++n) {
      double lag;
      if (n == 0) {
        lag = 1.0;
      } else if (n == 1) {
        lag = 1.0 + k - x;
      } else {
        lag = ((2.0 * n - 1.0 + k - x) * lm1 - (n - 1.0 + k) * lm2) / n;
      }
      lm2 = lm1;
      lm1 = lag;
      const int m = n + k;
      const double logpre = 0.5 * (lgam[n] - lgam[m]) + (k > 0 ? k * log2a : 0.0) - 0.5 * x;
      const double elem = ((n % 2 == 0) ? 1.0 : -1.0) * std::exp(logpre) * lag;
      if (k == 0) {
        diag += rho(n, n).real() * elem;
      } else {
        off += rho(n, m) * phase * elem;
      }
    }
  }
  return (diag + 2.0 * off.real()) / kPi;
}

inline double wigner_point(const DensityMatrix& rho, double q, double p) {
  return wigner_point(rho.matrix(), q, p);
}

/// Wigner function of a (possibly non-positive, e.g. Stokes-component) operator on a grid.
inline WignerGrid wigner(const CMatrix& op, const GridSpec& spec = {}) {
  WignerGrid g;
  g.spec = spec;
  g.values.resize(spec.nq, spec.np);
  for (int i = 0; i < spec.nq; ++i)
    for (int j = 0; j < spec.np; ++j) g.values(i, j) = wigner_point(op, spec.q(i), spec.p(j));
  return g;
}

inline WignerGrid wigner(const DensityMatrix& rho, const GridSpec& spec = {}) {
  WignerGrid g = wigner(rho.matrix(), spec);
  g.window_warning = std::abs(1.0 - g.integral()) > 5e-2;
  return g;
}

/// Closed-form Wigner function of the cavity-generated lossy cat.
///
/// Peaks sit at q = sqrt(2) r for the two (real) reflected amplitudes; the
/// central fringe is damped by exp(-2(1-eta) eta alpha^2).
inline double analytic_lossy_cat_wigner(double q, double p, double r_down, double r_up, double eta,
                                        double alpha, double theta) {
  const double s2 = std::sqrt(2.0);
  const double a2 = alpha * alpha;
  const double peaks = std::exp(-p * p - (q - s2 * r_down) * (q - s2 * r_down)) +
                       std::exp(-p * p - (q - s2 * r_up) * (q - s2 * r_up));
  const double qc = (r_down + r_up) / s2;
  const double fringe = 2.0 * std::exp(-2.0 * (1.0 - eta) * eta * a2) *
                        std::exp(-p * p - (q - qc) * (q - qc)) *
                        std::cos(theta + std::sqrt(8.0) * eta * alpha * p);
  return (peaks + fringe) / (2.0 * kPi) / (1.0 + std::exp(-2.0 * eta * a2) * std::cos(theta));
}

/// V = (pi/2)(W_even(q0, p0) - W_odd(q0, p0)).
inline double fringe_visibility(const DensityMatrix& rho_even, const DensityMatrix& rho_odd,
                                double q0 = 0.0, double p0 = 0.0) {
  return 0.5 * kPi * (wigner_point(rho_even, q0, p0) - wigner_point(rho_odd, q0, p0));
}

/// sinh(2(1-L) a0^2) / sinh(2 a0^2); tends to 1 as a0 -> 0.
inline double visibility_model(double alpha0_sq, double L) {
  if (alpha0_sq == 0.0) return 1.0 - L;  // limit of the ratio
  return std::sinh(2.0 * (1.0 - L) * alpha0_sq) / std::sinh(2.0 * alpha0_sq);
}

// ---------------------------------------------------------------------------
// CSV

/// First line carries the grid metadata, then nq rows of np comma-separated values.
inline void write_wigner_csv(const WignerGrid& g, std::ostream& os) {
  char buf[64];
  const auto& s = g.spec;
  std::snprintf(buf, sizeof buf, "%.10g", s.q_min);
  os << "# wigner-grid v1 q_min=" << buf;
  std::snprintf(buf, sizeof buf, "%.10g", s.q_max);
  os << " q_max=" << buf;
  std::snprintf(buf, sizeof buf, "%.10g", s.p_min);
  os << " p_min=" << buf;
  std::snprintf(buf, sizeof buf, "%.10g", s.p_max);
  os << " p_max=" << buf << " nq=" << s.nq << " np=" << s.np << '\n';
  for (int i = 0; i < s.nq; ++i) {
    for (int j = 0; j < s.np; ++j) {
      std::snprintf(buf, sizeof buf, "%.10e", g.values(i, j));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

inline WignerGrid read_wigner_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("# wigner-grid v1", 0) != 0)
    throw std::runtime_error("wigner csv: missing header");
  WignerGrid g;
  if (std::sscanf(line.c_str(), "# wigner-grid v1 q_min=%lf q_max=%lf p_min=%lf p_max=%lf nq=%d np=%d",
                  &g.spec.q_min, &g.spec.q_max, &g.spec.p_min, &g.spec.p_max, &g.spec.nq,
                  &g.spec.np) != 6)
    throw std::runtime_error("wigner csv: malformed header");
  g.values.resize(g.spec.nq, g.spec.np);
  for (int i = 0; i < g.spec.nq; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("wigner csv: truncated");
    std::stringstream ss(line);
    std::string cell;
    for (int j = 0; j < g.spec.np; ++j) {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("wigner csv: short row");
      g.values(i, j) = std::stod(cell);
    }
  }
  return g;
}

}  // namespace catsim
