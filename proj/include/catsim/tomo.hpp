#pragma once

// Homodyne state reconstruction: binned maximum likelihood (R rho R) with an
// optional loss-aware POVM, filtered back-projection of the Wigner function,
// and error bars from the observed information or a bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "catsim/channels.hpp"
#include "catsim/error.hpp"
#include "catsim/fock.hpp"
#include "catsim/homodyne.hpp"
#include "catsim/quadrature.hpp"

namespace catsim {

struct MleOptions {
  int dim = 20;
  double loss_correction_L = 0.0;  ///< detection loss folded into the POVM
  int max_iters = 2000;
  double tol = 1e-9;  ///< stop when the relative log-likelihood gain drops below this
  int n_theta_bins = 24;
  int n_x_bins = 120;
  double x_min = -6.0, x_max = 6.0;

  void validate() const {
    if (dim < 1) throw std::invalid_argument("MleOptions: dim must be >= 1");
    if (!(loss_correction_L >= 0.0 && loss_correction_L < 1.0))
      throw std::invalid_argument("MleOptions: loss_correction_L outside [0, 1)");
    if (max_iters < 1) throw std::invalid_argument("MleOptions: max_iters must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("MleOptions: tol must be > 0");
    if (n_theta_bins < 2 || n_x_bins < 2) throw std::invalid_argument("MleOptions: need at least 2 bins per axis");
    if (!(x_max > x_min)) throw std::invalid_argument("MleOptions: x_max must exceed x_min");
  }
};

/// Record counts on the (theta, x) grid. Out-of-range x land in the edge bins.
struct BinnedCounts {
  int n_theta = 0, n_x = 0;
  std::vector<double> counts;  ///< counts[t * n_x + b]
  std::vector<double> theta_totals;
  double total = 0.0;

  int occupied_theta_bins() const {
    return static_cast<int>(std::count_if(theta_totals.begin(), theta_totals.end(), [](double c) { return c > 0; }));
  }
};

namespace detail {

inline int theta_bin(double theta, int n) {
  const int b = static_cast<int>(std::floor(wrap_phase(theta) / (2.0 * kPi) * n));
  return std::clamp(b, 0, n - 1);
}

inline int x_bin(double x, double x_min, double x_max, int n) {
  const int b = static_cast<int>(std::floor((x - x_min) / (x_max - x_min) * n));
  return std::clamp(b, 0, n - 1);
}

inline double sinc(double z) { return std::abs(z) < 1e-8 ? 1.0 - z * z / 6.0 : std::sin(z) / z; }

/// Coordinates of a Hermitian matrix in an orthonormal Hermitian basis:
/// diagonal entries, then sqrt(2) Re and sqrt(2) Im of the upper triangle.
inline Eigen::VectorXd hermitian_coords(const CMatrix& x) {
  const int d = static_cast<int>(x.rows());
  Eigen::VectorXd c(d * d);
  int k = 0;
  for (int n = 0; n < d; ++n) c(k++) = x(n, n).real();
  for (int m = 0; m < d; ++m)
    for (int n = m + 1; n < d; ++n) {
      c(k++) = std::sqrt(2.0) * x(m, n).real();
      c(k++) = std::sqrt(2.0) * x(m, n).imag();
    }
  return c;
}

}  // namespace detail

inline BinnedCounts bin_records(const MeasurementRun& run, int n_theta, int n_x, double x_min, double x_max) {
  BinnedCounts b;
  b.n_theta = n_theta;
  b.n_x = n_x;
  b.counts.assign(static_cast<std::size_t>(n_theta) * n_x, 0.0);
  b.theta_totals.assign(n_theta, 0.0);
  for (const auto& r : run.records) {
    const int t = detail::theta_bin(r.theta, n_theta);
    b.counts[static_cast<std::size_t>(t) * n_x + detail::x_bin(r.x, x_min, x_max, n_x)] += 1.0;
    b.theta_totals[t] += 1.0;
  }
  b.total = static_cast<double>(run.records.size());
  return b;
}

/// POVM element for LO phases in theta bin t and quadrature values in x bin b.
///
/// The phase average over the bin is exact: e^{i(n-m)theta} averages to
/// e^{i(n-m)theta_c} sinc((n-m) dtheta / 2). The two outer x bins extend to
/// infinity so that each theta bin's elements sum to the identity.
inline CMatrix povm_element(int t, int b, const MleOptions& o, const Eigen::MatrixXd* band = nullptr) {
  const int d = o.dim;
  const double dth = 2.0 * kPi / o.n_theta_bins;
  const double th_c = (t + 0.5) * dth;
  const double w = (o.x_max - o.x_min) / o.n_x_bins;
  const double lo = b == 0 ? -std::numeric_limits<double>::infinity() : o.x_min + b * w;
  const double hi = b == o.n_x_bins - 1 ? std::numeric_limits<double>::infinity() : o.x_min + (b + 1) * w;
  const Eigen::MatrixXd own = band ? Eigen::MatrixXd() : band_integrals(lo, hi, d);
  const Eigen::MatrixXd& I = band ? *band : own;
  CMatrix pi(d, d);
  for (int n = 0; n < d; ++n)
    for (int m = 0; m < d; ++m) pi(n, m) = I(n, m) * detail::sinc((n - m) * dth / 2.0) * std::polar(1.0, (n - m) * th_c);
  return apply_loss_adjoint(pi, o.loss_correction_L);
}

/// Binned multinomial likelihood over the occupied (theta, x) cells.
class BinnedLikelihood {
 public:
  BinnedLikelihood(const MeasurementRun& run, const MleOptions& o) : opts_(o) {
    o.validate();
    if (run.records.empty()) throw std::invalid_argument("tomography: no records");
    counts_ = bin_records(run, o.n_theta_bins, o.n_x_bins, o.x_min, o.x_max);
    if (counts_.occupied_theta_bins() < 2) throw NumericalError("insufficient phase coverage");
    const int d = o.dim;
    std::vector<Eigen::MatrixXd> bands(o.n_x_bins);
    for (int b = 0; b < o.n_x_bins; ++b) {
      const double w = (o.x_max - o.x_min) / o.n_x_bins;
      const double lo = b == 0 ? -std::numeric_limits<double>::infinity() : o.x_min + b * w;
      const double hi = b == o.n_x_bins - 1 ? std::numeric_limits<double>::infinity() : o.x_min + (b + 1) * w;
      bands[b] = band_integrals(lo, hi, d);
    }
    for (int t = 0; t < o.n_theta_bins; ++t)
      for (int b = 0; b < o.n_x_bins; ++b) {
        const double c = counts_.counts[static_cast<std::size_t>(t) * o.n_x_bins + b];
        if (c > 0.0) {
          cells_.push_back({t, b});
          n_.push_back(c);
        }
      }
    povm_.resize(d * d, static_cast<Eigen::Index>(cells_.size()));
    for (std::size_t j = 0; j < cells_.size(); ++j) {
      const CMatrix pi = povm_element(cells_[j].first, cells_[j].second, o, &bands[cells_[j].second]);
      povm_.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const CVector>(pi.data(), d * d);
    }
  }

  int dim() const { return opts_.dim; }
  const MleOptions& options() const { return opts_; }
  const BinnedCounts& counts() const { return counts_; }
  std::size_t cells() const { return n_.size(); }
  double count(std::size_t j) const { return n_[j]; }
  CMatrix element(std::size_t j) const {
    const int d = opts_.dim;
    return Eigen::Map<const CMatrix>(povm_.col(static_cast<Eigen::Index>(j)).data(), d, d);
  }

  /// p_j = Tr(rho Pi_j) = sum_mn rho_mn conj(Pi_mn) for Hermitian Pi.
  Eigen::VectorXd probabilities(const CMatrix& rho) const {
    const int d = opts_.dim;
    const Eigen::Map<const CVector> v(rho.data(), d * d);
    return (povm_.adjoint() * v).real();
  }

  /// Log-likelihood, with probabilities clamped at 1e-300; sets `clamped` when that happens.
  double loglik(const Eigen::VectorXd& p, bool* clamped = nullptr) const {
    double s = 0.0;
    for (std::size_t j = 0; j < n_.size(); ++j) {
      double pj = p(static_cast<Eigen::Index>(j));
      if (pj < 1e-300) {
        pj = 1e-300;
        if (clamped) *clamped = true;
      }
      s += n_[j] * std::log(pj);
    }
    return s;
  }

  /// R = sum_j (f_j / p_j) Pi_j.
  CMatrix r_operator(const Eigen::VectorXd& p) const {
    const int d = opts_.dim;
    CVector w(static_cast<Eigen::Index>(n_.size()));
    for (std::size_t j = 0; j < n_.size(); ++j)
      w(static_cast<Eigen::Index>(j)) = n_[j] / counts_.total / std::max(p(static_cast<Eigen::Index>(j)), 1e-300);
    const CVector r = povm_ * w;
    return Eigen::Map<const CMatrix>(r.data(), d, d);
  }

  /// Replaces the counts (same occupied cells), used by the bootstrap.
  void set_counts(const std::vector<double>& n) {
    n_ = n;
    counts_.total = std::accumulate(n.begin(), n.end(), 0.0);
  }

 private:
  MleOptions opts_;
  BinnedCounts counts_;
  std::vector<std::pair<int, int>> cells_;
  std::vector<double> n_;
  CMatrix povm_;  // column j is vec(Pi_j)
};

struct MleResult {
  DensityMatrix rho_hat;
  std::vector<double> loglik;  ///< entry 0 is the starting point
  int iterations = 0;
  bool converged = false;
  bool clamped = false;    ///< some p_j fell below 1e-300
  int diluted_steps = 0;   ///< iterations that needed the diluted update
  double fixed_point_residual = 0.0;  ///< max |N[R rho R] - rho| at the end
};

/// Iterative R rho R. A plain step that would lower the likelihood is replaced
/// by the diluted step (1 + eps R) rho (1 + eps R) with eps halved until the
/// likelihood does not decrease, so the recorded trace is monotone.
inline MleResult mle_rhor(const BinnedLikelihood& model, const CMatrix* start = nullptr) {
  const MleOptions& o = model.options();
  const int d = o.dim;
  CMatrix rho = start ? *start : CMatrix(CMatrix::Identity(d, d) / static_cast<double>(d));
  MleResult res;
  Eigen::VectorXd p = model.probabilities(rho);
  double L = model.loglik(p, &res.clamped);
  res.loglik.push_back(L);
  const CMatrix eye = CMatrix::Identity(d, d);
  auto step = [&](const CMatrix& g) {
    CMatrix next = g * rho * g.adjoint();
    next = 0.5 * (next + next.adjoint());
    return CMatrix(next / next.trace().real());
  };
  for (int it = 0; it < o.max_iters; ++it) {
    const CMatrix R = model.r_operator(p);
    CMatrix cand = step(R);
    Eigen::VectorXd pc = model.probabilities(cand);
    double Lc = model.loglik(pc, &res.clamped);
    if (Lc < L) {
      ++res.diluted_steps;
      double eps = 1.0;
      for (;;) {
        cand = step(eye + eps * R);
        pc = model.probabilities(cand);
        Lc = model.loglik(pc, &res.clamped);
        if (Lc >= L) break;
        eps *= 0.5;
        if (eps < 1e-12) break;
      }
      if (Lc < L) {  // no ascent direction left: stationary to machine precision
        res.converged = true;
        break;
      }
    }
    if (Lc < L) throw NumericalError("R rho R: log-likelihood decreased");
    const double gain = Lc - L;
    rho = cand;
    p = pc;
    L = Lc;
    res.loglik.push_back(L);
    res.iterations = it + 1;
    if (gain <= o.tol * std::abs(L)) {
      res.converged = true;
      break;
    }
  }
  res.rho_hat = DensityMatrix::normalized(rho);
  res.fixed_point_residual = (step(model.r_operator(p)) - rho).cwiseAbs().maxCoeff();
  return res;
}

inline MleResult mle_rhor(const MeasurementRun& run, const MleOptions& opts = {}) {
  return mle_rhor(BinnedLikelihood(run, opts));
}

// ---------------------------------------------------------------------------
// Error bars

struct UncertaintySummary {
  std::string method;        ///< "hessian" or "bootstrap"
  int parameters = 0;        ///< real parameters after removing the trace direction
  double condition = 0.0;    ///< smallest / largest retained eigenvalue of the information matrix
  double sigma_parity = 0.0;
  double sigma_w00 = 0.0;    ///< sigma_parity / pi
  double sigma_mean_n = 0.0;
  std::optional<double> sigma_fidelity;  ///< with respect to the reference state, when given
};

struct UncertaintyOptions {
  double singular_ratio = 1e-12;  ///< eigenvalue ratio below which the information matrix counts as singular
  double rank_tol = 1e-3;         ///< relative eigenvalue above which a direction of rho_hat is in its support
  int bootstrap_samples = 200;
  int bootstrap_iters = 200;
  std::uint64_t bootstrap_seed = 1;
  bool force_bootstrap = false;
};

namespace detail {

inline CMatrix number_operator(int d) {
  CMatrix n = CMatrix::Zero(d, d);
  for (int k = 0; k < d; ++k) n(k, k) = k;
  return n;
}

inline UncertaintySummary bootstrap_uncertainty(const MeasurementRun& run, const DensityMatrix& rho_hat,
                                                const MleOptions& opts, const StateVector* reference,
                                                const UncertaintyOptions& u) {
  BinnedLikelihood model(run, opts);
  MleOptions quick = opts;
  quick.max_iters = u.bootstrap_iters;
  quick.tol = std::max(opts.tol, 1e-8);
  BinnedLikelihood resampled(run, quick);
  const std::size_t J = model.cells();
  std::vector<double> cdf(J);
  double acc = 0.0;
  for (std::size_t j = 0; j < J; ++j) cdf[j] = (acc += model.count(j));
  std::mt19937_64 rng(u.bootstrap_seed);
  const int d = opts.dim;
  const CMatrix P = parity_operator(d), N = number_operator(d);
  std::vector<double> par, num, fid;
  for (int s = 0; s < u.bootstrap_samples; ++s) {
    std::vector<double> n(J, 0.0);
    for (std::size_t i = 0; i < run.records.size(); ++i) {
      const double r = uniform53(rng) * acc;
      n[std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin()] += 1.0;
    }
    resampled.set_counts(n);
    const MleResult m = mle_rhor(resampled, &rho_hat.matrix());
    const CMatrix& r = m.rho_hat.matrix();
    par.push_back((r * P).trace().real());
    num.push_back((r * N).trace().real());
    if (reference) fid.push_back(fidelity(m.rho_hat, *reference));
  }
  auto sd = [](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  UncertaintySummary out;
  out.method = "bootstrap";
  out.parameters = d * d - 1;
  out.sigma_parity = sd(par);
  out.sigma_w00 = out.sigma_parity / kPi;
  out.sigma_mean_n = sd(num);
  if (reference) out.sigma_fidelity = sd(fid);
  return out;
}

}  // namespace detail

/// Covariance of rho_hat from the observed information
///   H = sum_j n_j g_j g_j^T / p_j^2,  g_j = coordinates of Pi_j,
/// propagated linearly to scalar observables.
///
/// The parameters live in the tangent space of the rank-r states at rho_hat:
/// in rho_hat's eigenbasis, every Hermitian matrix element that touches one of
/// the r eigenvectors with eigenvalue above `rank_tol` times the largest,
/// minus the trace direction. The block between two null-space vectors is
/// left out because quadrature data restricted to the occupied x range cannot
/// resolve it and H is numerically singular there. If H is still singular on
/// the tangent space, the result comes from a bootstrap instead.
inline UncertaintySummary uncertainty(const MeasurementRun& run, const DensityMatrix& rho_hat, const MleOptions& opts,
                                      const StateVector* reference = nullptr, const UncertaintyOptions& u = {}) {
  if (rho_hat.dim() != opts.dim) throw std::invalid_argument("uncertainty: rho_hat dim differs from opts.dim");
  if (reference && reference->dim() != opts.dim)
    throw std::invalid_argument("uncertainty: reference dim differs from opts.dim");
  if (u.force_bootstrap) return detail::bootstrap_uncertainty(run, rho_hat, opts, reference, u);
  const BinnedLikelihood model(run, opts);
  const int d = opts.dim;
  const Eigen::SelfAdjointEigenSolver<CMatrix> eig(rho_hat.matrix());
  const Eigen::VectorXd& lam = eig.eigenvalues();
  const CMatrix& V = eig.eigenvectors();
  std::vector<bool> in_support(d);
  for (int k = 0; k < d; ++k) in_support[k] = lam(k) > u.rank_tol * lam(d - 1);
  std::vector<std::pair<int, int>> pairs;  // (a, b), a <= b, at least one in the support
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b)
      if (in_support[a] || in_support[b]) pairs.push_back({a, b});
  auto coords = [&](const CMatrix& x) {
    const CMatrix y = V.adjoint() * x * V;
    Eigen::VectorXd c(static_cast<Eigen::Index>(2 * pairs.size()));
    Eigen::Index k = 0;
    for (const auto& [a, b] : pairs) {
      if (a == b) {
        c(k++) = y(a, a).real();
      } else {
        c(k++) = std::sqrt(2.0) * y(a, b).real();
        c(k++) = std::sqrt(2.0) * y(a, b).imag();
      }
    }
    return Eigen::VectorXd(c.head(k));
  };
  const int D = static_cast<int>(coords(CMatrix::Identity(d, d)).size());
  const Eigen::VectorXd p = model.probabilities(rho_hat.matrix());
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(D, D);
  for (std::size_t j = 0; j < model.cells(); ++j) {
    const Eigen::VectorXd g = coords(model.element(j));
    const double pj = std::max(p(static_cast<Eigen::Index>(j)), 1e-300);
    H.noalias() += (model.count(j) / (pj * pj)) * g * g.transpose();
  }
  Eigen::VectorXd t = coords(CMatrix::Identity(d, d));
  t.normalize();
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(D, D) - t * t.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(proj * H * proj);
  // drop the eigenvector closest to the trace direction
  Eigen::Index trace_idx = 0;
  (es.eigenvectors().transpose() * t).cwiseAbs().maxCoeff(&trace_idx);
  double lmax = 0.0, lmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < D; ++k) {
    if (k == trace_idx) continue;
    lmax = std::max(lmax, es.eigenvalues()(k));
    lmin = std::min(lmin, es.eigenvalues()(k));
  }
  const double cond = lmax > 0.0 ? lmin / lmax : 0.0;
  if (!(cond > u.singular_ratio)) {
    UncertaintySummary b = detail::bootstrap_uncertainty(run, rho_hat, opts, reference, u);
    b.condition = cond;
    return b;
  }
  auto sigma = [&](const CMatrix& S) {
    const Eigen::VectorXd v = proj * coords(S);
    double var = 0.0;
    for (Eigen::Index k = 0; k < D; ++k) {
      if (k == trace_idx) continue;
      const double c = es.eigenvectors().col(k).dot(v);
      var += c * c / es.eigenvalues()(k);
    }
    return std::sqrt(var);
  };
  UncertaintySummary out;
  out.method = "hessian";
  out.parameters = D - 1;
  out.condition = cond;
  out.sigma_parity = sigma(parity_operator(d));
  out.sigma_w00 = out.sigma_parity / kPi;
  out.sigma_mean_n = sigma(detail::number_operator(d));
  if (reference) {
    const CVector& v = reference->amplitudes();
    out.sigma_fidelity = sigma(v * v.adjoint() / v.squaredNorm());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtered back-projection

struct RadonOptions {
  double cutoff_kc = 5.0;
  int n_theta_bins = 90;
  int n_x_bins = 240;
  double x_min = -6.0, x_max = 6.0;
};

/// Ramp filter with a hard cutoff, K(u) = (cos(kc u) + kc u sin(kc u) - 1) / u^2.
inline double radon_kernel(double u, double kc) {
  const double z = kc * u;
  if (std::abs(z) < 1e-3) return kc * kc * (0.5 - z * z / 8.0 + z * z * z * z / 144.0);
  return (std::cos(z) + z * std::sin(z) - 1.0) / (u * u);
}

/// W(q, p) = 1/(4 pi^2) int_0^{2pi} dtheta int dx pr(x, theta) K(q cos theta + p sin theta - x),
/// estimated from binned histograms. Empty theta bins are skipped and the phase
/// measure is spread over the occupied ones. Nothing enforces W >= 0 or any
/// other physicality constraint.
inline WignerGrid inverse_radon(const MeasurementRun& run, const GridSpec& spec, const RadonOptions& o = {}) {
  if (run.records.empty()) throw std::invalid_argument("inverse_radon: no records");
  if (!(o.cutoff_kc > 0.0)) throw std::invalid_argument("inverse_radon: cutoff must be > 0");
  const BinnedCounts b = bin_records(run, o.n_theta_bins, o.n_x_bins, o.x_min, o.x_max);
  const int occupied = b.occupied_theta_bins();
  if (occupied < 2) throw NumericalError("insufficient phase coverage");
  const double dth = 2.0 * kPi / occupied;
  const double wx = (o.x_max - o.x_min) / o.n_x_bins;
  WignerGrid g;
  g.spec = spec;
  g.values = Eigen::MatrixXd::Zero(spec.nq, spec.np);
  for (int t = 0; t < o.n_theta_bins; ++t) {
    if (b.theta_totals[t] == 0.0) continue;
    const double th = (t + 0.5) * 2.0 * kPi / o.n_theta_bins;
    const double c = std::cos(th), s = std::sin(th);
    for (int k = 0; k < o.n_x_bins; ++k) {
      const double n = b.counts[static_cast<std::size_t>(t) * o.n_x_bins + k];
      if (n == 0.0) continue;
      const double x = o.x_min + (k + 0.5) * wx;
      const double weight = dth * n / b.theta_totals[t] / (4.0 * kPi * kPi);
      for (int i = 0; i < spec.nq; ++i)
        for (int j = 0; j < spec.np; ++j)
          g.values(i, j) += weight * radon_kernel(spec.q(i) * c + spec.p(j) * s - x, o.cutoff_kc);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// CSV output of a reconstructed density matrix

/// Writes one real matrix (e.g. Re rho or Im rho) with a one-line header.
inline void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& part, std::ostream& os) {
  os << "# density-matrix v1 part=" << part << " dim=" << m.rows() << '\n';
  char buf[40];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.12e", m(i, j));
      if (j) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace catsim
