#pragma once

// Photon loss, optical-phase diffusion and atomic detection-error maps.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "catsim/fock.hpp"

namespace catsim {

namespace detail {

// Kraus weights w[n][k] = sqrt(C(n,k) (1-L)^(n-k) L^k) of the beam-splitter loss map.
inline std::vector<std::vector<double>> loss_weights(int dim, double L) {
  std::vector<std::vector<double>> w(dim);
  const double lt = std::log1p(-L);
  const double ll = (L > 0.0) ? std::log(L) : 0.0;
  for (int n = 0; n < dim; ++n) {
    w[n].assign(n + 1, 0.0);
    for (int k = 0; k <= n; ++k) {
      if (L == 0.0) {
        w[n][k] = (k == 0) ? 1.0 : 0.0;
        continue;
      }
      const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
      w[n][k] = std::exp(0.5 * (lc + (n - k) * lt + k * ll));
    }
  }
  return w;
}

inline void check_loss(double L) {
  if (!(L >= 0.0 && L < 1.0)) throw std::invalid_argument("loss must lie in [0, 1)");
}

}  // namespace detail

/// Applies the loss map to an arbitrary operator (not necessarily a state).
///
/// Works on any square block, which is how the map acts on the light factor
/// of an atom-light operator.
inline CMatrix apply_loss(const CMatrix& x, double L) {
  detail::check_loss(L);
  if (L == 0.0) return x;
  const int d = static_cast<int>(x.rows());
  const auto w = detail::loss_weights(d, L);
  CMatrix out = CMatrix::Zero(d, d);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      const Complex v = x(m, n);
      if (v == Complex{}) continue;
      const int kmax = std::min(m, n);
      for (int k = 0; k <= kmax; ++k) out(m - k, n - k) += w[m][k] * w[n][k] * v;
    }
  return out;
}

/// Heisenberg-picture (adjoint) loss map: sum_k A_k^dag X A_k.
inline CMatrix apply_loss_adjoint(const CMatrix& x, double L) {
  detail::check_loss(L);
  if (L == 0.0) return x;
  const int d = static_cast<int>(x.rows());
  const auto w = detail::loss_weights(d, L);
  CMatrix out = CMatrix::Zero(d, d);
  for (int m = 0; m < d; ++m)
    for (int n = 0; n < d; ++n) {
      const int kmax = std::min(m, n);
      Complex s{};
      for (int k = 0; k <= kmax; ++k) s += w[m][k] * w[n][k] * x(m - k, n - k);
      out(m, n) = s;
    }
  return out;
}

/// Beam-splitter photon loss removing a fraction L of the intensity.
inline DensityMatrix loss_channel(const DensityMatrix& rho, double L) {
  return DensityMatrix::normalized(apply_loss(rho.matrix(), L));
}

/// Combined loss of channels in series: 1 - prod(1 - L_i).
inline double compose_losses(const std::vector<double>& losses) {
  double t = 1.0;
  for (double L : losses) {
    detail::check_loss(L);
    t *= 1.0 - L;
  }
  return 1.0 - t;
}

/// Gaussian dephasing: rho_mn -> rho_mn exp(-sigma^2 (m-n)^2 / 2).
inline CMatrix apply_phase_diffusion(const CMatrix& x, double sigma_phi) {
  if (!(sigma_phi >= 0.0)) throw std::invalid_argument("phase_diffusion: sigma must be >= 0");
  if (sigma_phi == 0.0) return x;
  CMatrix out = x;
  for (int m = 0; m < x.rows(); ++m)
    for (int n = 0; n < x.cols(); ++n) {
      const double k = m - n;
      out(m, n) *= std::exp(-0.5 * sigma_phi * sigma_phi * k * k);
    }
  return out;
}

inline DensityMatrix phase_diffusion(const DensityMatrix& rho, double sigma_phi) {
  return DensityMatrix(apply_phase_diffusion(rho.matrix(), sigma_phi));
}

/// (1 - eps) rho_sel + eps rho_other.
inline DensityMatrix detection_error_mix(const DensityMatrix& rho_sel, const DensityMatrix& rho_other,
                                         double eps) {
  if (rho_sel.dim() != rho_other.dim())
    throw std::invalid_argument("detection_error_mix: dimension mismatch");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("detection_error_mix: eps outside [0, 1]");
  return DensityMatrix((1.0 - eps) * rho_sel.matrix() + eps * rho_other.matrix());
}

/// Named loss contributions, each tagged with the group it belongs to.
class LossBudget {
 public:
  struct Entry {
    std::string label;
    std::string group;  // one of eff, o, m, d, n
    double loss;
  };

  void add(std::string label, std::string group, double loss) {
    detail::check_loss(loss);
    for (auto& e : entries_)
      if (e.label == label) {
        e.group = std::move(group);
        e.loss = loss;
        return;
      }
    entries_.push_back({std::move(label), std::move(group), loss});
  }

  const std::vector<Entry>& entries() const { return entries_; }

  /// Combined loss of one group ("eff", "o", "m", "d", "n").
  double group(const std::string& name) const {
    std::vector<double> ls;
    for (const auto& e : entries_)
      if (e.group == name) ls.push_back(e.loss);
    return compose_losses(ls);
  }

  /// Propagation and detection losses: everything except the cavity.
  double propagation_detection() const {
    std::vector<double> ls;
    for (const auto& e : entries_)
      if (e.group != "eff") ls.push_back(e.loss);
    return compose_losses(ls);
  }

  double total() const {
    std::vector<double> ls;
    for (const auto& e : entries_) ls.push_back(e.loss);
    return compose_losses(ls);
  }

  /// Itemized budget of the reference set-up.
  static LossBudget reference() {
    LossBudget b;
    b.add("cavity_reflectivity", "eff", 0.19);
    b.add("optics", "o", 0.095);
    b.add("isolator", "o", 0.03);
    b.add("switch_aod", "o", 0.025);
    b.add("mode_matching", "m", 0.06);
    b.add("photodiode_efficiency", "d", 0.015);
    b.add("detector_dark_noise", "n", 0.025);
    b.add("lo_laser_noise", "n", 0.018);
    b.add("highpass_signal", "n", 0.011);
    b.add("highpass_noise", "n", 0.002);
    return b;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace catsim
