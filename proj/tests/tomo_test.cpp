#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "catsim/protocol.hpp"
#include "catsim/tomo.hpp"

using namespace catsim;

namespace {

DensityMatrix cat_density(double a, double theta, int dim = 40) {
  CatParams p;
  p.alpha = a;
  p.theta = theta;
  return DensityMatrix::pure(cat_state(p, dim));
}

DensityMatrix truncated(const DensityMatrix& rho, int d) {
  return DensityMatrix::normalized(rho.matrix().topLeftCorner(d, d));
}

void expect_monotone(const MleResult& r) {
  for (std::size_t i = 1; i < r.loglik.size(); ++i) ASSERT_GE(r.loglik[i], r.loglik[i - 1]) << "iteration " << i;
}

}  // namespace

TEST(Povm, ResolvesIdentityPerPhaseBin) {
  for (double L : {0.0, 0.25}) {
    MleOptions o;
    o.dim = 12;
    o.loss_correction_L = L;
    o.n_theta_bins = 6;
    o.n_x_bins = 30;
    for (int t : {0, 4}) {
      CMatrix sum = CMatrix::Zero(o.dim, o.dim);
      for (int b = 0; b < o.n_x_bins; ++b) {
        const CMatrix pi = povm_element(t, b, o);
        sum += pi;
        Eigen::SelfAdjointEigenSolver<CMatrix> es(pi);
        EXPECT_GT(es.eigenvalues().minCoeff(), -1e-12);
      }
      EXPECT_LT((sum - CMatrix::Identity(o.dim, o.dim)).cwiseAbs().maxCoeff(), 1e-6) << L << " " << t;
    }
  }
}

TEST(Povm, NarrowBinsApproachQuadratureProjector) {
  MleOptions o;
  o.dim = 16;
  o.n_theta_bins = 3600;
  o.n_x_bins = 12000;
  const DensityMatrix rho = cat_density(1.0, 0.5, 16);
  const int t = 700, b = 6500;
  const double th = (t + 0.5) * 2.0 * kPi / o.n_theta_bins;
  const double w = 12.0 / o.n_x_bins, x = -6.0 + (b + 0.5) * w;
  const double p = (rho.matrix() * povm_element(t, b, o)).trace().real();
  EXPECT_NEAR(p / w, quadrature_pdf(rho, th, x), 1e-5);
}

TEST(Mle, RoundTripWithoutLoss) {
  const std::vector<std::pair<const char*, DensityMatrix>> states = {
      {"vacuum", DensityMatrix::pure(StateVector::fock(0, 40))},
      {"coherent 1.0", DensityMatrix::pure(coherent_state(1.0, 40))},
      {"even cat 1.0", cat_density(1.0, 0.0)},
      {"odd cat 1.4", cat_density(1.4, kPi)},
  };
  for (const auto& [name, rho] : states) {
    const MeasurementRun run = sample_quadratures(rho, 30000, 0.0, 2024);
    const MleResult r = mle_rhor(run);
    expect_monotone(r);
    EXPECT_TRUE(r.converged) << name;
    EXPECT_GT(fidelity(r.rho_hat, truncated(rho, 20)), 0.97) << name;
  }
}

TEST(Mle, LossAwarePovmRecoversPreLossState) {
  const DensityMatrix odd = cat_density(1.4, kPi);
  const MeasurementRun run = sample_quadratures(odd, 30000, 0.25, 2025);
  MleOptions o;
  o.loss_correction_L = 0.25;
  const MleResult r = mle_rhor(run, o);
  expect_monotone(r);
  EXPECT_GT(fidelity(r.rho_hat, truncated(odd, 20)), 0.95);
  EXPECT_LT(parity_expectation(r.rho_hat), -0.8);
}

TEST(Mle, UncorrectedReconstructionSeesTheLossyState) {
  const DensityMatrix odd = cat_density(1.4, kPi);
  const MeasurementRun run = sample_quadratures(odd, 30000, 0.25, 2026);
  const MleResult r = mle_rhor(run);
  expect_monotone(r);
  EXPECT_GT(fidelity(r.rho_hat, truncated(loss_channel(odd, 0.25), 20)), 0.98);
  EXPECT_LT(fidelity(r.rho_hat, truncated(odd, 20)), 0.9);
}

TEST(Mle, FixedPointAtConvergence) {
  const MeasurementRun run = sample_quadratures(cat_density(1.0, 0.0), 20000, 0.0, 5);
  const MleResult r = mle_rhor(run);
  ASSERT_TRUE(r.converged);
  EXPECT_LT(r.fixed_point_residual, 1e-4);
  EXPECT_EQ(static_cast<int>(r.loglik.size()), r.iterations + 1);
}

TEST(Mle, DeterministicGivenRecords) {
  const MeasurementRun run = sample_quadratures(cat_density(1.0, kPi), 5000, 0.0, 8);
  MleOptions o;
  o.max_iters = 50;
  const MleResult a = mle_rhor(run, o), b = mle_rhor(run, o);
  EXPECT_EQ(a.loglik, b.loglik);
  EXPECT_EQ((a.rho_hat.matrix() - b.rho_hat.matrix()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_FALSE(a.converged);
  EXPECT_EQ(a.iterations, 50);
}

TEST(Mle, InsufficientPhaseCoverage) {
  MeasurementRun run;
  for (int i = 0; i < 100; ++i) run.records.push_back({0.001 * (i % 10), 0.1 * (i % 7) - 0.3});
  try {
    mle_rhor(run);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient phase coverage"), std::string::npos);
  }
  EXPECT_THROW(inverse_radon(run, GridSpec{}), NumericalError);
}

TEST(Mle, OptionsValidated) {
  const MeasurementRun run = sample_quadratures(cat_density(1.0, 0.0), 100, 0.0, 1);
  MleOptions o;
  o.loss_correction_L = 1.0;
  EXPECT_THROW(mle_rhor(run, o), std::invalid_argument);
  o = {};
  o.n_x_bins = 1;
  EXPECT_THROW(mle_rhor(run, o), std::invalid_argument);
}

TEST(Uncertainty, ParityErrorScalesAsInverseSqrtN) {
  const DensityMatrix rho = loss_channel(cat_density(1.4, kPi), 0.3);
  std::vector<double> log_n, log_s;
  for (int n : {1000, 10000, 100000}) {
    const MeasurementRun run = sample_quadratures(rho, n, 0.0, 1);
    const MleResult r = mle_rhor(run);
    const UncertaintySummary u = uncertainty(run, r.rho_hat, MleOptions{});
    EXPECT_EQ(u.method, "hessian");
    log_n.push_back(std::log10(n));
    log_s.push_back(std::log10(u.sigma_parity));
  }
  const double slope = (log_s[2] - log_s[0]) / (log_n[2] - log_n[0]);
  EXPECT_NEAR(slope, -0.5, 0.1);
}

TEST(Uncertainty, HessianAgreesWithBootstrap) {
  const DensityMatrix rho = loss_channel(cat_density(1.4, kPi), 0.3);
  const MeasurementRun run = sample_quadratures(rho, 10000, 0.0, 1);
  const MleResult r = mle_rhor(run);
  const UncertaintySummary h = uncertainty(run, r.rho_hat, MleOptions{});
  UncertaintyOptions bo;
  bo.force_bootstrap = true;
  bo.bootstrap_samples = 60;
  const UncertaintySummary b = uncertainty(run, r.rho_hat, MleOptions{}, nullptr, bo);
  EXPECT_EQ(b.method, "bootstrap");
  EXPECT_NEAR(h.sigma_parity / b.sigma_parity, 1.0, 0.35);
}

TEST(Uncertainty, DuplicatedDataHalvesVariance) {
  const MeasurementRun run = sample_quadratures(loss_channel(cat_density(1.0, 0.0), 0.2), 5000, 0.0, 3);
  MeasurementRun twice = run;
  twice.records.insert(twice.records.end(), run.records.begin(), run.records.end());
  const MleResult a = mle_rhor(run), b = mle_rhor(twice);
  EXPECT_LT((a.rho_hat.matrix() - b.rho_hat.matrix()).cwiseAbs().maxCoeff(), 1e-9);
  const StateVector ref = cat_state(CatParams{1.0, kPi, 0.0, kPi / 2.0}, 20);
  const UncertaintySummary ua = uncertainty(run, a.rho_hat, MleOptions{}, &ref);
  const UncertaintySummary ub = uncertainty(twice, b.rho_hat, MleOptions{}, &ref);
  EXPECT_NEAR(ub.sigma_parity * ub.sigma_parity / (ua.sigma_parity * ua.sigma_parity), 0.5, 1e-6);
  EXPECT_NEAR(ub.sigma_mean_n * ub.sigma_mean_n / (ua.sigma_mean_n * ua.sigma_mean_n), 0.5, 1e-6);
  ASSERT_TRUE(ua.sigma_fidelity && ub.sigma_fidelity);
  EXPECT_NEAR(*ub.sigma_fidelity / *ua.sigma_fidelity, std::sqrt(0.5), 1e-6);
}

TEST(Uncertainty, VacuumOriginCoveredAtThreeSigma) {
  const MeasurementRun run = sample_quadratures(DensityMatrix::pure(StateVector::fock(0, 10)), 10000, 0.0, 11);
  const MleResult r = mle_rhor(run);
  const UncertaintySummary u = uncertainty(run, r.rho_hat, MleOptions{});
  const double w00 = wigner_point(r.rho_hat, 0.0, 0.0);
  EXPECT_GT(u.sigma_w00, 0.0);
  EXPECT_LE(std::abs(w00 - 1.0 / kPi), 3.0 * u.sigma_w00);
}

TEST(Radon, KernelLimits) {
  EXPECT_NEAR(radon_kernel(0.0, 5.0), 12.5, 1e-12);
  EXPECT_NEAR(radon_kernel(1e-5, 5.0), radon_kernel(2e-4, 5.0), 1e-4);
  const double u = 0.7, kc = 3.0;
  EXPECT_NEAR(radon_kernel(u, kc), (std::cos(kc * u) + kc * u * std::sin(kc * u) - 1.0) / (u * u), 1e-12);
}

TEST(Radon, VacuumPeakHeight) {
  const MeasurementRun run = sample_quadratures(DensityMatrix::pure(StateVector::fock(0, 10)), 30000, 0.0, 12);
  GridSpec g;
  g.nq = g.np = 21;
  g.q_min = g.p_min = -2.0;
  g.q_max = g.p_max = 2.0;
  const WignerGrid w = inverse_radon(run, g);
  EXPECT_NEAR(w.values(10, 10), 1.0 / kPi, 0.1 / kPi);
  EXPECT_NEAR(w.integral(), 1.0, 0.05);
}

TEST(Radon, CoherentPeakPositionAndMleAgreement) {
  const double a = 2.3, L = 0.2;
  const MeasurementRun run = sample_quadratures(DensityMatrix::pure(coherent_state(a, 50)), 30000, L, 13);
  GridSpec g;
  g.q_min = g.p_min = -5.0;
  g.q_max = g.p_max = 5.0;
  g.nq = g.np = 51;
  const WignerGrid w = inverse_radon(run, g);
  Eigen::Index i = 0, j = 0;
  w.values.maxCoeff(&i, &j);
  EXPECT_NEAR(g.q(static_cast<int>(i)), std::sqrt(2.0) * a * std::sqrt(1.0 - L), g.dq());
  EXPECT_NEAR(g.p(static_cast<int>(j)), 0.0, g.dp());

  const WignerGrid m = wigner(mle_rhor(run).rho_hat, g);
  Eigen::Index mi = 0, mj = 0;
  m.values.maxCoeff(&mi, &mj);
  EXPECT_LE(std::abs(mi - i), 1);
  EXPECT_LE(std::abs(mj - j), 1);
}

TEST(Radon, UnconditionedReflectionShowsNoFringes) {
  const CavityParams p = CavityParams::from_total(7.8, 2.5, 2.3, 3.0);
  const AtomLightState s = run_protocol(p, 2.3, SpinRotation{}, NoiseConfig{});
  const MeasurementRun run = sample_quadratures(reduced_light(s), 100000, 0.0, 14);
  GridSpec g;
  g.q_min = g.p_min = -5.0;
  g.q_max = g.p_max = 5.0;
  g.nq = g.np = 41;
  const WignerGrid w = inverse_radon(run, g);
  // two peaks near q = sqrt(2) r
  const int centre = 20;
  double fringe = 0.0;
  for (int j = 0; j < g.np; ++j)
    if (std::abs(g.p(j)) < 2.0) fringe = std::max(fringe, std::abs(w.values(centre, j)));
  EXPECT_LT(fringe, 0.05 / kPi);
  const double q_up = std::sqrt(2.0) * reflection_branches(p, 2.3).r_up.real();
  double best = -1.0, best_q = 0.0;
  for (int i = 0; i < g.nq; ++i)
    if (g.q(i) > 0.0 && w.values(i, centre) > best) {
      best = w.values(i, centre);
      best_q = g.q(i);
    }
  EXPECT_NEAR(best_q, q_up, g.dq());
  EXPECT_GT(best, 0.3 / kPi);
}

TEST(Csv, DensityMatrixParts) {
  Eigen::MatrixXd m(2, 2);
  m << 0.5, 0.25, 0.25, 0.5;
  std::stringstream ss;
  write_matrix_csv(m, "real", ss);
  EXPECT_EQ(ss.str(),
            "# density-matrix v1 part=real dim=2\n5.000000000000e-01,2.500000000000e-01\n"
            "2.500000000000e-01,5.000000000000e-01\n");
}
