#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "catsim/protocol.hpp"
#include "test_support.hpp"

using namespace catsim;
using catsim::testing::max_abs;

namespace {

CavityParams reference() { return CavityParams::from_total(7.8, 2.5, 2.3, 3.0); }

// Resonant cavity with r_up = -r_down; g^2 chosen so that 2 k_r g / (k g + g^2) = 2 - 2 k_r / k.
CavityParams symmetric() {
  const double k = 2.5, kr = 2.3, gm = 3.0;
  const double g2 = 2.0 * kr * gm / (2.0 - 2.0 * kr / k) - k * gm;
  return CavityParams::from_total(std::sqrt(g2), k, kr, gm);
}

CavityParams lossless() { return CavityParams{1e4, 2.5, 2.5, 0.0, 0.0, 3.0, 0.0}; }

// Methods density matrix built from the two branches and their loss-mode overlap.
CMatrix branch_density(const ReflectionBranches& b, double theta, int dim) {
  const CVector up = coherent_state(b.r_up, dim).amplitudes();
  const CVector dn = coherent_state(b.r_down, dim).amplitudes();
  const Complex e = std::polar(1.0, theta);
  CMatrix m = up * up.adjoint() + dn * dn.adjoint() + std::conj(e) * std::conj(b.loss_overlap) * up * dn.adjoint() +
              e * b.loss_overlap * dn * up.adjoint();
  return m / m.trace().real();
}

}  // namespace

TEST(Protocol, SpinRotationConvention) {
  const Eigen::Matrix2cd r = SpinRotation{}.matrix();
  EXPECT_NEAR(std::abs(r(0, 0) - 1.0 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r(1, 0) - 1.0 / std::sqrt(2.0)), 0.0, 1e-15);
  EXPECT_LT((r.adjoint() * r - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((SpinRotation{0.0, 1.3}.matrix() - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Protocol, ZeroInputLeavesProductState) {
  const AtomLightState s = run_protocol(reference(), 0.0, SpinRotation{kPi / 2.0, 0.7}, NoiseConfig{});
  const DensityMatrix light = reduced_light(s);
  EXPECT_NEAR(light(0, 0).real(), 1.0, 1e-14);
  const Projection up = project_atom(s, AtomState::kUp), dn = project_atom(s, AtomState::kDown);
  EXPECT_NEAR(up.prob + dn.prob, 1.0, 1e-14);
  EXPECT_NEAR(up.rho_light(0, 0).real(), 1.0, 1e-14);
  EXPECT_NEAR(dn.rho_light(0, 0).real(), 1.0, 1e-14);
  // after two pi/2 pulses with phase 0.7 the atom is in a pure rotated state
  const Eigen::Vector2cd atom = SpinRotation{kPi / 2.0, 0.7}.matrix() * SpinRotation{}.matrix().col(0);
  EXPECT_NEAR(up.prob, std::norm(atom(0)), 1e-14);
}

TEST(Protocol, ConditionalStateEqualsTracedOutExpression) {
  for (const CavityParams& p : {reference(), symmetric()}) {
    for (double theta : {0.0, 0.8, kPi}) {
      const AtomLightState s = run_protocol(p, 1.4, SpinRotation{kPi / 2.0, theta}, NoiseConfig{});
      const ReflectionBranches b = reflection_branches(p, 1.4);
      const int d = s.dim_light();
      EXPECT_LT(max_abs(project_atom(s, AtomState::kDown).rho_light.matrix() - branch_density(b, theta, d)), 1e-12);
      EXPECT_LT(max_abs(project_atom(s, AtomState::kUp).rho_light.matrix() - branch_density(b, theta + kPi, d)),
                1e-12);
    }
  }
}

TEST(Protocol, LossModeOverlapClosedForm) {
  const CavityParams p = symmetric();
  const double eta = efficiency(p).eta;
  for (double a : {0.5, 1.4, 2.0}) {
    const ReflectionBranches b = reflection_branches(p, a);
    EXPECT_NEAR(b.r_up.real(), eta * a, 1e-12);
    EXPECT_NEAR(b.r_down.real(), -eta * a, 1e-12);
    EXPECT_NEAR(std::abs(b.loss_overlap - std::exp(-2.0 * (1.0 - eta) * eta * a * a)), 0.0, 1e-12);
  }
  // only kappa_t + kappa_m enters
  CavityParams q = reference();
  const Complex ref = reflection_branches(q, 1.4).loss_overlap;
  q.kappa_t = 0.17;
  q.kappa_m = 0.03;
  EXPECT_NEAR(std::abs(reflection_branches(q, 1.4).loss_overlap - ref), 0.0, 1e-14);
}

TEST(Protocol, FidelityMatchesClosedForm) {
  const CavityParams p = symmetric();
  const double eta = efficiency(p).eta;
  for (double a : {0.5, 1.0, 1.4, 2.0}) {
    for (double theta : {0.0, kPi}) {
      const AtomLightState s = run_protocol(p, a, SpinRotation{kPi / 2.0, theta}, NoiseConfig{});
      const Projection dn = project_atom(s, AtomState::kDown);
      const StateVector ideal = ideal_output_cat(reflection_branches(p, a), theta, s.dim_light());
      EXPECT_NEAR(fidelity(dn.rho_light, ideal), lossy_cat_fidelity_model(eta * a * a, eta, theta), 1e-9)
          << a << " " << theta;
    }
  }
}

TEST(Protocol, FidelityModelAtReferenceEfficiency) {
  EXPECT_NEAR(lossy_cat_fidelity_model(1.96 * 0.81, 0.81, kPi), 0.7456, 1e-4);
  EXPECT_NEAR(lossy_cat_fidelity_model(1.96, 0.81, kPi), 0.721, 1e-3);
  EXPECT_NEAR(lossy_cat_fidelity_model(1.96, 1.0, kPi), 1.0, 1e-15);
}

TEST(Protocol, LosslessCavityGivesIdealCats) {
  const double a = 1.4;
  for (double theta : {0.0, kPi}) {
    const AtomLightState s = run_protocol(lossless(), a, SpinRotation{kPi / 2.0, theta}, NoiseConfig{});
    CatParams cat;
    cat.alpha = a;
    cat.theta = theta;
    EXPECT_GT(fidelity(project_atom(s, AtomState::kDown).rho_light, cat_state(cat, s.dim_light())), 1.0 - 1e-6);
  }
}

TEST(Protocol, OutcomeProbabilitiesOfIdealState) {
  for (double a : {0.5, 1.0, 1.4}) {
    const AtomLightState s = run_protocol(lossless(), a, SpinRotation{}, NoiseConfig{});
    const double s2 = std::exp(-2.0 * a * a);
    EXPECT_NEAR(project_atom(s, AtomState::kUp).prob, 0.5 * (1.0 - s2), 1e-6);
    EXPECT_NEAR(project_atom(s, AtomState::kDown).prob, 0.5 * (1.0 + s2), 1e-6);
  }
  const AtomLightState s = run_protocol(lossless(), 1.4, SpinRotation{}, NoiseConfig{});
  EXPECT_NEAR(parity_expectation(project_atom(s, AtomState::kUp).rho_light), -1.0, 1e-6);
  EXPECT_NEAR(parity_expectation(project_atom(s, AtomState::kDown).rho_light), 1.0, 1e-6);
}

TEST(Protocol, ProductStateConditionalIsOutcomeIndependent) {
  const DensityMatrix light = DensityMatrix::pure(coherent_state({0.8, 0.3}, 20));
  const AtomLightState s = AtomLightState::product(Eigen::Vector2cd(0.6, Complex(0.0, 0.8)), light);
  for (Basis b : {Basis::kX, Basis::kY, Basis::kZ}) {
    EXPECT_LT(max_abs(project_atom(s, b, true).rho_light.matrix() - light.matrix()), 1e-12);
    EXPECT_LT(max_abs(project_atom(s, b, false).rho_light.matrix() - light.matrix()), 1e-12);
  }
}

TEST(Protocol, ThetaShiftByPiSwapsOutcomes) {
  for (double theta : {0.0, 0.6}) {
    const AtomLightState a = run_protocol(reference(), 1.4, SpinRotation{kPi / 2.0, theta}, NoiseConfig::reference());
    const AtomLightState b =
        run_protocol(reference(), 1.4, SpinRotation{kPi / 2.0, theta + kPi}, NoiseConfig::reference());
    const Projection a_up = project_atom(a, AtomState::kUp), b_dn = project_atom(b, AtomState::kDown);
    EXPECT_NEAR(a_up.prob, b_dn.prob, 1e-12);
    EXPECT_LT(max_abs(a_up.rho_light.matrix() - b_dn.rho_light.matrix()), 1e-12);
  }
}

TEST(Protocol, LawOfTotalProbability) {
  const AtomLightState s = run_protocol(reference(), 1.4, SpinRotation{kPi / 2.0, 0.4}, NoiseConfig::reference());
  const DensityMatrix reduced = reduced_light(s);
  for (Basis b : {Basis::kX, Basis::kY, Basis::kZ}) {
    const Projection plus = project_atom(s, b, true), minus = project_atom(s, b, false);
    EXPECT_NEAR(plus.prob + minus.prob, 1.0, 1e-12);
    const CMatrix sum = plus.prob * plus.rho_light.matrix() + minus.prob * minus.rho_light.matrix();
    EXPECT_LT(max_abs(sum - reduced.matrix()), 1e-10);
  }
}

TEST(Protocol, DetectionErrorIsBayesianMixture) {
  const AtomLightState s = run_protocol(reference(), 1.2, SpinRotation{}, NoiseConfig{});
  const double eps = 0.05;
  const Projection up = project_atom(s, AtomState::kUp), dn = project_atom(s, AtomState::kDown);
  const Projection noisy = project_atom(s, AtomState::kUp, eps);
  const double p_obs = (1.0 - eps) * up.prob + eps * dn.prob;
  EXPECT_NEAR(noisy.prob, p_obs, 1e-14);
  const CMatrix want = ((1.0 - eps) * up.prob * up.rho_light.matrix() + eps * dn.prob * dn.rho_light.matrix()) / p_obs;
  EXPECT_LT(max_abs(noisy.rho_light.matrix() - want), 1e-12);
}

TEST(Protocol, RandomInputsGiveValidStates) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    const Complex alpha = std::polar(2.0 * u(rng), 2.0 * kPi * u(rng));
    const NoiseConfig noise{0.3 * u(rng), 0.05 * u(rng), 0.5 * u(rng)};
    EXPECT_NO_THROW({
      const AtomLightState s = run_protocol(reference(), alpha, SpinRotation{kPi * u(rng), 2 * kPi * u(rng)}, noise);
      DensityMatrix{s.matrix()};
    });
  }
}

TEST(Protocol, NearImpossibleOutcomeThrows) {
  const AtomLightState s =
      AtomLightState::product(Eigen::Vector2cd(1.0, 0.0), DensityMatrix::pure(StateVector::fock(0, 4)));
  EXPECT_THROW(project_atom(s, AtomState::kDown), NumericalError);
  EXPECT_THROW(run_protocol(reference(), 1.0, SpinRotation{}, NoiseConfig{0.0, 1.5, 0.0}), std::invalid_argument);
}

TEST(Protocol, RecenterPutsBranchesAroundOrigin) {
  ProtocolOptions opts;
  opts.recenter = true;
  const AtomLightState s = run_protocol(reference(), 1.4, SpinRotation{}, NoiseConfig{}, opts);
  EXPECT_NEAR(quadrature_moments(reduced_light(s), 0.0).mean, 0.0, 1e-10);
  const AtomLightState raw = run_protocol(reference(), 1.4, SpinRotation{}, NoiseConfig{});
  EXPECT_GT(std::abs(quadrature_moments(reduced_light(raw), 0.0).mean), 0.01);
}

TEST(LossyCat, Limits) {
  CatParams cat;
  cat.alpha = 1.3;
  cat.theta = 0.4;
  EXPECT_GT(fidelity(lossy_cat_density(1.3, 1.0, 0.4, 30), cat_state(cat, 30)), 1.0 - 1e-12);
  const DensityMatrix tiny = lossy_cat_density(1e-6, 0.8, 0.0, 5);
  EXPECT_NEAR(tiny(0, 0).real(), 1.0, 1e-9);
  EXPECT_THROW(lossy_cat_density(1.0, 0.0, 0.0, 10), std::invalid_argument);
}

TEST(LossyCat, VisibilityFromWignerOrigins) {
  const double eta = 0.81, a0 = 1.4;
  const double v = fringe_visibility(lossy_cat_density(a0, eta, 0.0, 40), lossy_cat_density(a0, eta, kPi, 40));
  EXPECT_NEAR(v, std::sinh(2.0 * eta * a0 * a0) / std::sinh(2.0 * a0 * a0), 1e-9);
  EXPECT_NEAR(v, 0.474, 1e-3);
}

TEST(Gate, NoiselessTruthTableFlipsOnAtomDown) {
  const GateTable t = gate_truth_table(lossless(), 1.4, NoiseConfig{});
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (j == cnot_target(i)) {
        EXPECT_GT(t.overlap[i][j], 1.0 - 1e-6);
        EXPECT_GT(t.sign[i][j], 0.99);
      } else {
        EXPECT_LT(t.overlap[i][j], 1.0 - std::exp(-4.0 * 1.96) + 1e-3);
        EXPECT_LT(t.sign[i][j], 0.01);
      }
    }
  }
  // the residual is the Gaussian tail of |+-alpha> on the wrong side of q = 0
  EXPECT_NEAR(t.sign_fidelity, 0.5 * (1.0 + std::erf(2.0 * 1.4 / std::sqrt(2.0))), 1e-6);
}

TEST(Gate, DetectedBasisOverlap) {
  const GateTable t = gate_truth_table(reference(), 1.4, NoiseConfig{}, 0.46);
  EXPECT_NEAR(t.alpha_det, 1.4 * std::sqrt(0.54), 1e-12);
  EXPECT_NEAR(t.basis_overlap, std::exp(-4.0 * t.alpha_det * t.alpha_det), 1e-12);
  EXPECT_NEAR(std::norm(overlap(1.0, -1.0)), 1.8e-2, 0.05e-2);
}

TEST(Gate, DefaultNoiseSignFidelity) {
  const GateTable t = gate_truth_table(reference(), 1.4, NoiseConfig::reference());
  EXPECT_GE(t.sign_fidelity, 0.9);
  EXPECT_LE(t.sign_fidelity, 1.0);
  EXPECT_THROW(gate_truth_table(reference(), 0.0, NoiseConfig{}), std::invalid_argument);
}
