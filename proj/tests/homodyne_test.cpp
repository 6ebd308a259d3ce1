#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "catsim/homodyne.hpp"
#include "catsim/protocol.hpp"

using namespace catsim;

namespace {

DensityMatrix cat_density(double a, double theta, int dim = 30) {
  CatParams p;
  p.alpha = a;
  p.theta = theta;
  return DensityMatrix::pure(cat_state(p, dim));
}

struct Stats {
  double mean = 0.0, var = 0.0;
  int n = 0;
};

Stats x_stats(const MeasurementRun& run, double th_lo = 0.0, double th_hi = 7.0) {
  Stats s;
  double m1 = 0.0, m2 = 0.0;
  for (const auto& r : run.records) {
    if (r.theta < th_lo || r.theta >= th_hi) continue;
    m1 += r.x;
    m2 += r.x * r.x;
    ++s.n;
  }
  s.mean = m1 / s.n;
  s.var = m2 / s.n - s.mean * s.mean;
  return s;
}

// Pearson chi-square p-value of x in [lo, hi) against the expected band probabilities.
double chi2_pvalue(const MeasurementRun& run, const std::vector<double>& edges, double th_lo, double th_hi,
                   const std::function<double(double, double)>& prob) {
  const int bins = static_cast<int>(edges.size()) - 1;
  std::vector<double> counts(bins, 0.0);
  int total = 0;
  for (const auto& r : run.records) {
    if (r.theta < th_lo || r.theta >= th_hi) continue;
    ++total;
    for (int b = 0; b < bins; ++b)
      if (r.x >= edges[b] && r.x < edges[b + 1]) counts[b] += 1.0;
  }
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double e = total * prob(edges[b], edges[b + 1]);
    chi2 += (counts[b] - e) * (counts[b] - e) / e;
  }
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1), chi2));
}

// Expected band probability for theta uniform over [t0, t1], by midpoint quadrature in theta.
double band_probability(const DensityMatrix& rho, double t0, double t1, double a, double b) {
  const int steps = 64;
  double s = 0.0;
  for (int i = 0; i < steps; ++i) s += quadrature_probability(rho, t0 + (t1 - t0) * (i + 0.5) / steps, a, b);
  return s / steps;
}

}  // namespace

TEST(Homodyne, VacuumStatistics) {
  const MeasurementRun run = sample_quadratures(DensityMatrix::pure(StateVector::fock(0, 10)), 100000, 0.0, 1);
  const Stats s = x_stats(run);
  const double sd_mean = std::sqrt(0.5 / s.n), sd_var = 0.5 * std::sqrt(2.0 / s.n);
  EXPECT_NEAR(s.mean, 0.0, 3.0 * sd_mean);
  EXPECT_NEAR(s.var, 0.5, 3.0 * sd_var);
  for (const auto& r : run.records) {
    ASSERT_GE(r.theta, 0.0);
    ASSERT_LT(r.theta, 2.0 * kPi);
  }
}

TEST(Homodyne, CoherentMeanInNarrowPhaseBin) {
  const double a = 1.4, L = 0.2;
  const MeasurementRun run = sample_quadratures(DensityMatrix::pure(coherent_state(a, 30)), 100000, L, 2);
  const double w = 0.05;
  const Stats s = x_stats(run, 0.0, w);
  // mean over theta in [0, w] of sqrt(2) a sqrt(1-L) cos(theta)
  const double want = std::sqrt(2.0) * a * std::sqrt(1.0 - L) * std::sin(w) / w;
  EXPECT_NEAR(s.mean, want, 3.0 * std::sqrt(0.5 / s.n) + 1e-3);
  EXPECT_NEAR(run.loss, L, 0.0);
}

TEST(Homodyne, OddCatCentralDip) {
  const DensityMatrix odd = cat_density(1.4, kPi);
  EXPECT_LT(quadrature_pdf(odd, kPi / 2.0, 0.0), 0.05);
  const MeasurementRun run = sample_quadratures(odd, 100000, 0.0, 3);
  int near0 = 0, shoulder = 0, in_bin = 0;
  for (const auto& r : run.records) {
    if (std::abs(r.theta - kPi / 2.0) > 0.1) continue;
    ++in_bin;
    if (std::abs(r.x) < 0.1) ++near0;
    if (std::abs(r.x - 0.8) < 0.1) ++shoulder;
  }
  EXPECT_GT(in_bin, 2500);
  EXPECT_LT(near0 * 4, shoulder);
}

TEST(Homodyne, HistogramsFollowQuadraturePdf) {
  const DensityMatrix rho = loss_channel(cat_density(1.4, 0.0), 0.19);
  const MeasurementRun run = sample_quadratures(rho, 100000, 0.0, 4);
  std::vector<double> edges;
  for (int i = 0; i <= 50; ++i) edges.push_back(-4.0 + 8.0 * i / 50);
  edges.front() = -std::numeric_limits<double>::infinity();
  edges.back() = std::numeric_limits<double>::infinity();
  // all phases together
  const double p_all = chi2_pvalue(run, edges, 0.0, 2.0 * kPi,
                                   [&](double a, double b) { return band_probability(rho, 0.0, 2.0 * kPi, a, b); });
  EXPECT_GT(p_all, 1e-3);
  // one quarter of the phase circle
  const double p_q = chi2_pvalue(run, edges, kPi / 4.0, 3.0 * kPi / 4.0, [&](double a, double b) {
    return band_probability(rho, kPi / 4.0, 3.0 * kPi / 4.0, a, b);
  });
  EXPECT_GT(p_q, 1e-3);
}

TEST(Homodyne, CdfTableMatchesBandProbability) {
  const DensityMatrix rho = cat_density(1.0, 0.7);
  const QuadratureCdf cdf(rho);
  for (double th : {0.0, 1.3, 4.0}) {
    for (int i : {0, 1000, 2048, 3000, 4095}) {
      EXPECT_NEAR(cdf.at_node(i, th),
                  quadrature_probability(rho, th, -std::numeric_limits<double>::infinity(), cdf.x(i)), 1e-10);
    }
  }
}

TEST(Homodyne, DeterministicPerSeed) {
  const DensityMatrix rho = cat_density(1.0, kPi);
  const MeasurementRun a = sample_quadratures(rho, 2000, 0.1, 77);
  const MeasurementRun b = sample_quadratures(rho, 2000, 0.1, 77);
  const MeasurementRun c = sample_quadratures(rho, 2000, 0.1, 78);
  std::stringstream sa, sb;
  write_records(a, sa);
  write_records(b, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(a.records, c.records);
}

TEST(Homodyne, RejectsBadArguments) {
  const DensityMatrix vac = DensityMatrix::pure(StateVector::fock(0, 3));
  EXPECT_THROW(sample_quadratures(vac, 0, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(sample_quadratures(vac, 10, 1.2, 1), std::invalid_argument);
}

TEST(Records, RoundTripIsExact) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0.0, 2.0 * kPi), xs(-5.0, 5.0);
  MeasurementRun run;
  run.seed = 12345;
  for (int i = 0; i < 1000; ++i) run.records.push_back({detail::round9(th(rng)), detail::round9(xs(rng))});
  std::stringstream ss;
  write_records(run, ss);
  const MeasurementRun back = read_records(ss);
  EXPECT_EQ(back.seed, 12345u);
  EXPECT_EQ(back.records, run.records);

  const MeasurementRun sampled = sample_quadratures(cat_density(1.0, 0.0), 1000, 0.0, 9);
  std::stringstream s2;
  write_records(sampled, s2);
  EXPECT_EQ(read_records(s2).records, sampled.records);
}

TEST(Records, HeaderFormat) {
  MeasurementRun run;
  run.seed = 3;
  run.records = {{0.5, -1.25}, {6.0, 2.0}};
  std::stringstream ss;
  write_records(run, ss);
  EXPECT_EQ(ss.str(), "# homodyne-records v1 seed=3 n=2\n0.5,-1.25\n6,2\n");
}

TEST(Records, Errors) {
  auto message = [](const std::string& text) -> std::string {
    std::stringstream ss(text);
    try {
      read_records(ss);
    } catch (const FormatError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message("").find("empty"), std::string::npos);
  EXPECT_NE(message("# homodyne-records v1 seed=1 n=0\n").find("no records"), std::string::npos);
  EXPECT_NE(message("# homodyne-records v1 seed=1 n=2\n0.1,0.2\n0.3;0.4\n").find("line 3"), std::string::npos);
  EXPECT_NE(message("# homodyne-records v1 seed=1 n=1\n0.1,abc\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("theta,x\n0.1,0.2\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("# homodyne-records v1 seed=1 n=5\n0.1,0.2\n").find("announces"), std::string::npos);
}

TEST(Records, PhaseAtTwoPiWraps) {
  std::stringstream ss("# homodyne-records v1 seed=1 n=2\n6.28318531,0.5\n7.0,0.1\n");
  const MeasurementRun run = read_records(ss);
  EXPECT_LT(run.records[0].theta, 1e-6);
  EXPECT_NEAR(run.records[1].theta, 7.0 - 2.0 * kPi, 1e-12);
}
