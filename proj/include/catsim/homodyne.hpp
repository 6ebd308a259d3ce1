#pragma once

// Synthetic balanced-homodyne data and the record file format.
//
// Records are rounded to nine significant digits when they are drawn, so a run
// held in memory is exactly what write_records puts on disk and what
// read_records gives back.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "catsim/channels.hpp"
#include "catsim/error.hpp"
#include "catsim/fock.hpp"
#include "catsim/quadrature.hpp"

namespace catsim {

struct QuadratureRecord {
  double theta = 0.0;  ///< LO phase in [0, 2 pi)
  double x = 0.0;

  bool operator==(const QuadratureRecord&) const = default;
};

struct MeasurementRun {
  std::vector<QuadratureRecord> records;
  std::uint64_t seed = 0;
  std::string source;  ///< free-form description, not persisted
  double loss = 0.0;   ///< detection loss applied by the sampler, not persisted
};

namespace detail {

inline double round9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline double wrap_phase(double t) {
  constexpr double two_pi = 2.0 * kPi;
  t = std::fmod(t, two_pi);
  if (t < 0.0) t += two_pi;
  return t >= two_pi ? 0.0 : t;
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
inline double uniform53(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Tabulated CDF of x_theta for all theta at once.
///
/// F(theta, x) = Re[C_0(x) + 2 sum_{k>0} C_k(x) e^{-ik theta}], where C_k collects
/// the k-th off-diagonal of rho against the cumulative Hermite integrals.
class QuadratureCdf {
 public:
  static constexpr int kDefaultPoints = 4096;

  QuadratureCdf(const DensityMatrix& rho, double x_min = -6.0, double x_max = 6.0, int points = kDefaultPoints)
      : d_(rho.dim()), x_min_(x_min), x_max_(x_max), n_(points), c_(points, rho.dim()) {
    if (points < 2 || !(x_max > x_min)) throw std::invalid_argument("QuadratureCdf: bad grid");
    Eigen::MatrixXd cum = band_integrals(-std::numeric_limits<double>::infinity(), x_min, d_);
    for (int i = 0; i < n_; ++i) {
      if (i > 0) cum += band_integrals(x(i - 1), x(i), d_);
      for (int k = 0; k < d_; ++k) {
        Complex s{};
        for (int n = 0; n + k < d_; ++n) s += rho(n + k, n) * cum(n + k, n);
        c_(i, k) = s;
      }
    }
  }

  double x(int i) const { return x_min_ + (x_max_ - x_min_) * i / (n_ - 1); }
  int points() const { return n_; }

  double at_node(int i, double theta) const {
    double f = c_(i, 0).real();
    for (int k = 1; k < d_; ++k) f += 2.0 * std::real(c_(i, k) * std::polar(1.0, -k * theta));
    return f;
  }

  /// Inverse CDF at fixed theta: bisection over nodes, then linear interpolation.
  double sample(double theta, double u) const {
    const double f_lo = at_node(0, theta), f_hi = at_node(n_ - 1, theta);
    const double target = f_lo + u * (f_hi - f_lo);
    int lo = 0, hi = n_ - 1;
    double flo = f_lo, fhi = f_hi;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      const double fm = at_node(mid, theta);
      if (fm < target) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
        fhi = fm;
      }
    }
    const double t = fhi > flo ? (target - flo) / (fhi - flo) : 0.5;
    return x(lo) + std::clamp(t, 0.0, 1.0) * (x(hi) - x(lo));
  }

 private:
  int d_;
  double x_min_, x_max_;
  int n_;
  CMatrix c_;  // c_(i, k) = sum_n rho_{n+k, n} I_{n+k, n}(-inf, x_i)
};

/// Draws n homodyne records from rho after a detection loss L.
inline MeasurementRun sample_quadratures(const DensityMatrix& rho, int n, double L, std::uint64_t seed,
                                         std::string source = {}) {
  if (n < 1) throw std::invalid_argument("sample_quadratures: n must be >= 1");
  const DensityMatrix detected = loss_channel(rho, L);
  const QuadratureCdf cdf(detected);
  std::mt19937_64 rng(seed);
  MeasurementRun run;
  run.seed = seed;
  run.source = std::move(source);
  run.loss = L;
  run.records.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double theta = 2.0 * kPi * detail::uniform53(rng);
    const double x = cdf.sample(theta, detail::uniform53(rng));
    double t = detail::round9(theta);
    if (t >= 2.0 * kPi) t = 0.0;
    run.records.push_back({t, detail::round9(x)});
  }
  return run;
}

inline void write_records(const MeasurementRun& run, std::ostream& os) {
  os << "# homodyne-records v1 seed=" << run.seed << " n=" << run.records.size() << '\n';
  char buf[64];
  for (const auto& r : run.records) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", r.theta, r.x);
    os << buf;
  }
}

inline void write_records(const MeasurementRun& run, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  write_records(run, f);
  if (!f) throw Error("write failed: " + path);
}

inline MeasurementRun read_records(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("records file is empty");
  unsigned long long seed = 0, count = 0;
  char tail = 0;
  if (std::sscanf(line.c_str(), "# homodyne-records v1 seed=%llu n=%llu %c", &seed, &count, &tail) != 2)
    throw FormatError("line 1: expected '# homodyne-records v1 seed=<int> n=<int>'");
  MeasurementRun run;
  run.seed = seed;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    const double theta = std::strtod(s, &end);
    if (end == s || *end != ',') throw FormatError("line " + std::to_string(lineno) + ": expected 'theta,x'");
    const char* xs = end + 1;
    const double x = std::strtod(xs, &end);
    if (end == xs || *end != '\0' || !std::isfinite(theta) || !std::isfinite(x) || theta < 0.0)
      throw FormatError("line " + std::to_string(lineno) + ": expected 'theta,x'");
    run.records.push_back({detail::wrap_phase(theta), x});
  }
  if (run.records.empty()) throw FormatError("no records");
  if (run.records.size() != count)
    throw FormatError("header announces " + std::to_string(count) + " records, found " +
                      std::to_string(run.records.size()));
  return run;
}

inline MeasurementRun read_records(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return read_records(f);
}

}  // namespace catsim
