#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "paircorr/inequalities.hpp"
#include "paircorr/models.hpp"

using namespace paircorr;

namespace {

CorrelationCurve curve_of(std::vector<double> g, double sigma = 0.01, bool stitched = false) {
  CorrelationCurve cv;
  cv.resize(g.size());
  cv.bin = BinConfig{10, 10 * static_cast<Tick>(g.size()), 100, 0, 100000};
  const double first = stitched ? -static_cast<double>(g.size() / 2) : 0.45;
  for (std::size_t k = 0; k < g.size(); ++k) {
    cv.tau_ns[k] = first + static_cast<double>(k);
    cv.g[k] = g[k];
    cv.sigma[k] = sigma;
    cv.valid[k] = 1;
  }
  cv.label = "g";
  return cv;
}

CorrelationCurve constant(double v, std::size_t n = 9) { return curve_of(std::vector<double>(n, v)); }

}  // namespace

TEST(CauchySchwarzR, Examples) {
  const Measured two{2.0, 0.0};
  for (double r : cauchy_schwarz_R(constant(2.0), two, two).g) EXPECT_DOUBLE_EQ(r, 1.0);
  for (double r : cauchy_schwarz_R(constant(1.0), two, two).g) EXPECT_DOUBLE_EQ(r, 0.25);
  auto peaked = constant(1.0);
  peaked.g[4] = 2.5;
  EXPECT_DOUBLE_EQ(cauchy_schwarz_R(peaked, two, two).g[4], 1.5625);
}

TEST(CauchySchwarzR, RejectsNonPositiveAutos) {
  EXPECT_THROW(cauchy_schwarz_R(constant(1.0), {0.0, 0.1}, {2.0, 0.1}), InvalidArgument);
  EXPECT_THROW(cauchy_schwarz_R(constant(1.0), {2.0, 0.1}, {-1.0, 0.1}), InvalidArgument);
}

TEST(CauchySchwarzR, PropagatesRelativeErrors) {
  // dR/R = sqrt((2 s_g / g)^2 + (s_a / a)^2 + (s_b / b)^2)
  auto g = constant(2.0);
  g.sigma.assign(g.size(), 0.02);
  const auto r = cauchy_schwarz_R(g, {2.0, 0.04}, {2.0, 0.06});
  const double want = 1.0 * std::sqrt(0.02 * 0.02 + 0.02 * 0.02 + 0.03 * 0.03);
  for (double s : r.sigma) EXPECT_NEAR(s, want, 1e-15);
}

TEST(CauchySchwarzR, FlaggedBinsStayFlagged) {
  auto g = constant(1.5);
  g.valid[3] = 0;
  g.g[3] = std::nan("");
  const auto r = cauchy_schwarz_R(g, {1.0, 0.0}, {1.0, 0.0});
  EXPECT_EQ(r.valid[3], 0);
  EXPECT_EQ(r.valid[2], 1);
}

TEST(CauchySchwarzR1R2, Examples) {
  const Measured two{2.0, 0.0};
  const auto one = constant(1.0);
  const auto rr = cauchy_schwarz_R1_R2(one, one, one, one, two, two);
  for (std::size_t k = 0; k < one.size(); ++k) {
    EXPECT_DOUBLE_EQ(rr.r1.g[k], 0.25);
    EXPECT_DOUBLE_EQ(rr.r2.g[k], 0.25);
  }
  const auto g = curve_of({1.0, 1.7, 2.6, 2.1, 1.4, 1.2, 1.0});
  const auto same = cauchy_schwarz_R1_R2(g, g, g, g, {1.9, 0.05}, {2.1, 0.05});
  const auto single = cauchy_schwarz_R(g, {1.9, 0.05}, {2.1, 0.05});
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(same.r1.g[k], single.g[k], 1e-14);
    EXPECT_NEAR(same.r2.g[k], single.g[k], 1e-14);
    // The two factors are propagated as independent measurements.
    const double rel = std::sqrt(2.0 * std::pow(0.01 / g.g[k], 2) + std::pow(0.05 / 1.9, 2) + std::pow(0.05 / 2.1, 2));
    EXPECT_NEAR(same.r1.sigma[k], same.r1.g[k] * rel, 1e-14);
  }
  EXPECT_THROW(cauchy_schwarz_R1_R2(g, g, g, constant(1.0), two, two), InvalidArgument);
}

TEST(CauchySchwarzR1R2, SymmetricInPairOrder) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(1.5, 0.3);
  std::vector<double> a(15), b(15), c(15), d(15);
  for (std::size_t k = 0; k < 15; ++k) a[k] = n(rng), b[k] = n(rng), c[k] = n(rng), d[k] = n(rng);
  const Measured x{1.8, 0.03}, y{2.2, 0.07};
  const auto p = cauchy_schwarz_R1_R2(curve_of(a, 0.05), curve_of(b, 0.02), curve_of(c), curve_of(d, 0.03), x, y);
  const auto q = cauchy_schwarz_R1_R2(curve_of(b, 0.02), curve_of(a, 0.05), curve_of(d, 0.03), curve_of(c), y, x);
  for (std::size_t k = 0; k < 15; ++k) {
    EXPECT_DOUBLE_EQ(p.r1.g[k], q.r1.g[k]);
    EXPECT_DOUBLE_EQ(p.r2.g[k], q.r2.g[k]);
    EXPECT_NEAR(p.r1.sigma[k], q.r1.sigma[k], 1e-15);
  }
}

TEST(CauchySchwarzR, ScaleInvariance) {
  // Scaling g12 by s and both autos by s leaves R unchanged.
  const auto g = curve_of({1.0, 1.7, 2.6, 2.1, 1.4});
  auto gs = g;
  for (auto& v : gs.g) v *= 3.0;
  for (auto& v : gs.sigma) v *= 3.0;
  const auto r = cauchy_schwarz_R(g, {1.9, 0.05}, {2.1, 0.05});
  const auto rs = cauchy_schwarz_R(gs, {5.7, 0.15}, {6.3, 0.15});
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(r.g[k], rs.g[k], 1e-14);
    EXPECT_NEAR(r.sigma[k], rs.sigma[k], 1e-14);
  }
}

TEST(Violation, Intervals) {
  EXPECT_TRUE(violation_intervals(constant(0.25), 3.0).empty());
  auto r = constant(0.25);
  r.g[5] = 2.0;
  const auto one = violation_intervals(r, 3.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].tau_hi_ns - one[0].tau_lo_ns, 1.0);  // one 1 ns bin
  EXPECT_LE(one[0].tau_lo_ns, r.tau_ns[5]);
  EXPECT_GE(one[0].tau_hi_ns, r.tau_ns[5]);
  // Below k sigma does not count.
  r.g[5] = 1.02;
  EXPECT_TRUE(violation_intervals(r, 3.0).empty());
}

TEST(Violation, IntervalsAreDisjointAndSorted) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> g(41);
    for (auto& v : g) v = u(rng);
    const auto r = curve_of(g, 0.05, true);
    const auto iv = violation_intervals(r, 2.0);
    for (std::size_t i = 0; i < iv.size(); ++i) {
      EXPECT_LT(iv[i].tau_lo_ns, iv[i].tau_hi_ns);
      if (i > 0) { EXPECT_LT(iv[i - 1].tau_hi_ns, iv[i].tau_lo_ns); }
      EXPECT_GE(iv[i].tau_lo_ns, r.tau_ns.front() - 1.0);
      EXPECT_LE(iv[i].tau_hi_ns, r.tau_ns.back() + 1.0);
    }
  }
}

TEST(Violation, ReportPicksGlobalMaximum) {
  auto a = constant(0.25);
  a.label = "R1";
  auto b = constant(0.25);
  b.label = "R2";
  b.g[2] = 1.5;
  const auto rep = violation_report({a, b}, 5.0);
  EXPECT_TRUE(rep.violated());
  EXPECT_EQ(rep.max_label, "R2");
  EXPECT_DOUBLE_EQ(rep.max.g, 1.5);
  EXPECT_EQ(rep.threshold, 1.0);
  EXPECT_TRUE(rep.intervals[0].empty());
  EXPECT_FALSE(violation_report({a}).violated());
  EXPECT_THROW(violation_report({}), InvalidArgument);
}

TEST(Violation, FastModelOscillationEndsEarly) {
  // Dense model R with thermal autos of 2: the violating region closes well
  // before 25 ns.
  const FastParams p{1.57, 5.03, 21.64, constants::kGamma};
  std::vector<double> g;
  for (int i = 0; i < 600; ++i) g.push_back(g12_fast((0.05 + 0.1 * i) * 1e-9, p));
  auto cv = curve_of(g, 1e-6);
  for (std::size_t k = 0; k < cv.size(); ++k) cv.tau_ns[k] = 0.05 + 0.1 * static_cast<double>(k);
  cv.bin.bin_ticks = 1;
  const auto r = cauchy_schwarz_R(cv, {2.0, 0.0}, {2.0, 0.0});
  const auto iv = violation_intervals(r, 3.0);
  ASSERT_FALSE(iv.empty());
  EXPECT_LT(iv.back().tau_hi_ns, 25.0);
  EXPECT_GT(iv.back().tau_hi_ns, 5.0);
}

TEST(ZeroDelay, ReadsTheZeroBin) {
  auto cv = curve_of({1.1, 1.9, 1.2}, 0.01, true);
  EXPECT_DOUBLE_EQ(zero_delay(cv).value, 1.9);
  cv.valid[1] = 0;
  EXPECT_THROW(zero_delay(cv), InvalidArgument);
  EXPECT_THROW(zero_delay(constant(1.0)), InvalidArgument);
}
