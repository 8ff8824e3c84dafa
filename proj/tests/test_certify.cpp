#include "oracles.hpp"
#include "softcbf/certify.hpp"
#include "softcbf/systems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace softcbf;

namespace {

CompactBounds bounds(double M, double r, double d, double eps) {
  CompactBounds b;
  b.M = M;
  b.r = r;
  b.d = d;
  b.epsilon = eps;
  return b;
}

}  // namespace

TEST(Theta, CompactFormula) {
  const auto c = theta_star_compact(bounds(2.0, 0.5, 0.25, 0.1), 3);
  EXPECT_NEAR(c.theta_tube, std::log(3.0) / 0.1, 1e-14);
  EXPECT_NEAR(c.theta_core, std::log(3.0 * 2.5 / 0.5) / 0.25, 1e-13);
  EXPECT_DOUBLE_EQ(c.theta_star, std::max(c.theta_tube, c.theta_core));
  EXPECT_EQ(c.kind, BarrierKind::CBF);
  EXPECT_FALSE(c.theta_tail.has_value());
}

TEST(Theta, SingleConstraintHasNoCoreTerm) {
  const auto c = theta_star_compact(bounds(1.0, 1.0, kInf, 0.1), 1);
  EXPECT_EQ(c.theta_core, 0.0);
  EXPECT_EQ(c.theta_tube, 0.0);
  EXPECT_EQ(theta_star_tail({1.0, 1.0, 1.0, 1.0, 1.0}, 1), 0.0);
}

TEST(Theta, InfiniteGapDropsCoreTerm) {
  const auto c = theta_star_compact(bounds(1.0, 1.0, kInf, 0.1), 4);
  EXPECT_EQ(c.theta_core, 0.0);
  EXPECT_NEAR(c.theta_star, std::log(4.0) / 0.1, 1e-14);
}

TEST(Theta, RejectsInvalidBounds) {
  EXPECT_THROW(theta_star_compact(bounds(1.0, 0.0, 1.0, 0.1), 2), InvalidCertificate);
  EXPECT_THROW(theta_star_compact(bounds(1.0, -1.0, 1.0, 0.1), 2), InvalidCertificate);
  EXPECT_THROW(theta_star_compact(bounds(1.0, 1.0, 1.0, 0.0), 2), InvalidCertificate);
  EXPECT_THROW(theta_star_compact(bounds(1.0, 1.0, 0.0, 0.1), 2), InvalidCertificate);
  EXPECT_THROW(theta_star_compact(bounds(1.0, 1.0, 1.0, 0.1), 0), InvalidCertificate);
  EXPECT_THROW(theta_star_tail({1.0, 0.0, 1.0, 1.0, 1.0}, 2), InvalidCertificate);
  EXPECT_THROW(theta_star_tail({1.0, 1.0, 1.0, 1.0, 0.0}, 2), InvalidCertificate);
}

TEST(Theta, TailMakesExtendedCertificate) {
  const TailSpec tail{2.0, 0.5, 1.5, 2.0, 0.25};
  const auto c = certify(bounds(2.0, 0.5, 0.25, 0.1), tail, 3);
  ASSERT_TRUE(c.theta_tail.has_value());
  EXPECT_NEAR(*c.theta_tail, std::log(2.0 * (0.25 + 1.5 * 9.0) / 0.25) / 0.5, 1e-13);
  EXPECT_EQ(c.kind, BarrierKind::eCBF);
  EXPECT_DOUBLE_EQ(c.theta_star, std::max({c.theta_tube, c.theta_core, *c.theta_tail}));
}

TEST(Theta, MatchesHighPrecision) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 10.0);
  std::uniform_int_distribution<int> nd(2, 50);
  for (int t = 0; t < 200; ++t) {
    const double eps = u(rng);
    const double M = u(rng);
    const double r = u(rng);
    const double d = u(rng);
    const int N = nd(rng);
    const double got = theta_star_compact(bounds(M, r, d, eps), N).theta_star;
    const double ref = static_cast<double>(oracle::theta_compact(eps, M, r, d, N));
    EXPECT_LT(std::abs(got - ref), 1e-13 * ref);
  }
}

TEST(Verify, ScalarStableAboveThreshold) {
  const auto b = scalar_stable();
  const auto F = b.closed_loop();
  const auto tube = sample_tube(b.constraints, 0.1, 200.0, 1);
  const auto cert = theta_star_compact(estimate_bounds(b.constraints, F, tube), 2);
  const auto rep = verify_certificate(b.constraints, F, cert, 1.01 * cert.theta_star, 300, 2);
  EXPECT_TRUE(rep.above_threshold);
  EXPECT_GE(rep.located, 300u);
  EXPECT_TRUE(rep.lie_positive());
  EXPECT_TRUE(rep.contained());
  for (const auto& p : rep.points) {
    EXPECT_GE(p.soft_value, 0.0);
    EXPECT_LE(p.soft_value, 1e-10);
  }
}

TEST(Verify, BelowThresholdDoesNotThrow) {
  const auto b = scalar_stable();
  const auto F = b.closed_loop();
  const auto tube = sample_tube(b.constraints, 0.1, 200.0, 1);
  const auto cert = theta_star_compact(estimate_bounds(b.constraints, F, tube), 2);
  const auto rep = verify_certificate(b.constraints, F, cert, 0.5 * cert.theta_star, 50, 2);
  EXPECT_FALSE(rep.above_threshold);
  EXPECT_EQ(rep.above_epsilon, 0u);  // not counted below theta_tube
}

TEST(Verify, EmptySoftSetIsReported) {
  // theta so small that the soft-min is negative everywhere in the box
  const auto b = scalar_stable();
  const auto cert = theta_star_compact(bounds(1.0, 1.0, 2.0, 0.1), 2);
  const auto rep = verify_certificate(b.constraints, b.closed_loop(), cert, 0.1, 20, 1);
  EXPECT_TRUE(rep.no_interior);
  EXPECT_EQ(rep.located, 0u);
  EXPECT_FALSE(rep.lie_positive());
}

TEST(Tightest, NoWorseThanDefaultTolerance) {
  const auto b = double_integrator_box();
  const auto F = b.closed_loop();
  const auto tube = sample_tube(b.constraints, 0.05, 40.0, 3);
  const auto best = tightest_bounds(b.constraints, F, tube);
  const auto plain = estimate_bounds(b.constraints, F, tube);
  EXPECT_LE(theta_star_compact(best, 4).theta_star, theta_star_compact(plain, 4).theta_star);
}

TEST(Tightest, UnsafeRethrows) {
  const auto b = scalar_unstable();
  const auto tube = sample_tube(b.constraints, 0.1, 100.0, 1);
  EXPECT_THROW(tightest_bounds(b.constraints, b.closed_loop(), tube), NotStrictlySafe);
}
