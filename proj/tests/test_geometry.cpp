#include "softcbf/geometry.hpp"
#include "softcbf/systems.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace softcbf;

namespace {

Vector v1(double a) { return Vector::Constant(1, a); }
Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

}  // namespace

TEST(ConstraintSet, ValidatesConstruction) {
  auto eval = [](const Vector& x) { return ConstraintEval{x, Matrix::Identity(1, 1)}; };
  EXPECT_THROW(ConstraintSet(0, 1, eval), InvalidInput);
  EXPECT_THROW(ConstraintSet(1, 0, eval), InvalidInput);
  EXPECT_THROW(ConstraintSet(1, 1, {}), InvalidInput);
  Box bad;
  bad.lower = v2(0.0, 0.0);
  bad.upper = v2(1.0, 1.0);
  EXPECT_THROW(ConstraintSet(1, 1, eval, {}, bad), InvalidInput);
}

TEST(ConstraintSet, EvaluateChecksShapes) {
  const auto b = scalar_stable();
  EXPECT_THROW(b.constraints.evaluate(v2(0.0, 0.0)), InvalidInput);
  EXPECT_THROW(b.constraints.evaluate(v1(std::nan(""))), InvalidInput);
  const auto ev = b.constraints.evaluate(v1(0.25));
  EXPECT_DOUBLE_EQ(ev.values[0], 0.75);
  EXPECT_DOUBLE_EQ(ev.values[1], 1.25);
  EXPECT_DOUBLE_EQ(ev.gradients(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(ev.gradients(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(b.constraints.hard_min(v1(0.25)), 0.75);
}

TEST(Tube, SamplesLieInTube) {
  const auto b = double_integrator_box();
  const auto tube = sample_tube(b.constraints, 0.05, 30.0, 4);
  ASSERT_FALSE(tube.samples.empty());
  for (const auto& x : tube.samples) {
    const double h = b.constraints.hard_min(x);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 0.05);
  }
  // every face is represented
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GT(tube.active_hits[i], 0u);
}

TEST(Tube, DeterministicForSeed) {
  const auto b = double_integrator_box();
  const auto t1 = sample_tube(b.constraints, 0.05, 20.0, 9);
  const auto t2 = sample_tube(b.constraints, 0.05, 20.0, 9);
  ASSERT_EQ(t1.samples.size(), t2.samples.size());
  for (std::size_t k = 0; k < t1.samples.size(); ++k) {
    EXPECT_EQ(t1.samples[k], t2.samples[k]);
  }
}

TEST(Tube, EmptySetThrows) {
  // h = -1 - x^2 < 0 everywhere
  Constraint c{[](const Vector& x) { return -1.0 - x[0] * x[0]; },
               [](const Vector& x) { return Vector(v1(-2.0 * x[0])); }};
  Box box;
  box.lower = v1(-1.0);
  box.upper = v1(1.0);
  const auto cs = ConstraintSet::from_constraints(1, {c}, box);
  EXPECT_THROW(sample_tube(cs, 0.1, 50.0, 1), EmptyTube);
}

TEST(Bounds, ScalarStableMatchesAnalytic) {
  // On the tube near x = 1: L h_1 = x in [0.9, 1], gap to h_2 is 2x.
  const auto b = scalar_stable();
  const auto tube = sample_tube(b.constraints, 0.1, 200.0, 1);
  const auto bounds = estimate_bounds(b.constraints, b.closed_loop(), tube);
  EXPECT_GE(bounds.r, 0.9 - 1e-12);
  EXPECT_LE(bounds.r, 1.0);
  EXPECT_LE(bounds.M, 1.0 + 1e-12);
  EXPECT_GE(bounds.M, 0.9);
  EXPECT_GE(bounds.d, 1.8 - 1e-12);
  EXPECT_LE(bounds.d, 2.0);
  EXPECT_EQ(bounds.n_samples, tube.samples.size());
}

TEST(Bounds, UnstableNamesWitness) {
  const auto b = scalar_unstable();
  const auto tube = sample_tube(b.constraints, 0.1, 200.0, 1);
  try {
    estimate_bounds(b.constraints, b.closed_loop(), tube);
    FAIL() << "expected NotStrictlySafe";
  } catch (const NotStrictlySafe& e) {
    const double x = e.witness()[0];
    EXPECT_GE(std::abs(x), 0.9);
    EXPECT_LE(e.lie_value(), 0.0);
    // the active constraint at the witness is the one that fails
    EXPECT_EQ(e.constraint(), x > 0 ? 0u : 1u);
  }
}

TEST(Bounds, ShrinkEpsilonRecovers) {
  // xdot = -(x - 0.5)^3: L h_1 = (x - 0.5)^3 is negative for x < 0.5, which
  // lies in the tube near x = 1 only when epsilon > 0.5.
  const auto cs = scalar_stable().constraints;
  VectorField F = [](const Vector& x) { return v1(-std::pow(x[0] - 0.5, 3)); };
  EXPECT_THROW(estimate_bounds(cs, F, sample_tube(cs, 0.8, 200.0, 1)), NotStrictlySafe);
  const auto tb = shrink_epsilon_until_safe(cs, F, 0.8, 200.0, 1);
  EXPECT_GT(tb.halvings, 0);
  EXPECT_LT(tb.tube.epsilon, 0.5);
  EXPECT_GT(tb.bounds.r, 0.0);
}

TEST(Mfcq, BoxCornersPass) {
  const auto b = double_integrator_box();
  const auto tube = sample_tube(b.constraints, 0.05, 30.0, 2);
  const auto rep = check_mfcq(b.constraints, tube, 0.01);
  EXPECT_GT(rep.checked, 0u);
  EXPECT_TRUE(rep.passed());
}

TEST(Mfcq, OpposedGradientsFail) {
  // {x >= 0} and {-x >= 0}: both active at 0 with opposite gradients
  Constraint up{[](const Vector& x) { return x[0]; }, [](const Vector&) { return v1(1.0); }};
  Constraint down{[](const Vector& x) { return -x[0]; }, [](const Vector&) { return v1(-1.0); }};
  EXPECT_FALSE(mfcq_direction({v1(1.0), v1(-1.0)}).has_value());
  Box box;
  box.lower = v1(-1.0);
  box.upper = v1(1.0);
  const auto cs = ConstraintSet::from_constraints(1, {up, down}, box);
  TubeSpec tube;
  tube.epsilon = 0.1;
  tube.samples = {v1(0.0)};
  const auto rep = check_mfcq(cs, tube);
  EXPECT_EQ(rep.checked, 1u);
  EXPECT_EQ(rep.failures, 1u);
  EXPECT_EQ(rep.results[0].worst_pair, std::make_pair(std::size_t{0}, std::size_t{1}));
}

TEST(Mfcq, DirectionIsCommonAscent) {
  std::vector<Vector> g = {v2(1.0, 0.0), v2(0.0, 1.0), v2(-0.9, 0.2)};
  const auto v = mfcq_direction(g);
  ASSERT_TRUE(v.has_value());
  for (const auto& gi : g) EXPECT_GT(gi.dot(*v), 0.0);
}
