#include "oracles.hpp"
#include "softcbf/backup.hpp"
#include "softcbf/systems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace softcbf;

TEST(Flow, ScalarDecayMatchesExponential) {
  VectorField f = [](const Vector& x) { return Vector(-x); };
  JacobianFn J = [](const Vector&) { return Matrix(-Matrix::Identity(1, 1)); };
  const Vector x0 = Vector::Constant(1, 0.8);
  const auto flow = integrate_field(f, J, x0, 0.2, 11, 1e-2);
  ASSERT_EQ(flow.states.size(), 11u);
  for (std::size_t i = 0; i < flow.states.size(); ++i) {
    const double t = flow.times[i];
    EXPECT_NEAR(flow.states[i][0], 0.8 * std::exp(-t), 1e-10);
    EXPECT_NEAR(flow.sensitivities[i](0, 0), std::exp(-t), 1e-10);
  }
  EXPECT_EQ(flow.stats.steps, 200u);
  EXPECT_DOUBLE_EQ(flow.stats.step_size, 0.01);
}

TEST(Flow, StepDividesSlice) {
  VectorField f = [](const Vector& x) { return Vector(-x); };
  const auto flow = integrate_field(f, {}, Vector::Ones(1), 0.25, 3, 0.1);
  EXPECT_DOUBLE_EQ(flow.stats.step_size, 0.25 / 3.0);
  EXPECT_EQ(flow.stats.steps, 6u);
}

TEST(Flow, LinearSensitivityMatchesMatrixExponential) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Matrix A(2, 2);
    A << nd(rng), nd(rng), nd(rng), nd(rng);
    A -= (A.eigenvalues().real().maxCoeff() + 0.5) * Matrix::Identity(2, 2);
    VectorField f = [A](const Vector& x) { return Vector(A * x); };
    JacobianFn J = [A](const Vector&) { return A; };
    Vector x0(2);
    x0 << nd(rng), nd(rng);
    const auto flow = integrate_field(f, J, x0, 0.1, 11, 1e-2);
    for (std::size_t i = 0; i < flow.states.size(); ++i) {
      const Matrix E = oracle::expm(A * flow.times[i]);
      EXPECT_LT((flow.sensitivities[i] - E).norm(), 1e-7);
      EXPECT_LT((flow.states[i] - E * x0).norm(), 1e-7);
    }
  }
}

TEST(Flow, FiniteDifferenceJacobianFallback) {
  const auto b = pendulum_backup();
  const auto& prob = *b.backup;
  BackupProblem fd = prob;
  fd.jacobian = {};
  Vector x(2);
  x << 0.3, -0.4;
  const auto a = integrate_flow(prob, x);
  const auto c = integrate_flow(fd, x);
  for (std::size_t i = 0; i < a.sensitivities.size(); ++i) {
    EXPECT_LT((a.sensitivities[i] - c.sensitivities[i]).norm(), 1e-6);
  }
}

TEST(Flow, ErrorEstimateIsSmall) {
  const auto b = pendulum_backup();
  Vector x(2);
  x << 0.5, 0.5;
  const auto flow = integrate_flow(*b.backup, x, {.sensitivities = false, .estimate_error = true});
  EXPECT_TRUE(flow.sensitivities.empty());
  EXPECT_LT(flow.stats.max_local_error, 1e-9);
}

TEST(Flow, BlowUpThrows) {
  VectorField f = [](const Vector& x) { return Vector(x.array().square() * 1e3); };
  try {
    integrate_field(f, {}, Vector::Constant(1, 10.0), 1.0, 3, 1e-2);
    FAIL() << "expected FlowBlowUp";
  } catch (const FlowBlowUp& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LT(e.time(), 1.0);
  }
}

TEST(Backup, ValidateRejectsBadGrid) {
  auto prob = *pendulum_backup().backup;
  prob.dtau = 0.3;
  EXPECT_THROW(prob.validate(), DomainError);
  prob.dtau = 2.0;
  EXPECT_NO_THROW(prob.validate());
  prob.dtau = 4.0;
  EXPECT_THROW(prob.validate(), DomainError);
  prob.dtau = 0.2;
  prob.k_b = {};
  EXPECT_THROW(prob.validate(), InvalidInput);
}

TEST(Backup, SliceValuesAtEquilibrium) {
  const auto b = pendulum_backup();
  const auto& prob = *b.backup;
  EXPECT_EQ(prob.slices(), 11);
  const auto bb = backup_barrier(prob, integrate_flow(prob, Vector::Zero(2)), 50.0);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(bb.b_values[i], 1.0);
  EXPECT_DOUBLE_EQ(bb.b_values[10], 0.05);
  EXPECT_NEAR(bb.soft_gradient.norm(), 0.0, 1e-15);
}

TEST(Backup, SoftGradientMatchesFiniteDifferences) {
  const auto b = pendulum_backup();
  const auto& prob = *b.backup;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (int t = 0; t < 10; ++t) {
    Vector x(2);
    x << u(rng), u(rng);
    const double theta = 20.0;
    const auto bb = backup_barrier(prob, integrate_flow(prob, x), theta);
    auto f = [&](const Vector& y) {
      return softmin_value(detail::slice_values(prob, integrate_flow(prob, y, {.sensitivities = false})),
                           theta);
    };
    const Vector fd = oracle::fd_gradient(f, x, 1e-6);
    EXPECT_LT((bb.soft_gradient - fd).norm(), 1e-5 * (1.0 + fd.norm()));
  }
}

TEST(Backup, ConstraintSetMatchesDirectEvaluation) {
  const auto b = pendulum_backup();
  Vector x(2);
  x << 0.2, 0.1;
  const auto ev = b.constraints.evaluate(x);
  const auto flow = integrate_flow(*b.backup, x);
  const auto direct = detail::slice_constraints(*b.backup, flow);
  EXPECT_EQ(ev.values, direct.values);
  EXPECT_EQ(ev.gradients, direct.gradients);
  EXPECT_EQ(b.constraints.values(x), direct.values);
}

TEST(Backup, PreconditionsOnPendulum) {
  const auto b = pendulum_backup();
  const auto samples = backup_boundary_samples(*b.backup, *b.constraints.bounding_box(),
                                               *b.backup_box, 40.0, 3, 5e-3);
  const auto rep = check_backup_preconditions(*b.backup, samples, 5e-3);
  EXPECT_TRUE(rep.backup_set_safe.passed);
  EXPECT_GT(rep.backup_set_safe.margin, 0.0);
  EXPECT_TRUE(rep.regular_value.passed);
  EXPECT_TRUE(rep.reachable_boundary.passed);
  EXPECT_FALSE(rep.reachable_boundary.vacuous);
  EXPECT_TRUE(rep.passed());
  EXPECT_DOUBLE_EQ(rep.integrator_step, 0.01);
}

TEST(Backup, EmptyReachableBoundaryIsVacuous) {
  // backup set far from the boundary of S and backup horizon too short to
  // reach it: no boundary sample of S flows into S_b
  auto prob = *pendulum_backup().backup;
  prob.T = 0.2;
  std::vector<Vector> samples;
  Vector x(2);
  x << 1.0, 0.0;
  samples.push_back(x);
  const auto rep = check_backup_preconditions(prob, samples, 1e-3);
  EXPECT_TRUE(rep.reachable_boundary.vacuous);
  EXPECT_TRUE(rep.reachable_boundary.passed);
  EXPECT_EQ(rep.reachable_boundary.note, "C empty - trivial case");
}
