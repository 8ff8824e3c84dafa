#include "oracles.hpp"
#include "softcbf/filter.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace softcbf;

namespace {

Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

InputBox box(Vector lo, Vector hi) { return {std::move(lo), std::move(hi)}; }

}  // namespace

TEST(ClassK, Shapes) {
  EXPECT_DOUBLE_EQ(ClassK::linear(2.0)(0.5), 1.0);
  EXPECT_DOUBLE_EQ(ClassK::cubic(2.0)(0.5), 0.25);
  EXPECT_DOUBLE_EQ(ClassK::linear(2.0)(-0.5), -1.0);
  const auto t = ClassK::tanh_scaled(3.0, 0.5);
  EXPECT_NEAR(t(100.0), 1.5, 1e-12);
  EXPECT_NEAR((t(1e-6) - t(-1e-6)) / 2e-6, 3.0, 1e-6);
  EXPECT_TRUE(ClassK::linear(1.0).check_sampled(10.0));
  EXPECT_TRUE(t.check_sampled(2.0));
  EXPECT_FALSE(t.unbounded());
  EXPECT_THROW(ClassK::linear(0.0), DomainError);
  EXPECT_THROW(ClassK::tanh_scaled(1.0, -1.0), DomainError);
}

TEST(ClassKinfK, GrowsWithState) {
  const auto g = ClassKinfK::make(ClassK::linear(1.0), 0.5, 2.0);
  EXPECT_DOUBLE_EQ(g(0.0, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(g(1.0, 2.0), 3.0);
  EXPECT_TRUE(g.check_sampled(2.0, 5.0));
  EXPECT_THROW(ClassKinfK::make(ClassK::tanh_scaled(1.0, 1.0), 1.0, 1.0), DomainError);
  EXPECT_THROW(ClassKinfK::make(ClassK::linear(1.0), 0.0, 1.0), DomainError);
  EXPECT_DOUBLE_EQ(make_rhs(BarrierCondition{g}, 1.0, 2.0), -3.0);
  EXPECT_DOUBLE_EQ(make_rhs(BarrierCondition{ClassK::linear(2.0)}, 1.0, 2.0), -2.0);
}

TEST(Filter, InactiveConstraintLeavesInput) {
  const auto out = filter_unconstrained(vec({1.0, 0.0}), 0.0, -1.0, vec({0.3, 0.4}));
  EXPECT_FALSE(out.modified);
  EXPECT_EQ(out.u, vec({0.3, 0.4}));
  EXPECT_EQ(out.status, QpStatus::Analytic);
  EXPECT_DOUBLE_EQ(out.constraint_value, 1.3);
}

TEST(Filter, ClosedFormProjection) {
  // a = (1, 1), need u_1 + u_2 >= 2 from (0, 0): projection (1, 1)
  const auto out = filter_unconstrained(vec({1.0, 1.0}), 0.5, 2.5, vec({0.0, 0.0}));
  EXPECT_TRUE(out.modified);
  EXPECT_NEAR((out.u - vec({1.0, 1.0})).norm(), 0.0, 1e-15);
  EXPECT_NEAR(out.constraint_value, 0.0, 1e-15);
}

TEST(Filter, ZeroGainIsInfeasible) {
  const auto out = filter_unconstrained(vec({0.0}), -1.0, 0.0, vec({2.0}));
  EXPECT_EQ(out.status, QpStatus::Infeasible);
  EXPECT_FALSE(out.feasible());
}

TEST(Filter, BoxClipOnly) {
  const auto out = filter_boxed(vec({1.0}), 0.0, -10.0, vec({5.0}), box(vec({-1.0}), vec({1.0})));
  EXPECT_EQ(out.status, QpStatus::Clipped);
  EXPECT_DOUBLE_EQ(out.u[0], 1.0);
}

TEST(Filter, BoxInfeasibleReturnsBestCorner) {
  const auto out =
      filter_boxed(vec({1.0, -2.0}), 0.0, 10.0, vec({0.0, 0.0}), box(vec({-1.0, -1.0}), vec({1.0, 1.0})));
  EXPECT_EQ(out.status, QpStatus::Infeasible);
  EXPECT_EQ(out.u, vec({1.0, -1.0}));
  EXPECT_DOUBLE_EQ(out.constraint_value, 3.0 - 10.0);
}

TEST(Filter, BoxBindingMatchesEnumeration) {
  // the projection (1.5, 1.5) leaves the box; optimum is (1, 2) on the face
  oracle::QpInstance q{vec({1.0, 1.0}), 3.0, vec({0.0, 0.0}), vec({-2.0, -2.0}), vec({1.0, 2.0})};
  const auto out = filter_boxed(q.a, 0.0, q.target, q.u_des, box(*q.lower, *q.upper));
  const auto ref = oracle::enumerate_qp(q);
  ASSERT_TRUE(ref.has_value());
  EXPECT_LT((out.u - *ref).norm(), 1e-12);
  EXPECT_EQ(out.status, QpStatus::Clipped);
}

TEST(Filter, RandomBoxedAgainstEnumeration) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> md(1, 4);
  int checked = 0;
  for (int t = 0; t < 500; ++t) {
    const int m = md(rng);
    oracle::QpInstance q;
    q.a.resize(m);
    q.u_des.resize(m);
    Vector lo(m);
    Vector hi(m);
    for (int j = 0; j < m; ++j) {
      q.a[j] = nd(rng);
      q.u_des[j] = nd(rng);
      lo[j] = -std::abs(nd(rng)) - 0.1;
      hi[j] = std::abs(nd(rng)) + 0.1;
    }
    q.lower = lo;
    q.upper = hi;
    q.target = nd(rng);
    const auto out = filter_boxed(q.a, 0.0, q.target, q.u_des, box(lo, hi));
    const auto ref = oracle::enumerate_qp(q);
    if (!ref) {
      EXPECT_EQ(out.status, QpStatus::Infeasible);
      continue;
    }
    ASSERT_TRUE(out.feasible());
    EXPECT_LT((out.u - *ref).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_TRUE(q.feasible(out.u, 1e-12));
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(Filter, SafetyFilterDispatch) {
  ControlAffineSystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.drift = [](const Vector& x) { return x; };
  sys.actuation = [](const Vector&) { return Matrix::Ones(1, 1); };
  const Vector x = vec({0.5});
  const Vector grad = vec({-1.0});
  // need -(x + u) >= -1  ->  u <= 0.5
  auto out = safety_filter(sys, x, grad, -1.0, vec({3.0}));
  EXPECT_NEAR(out.u[0], 0.5, 1e-15);
  sys.input_box = box(vec({-0.2}), vec({0.2}));
  out = safety_filter(sys, x, grad, -1.0, vec({3.0}));
  EXPECT_DOUBLE_EQ(out.u[0], 0.2);
  const auto row = barrier_row(sys, grad, x);
  EXPECT_DOUBLE_EQ(row.c, -0.5);
  EXPECT_DOUBLE_EQ(row.a[0], -1.0);
}

TEST(Filter, RejectsBadInput) {
  EXPECT_THROW(filter_unconstrained(vec({1.0}), 0.0, 0.0, vec({1.0, 2.0})), InvalidInput);
  EXPECT_THROW(filter_unconstrained(vec({1.0}), std::nan(""), 0.0, vec({1.0})), InvalidInput);
  EXPECT_THROW(filter_boxed(vec({1.0}), 0.0, 0.0, vec({1.0}), box(vec({1.0}), vec({0.0}))),
               InvalidInput);
}
