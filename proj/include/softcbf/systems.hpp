#pragma once

// Benchmark problems with enough analytic structure for oracle checks.
//
//   scalar-stable          xdot = -x + u,   h = {1 - x, 1 + x}
//   scalar-unstable        xdot = +x + u,   same constraints (fails strict safety)
//   double-integrator-box  pdot = v, vdot = u, h = {1 - 2(p+v), 1 + 2(p+v), 1 - v, 1 + v}
//   pendulum-backup        phidot = w, wdot = sin(phi) + u, |u| <= 3, LQR backup

#include "softcbf/backup.hpp"
#include "softcbf/filter.hpp"
#include "softcbf/geometry.hpp"
#include "softcbf/types.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace softcbf {

struct AnalyticOracles {
  std::function<Vector(const Vector&, double)> flow;         // phi(x, t) of the safe closed loop
  std::function<Matrix(const Vector&, double)> sensitivity;  // D_x phi(x, t)
  std::function<Vector(const Vector&)> lie;                  // L_F h_i(x) for all i
};

struct Benchmark {
  std::string name;
  ControlAffineSystem sys;
  ConstraintSet constraints;
  Controller desired;
  Controller safe;  // closed loop used for certification; k_b for backup problems
  JacobianFn safe_jacobian;
  std::optional<BackupProblem> backup;
  std::optional<Box> backup_box;  // box around the backup set
  std::optional<AnalyticOracles> oracles;
  BarrierCondition condition = ClassK::linear(1.0);
  double epsilon = 0.1;
  double density = 40.0;
  Vector x0;

  VectorField closed_loop() const { return sys.closed_loop(safe); }
};

namespace detail {

inline Box make_box(std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Box b;
  b.lower = Eigen::Map<const Vector>(lo.begin(), static_cast<Eigen::Index>(lo.size()));
  b.upper = Eigen::Map<const Vector>(hi.begin(), static_cast<Eigen::Index>(hi.size()));
  return b;
}

inline Constraint affine(Vector normal, double offset) {
  // h(x) = offset + normal^T x
  return {[normal, offset](const Vector& x) { return offset + normal.dot(x); },
          [normal](const Vector&) { return normal; }};
}

inline Vector vec(std::initializer_list<double> v) {
  return Eigen::Map<const Vector>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

inline Benchmark scalar_benchmark(std::string name, double drift_sign, double setpoint) {
  ControlAffineSystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.drift = [drift_sign](const Vector& x) { return Vector(drift_sign * x); };
  sys.actuation = [](const Vector&) { return Matrix::Ones(1, 1); };

  auto cs = ConstraintSet::from_constraints(
      1, {affine(vec({-1.0}), 1.0), affine(vec({1.0}), 1.0)}, make_box({-2.0}, {2.0}));

  AnalyticOracles oracles;
  oracles.flow = [drift_sign](const Vector& x, double t) {
    return Vector(x * std::exp(drift_sign * t));
  };
  oracles.sensitivity = [drift_sign](const Vector&, double t) {
    return Matrix::Constant(1, 1, std::exp(drift_sign * t));
  };
  // L_F h_1 = -xdot, L_F h_2 = xdot with xdot = drift_sign * x.
  oracles.lie = [drift_sign](const Vector& x) {
    return vec({-drift_sign * x[0], drift_sign * x[0]});
  };

  return Benchmark{
      .name = std::move(name),
      .sys = sys,
      .constraints = std::move(cs),
      .desired = [setpoint](const Vector& x) { return Vector::Constant(1, 4.0 * (setpoint - x[0])); },
      .safe = [](const Vector&) { return Vector::Zero(1); },
      .safe_jacobian = [drift_sign](const Vector&) { return Matrix::Constant(1, 1, drift_sign); },
      .backup = std::nullopt,
      .backup_box = std::nullopt,
      .oracles = oracles,
      .condition = ClassK::linear(1.0),
      .epsilon = 0.1,
      .density = 200.0,
      .x0 = Vector::Zero(1),
  };
}

}  // namespace detail

/// xdot = -x + u on [-1, 1]; desired controller tracks `setpoint`.
inline Benchmark scalar_stable(double setpoint = 3.0) {
  return detail::scalar_benchmark("scalar-stable", -1.0, setpoint);
}

/// xdot = x + u on [-1, 1]; the uncontrolled closed loop leaves the set.
inline Benchmark scalar_unstable(double setpoint = 3.0) {
  return detail::scalar_benchmark("scalar-unstable", 1.0, setpoint);
}

/// Double integrator (p, v) on the parallelogram |p + v| <= 1/2, |v| <= 1,
/// written as min of four affine constraints so that the origin has min
/// h = 1. The safe controller k = -p - 2v makes every face strictly
/// inflowing. The desired controller tracks position `setpoint`.
inline Benchmark double_integrator_box(double setpoint = 3.0) {
  using detail::affine;
  using detail::vec;
  ControlAffineSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.drift = [](const Vector& x) { return vec({x[1], 0.0}); };
  sys.actuation = [](const Vector&) {
    Matrix g(2, 1);
    g << 0.0, 1.0;
    return g;
  };

  auto cs = ConstraintSet::from_constraints(
      2,
      {affine(vec({-2.0, -2.0}), 1.0), affine(vec({2.0, 2.0}), 1.0),
       affine(vec({0.0, -1.0}), 1.0), affine(vec({0.0, 1.0}), 1.0)},
      detail::make_box({-2.0, -1.5}, {2.0, 1.5}));

  // Closed loop xdot = A x with A = [[0, 1], [-1, -2]] (double pole at -1):
  // exp(A t) = e^{-t} [[1 + t, t], [-t, 1 - t]].
  AnalyticOracles oracles;
  oracles.sensitivity = [](const Vector&, double t) {
    Matrix E(2, 2);
    E << 1.0 + t, t, -t, 1.0 - t;
    return Matrix(std::exp(-t) * E);
  };
  oracles.flow = [sens = oracles.sensitivity](const Vector& x, double t) {
    return Vector(sens(x, t) * x);
  };
  oracles.lie = [](const Vector& x) {
    const double p = x[0];
    const double v = x[1];
    const double vdot = -p - 2.0 * v;
    return vec({-2.0 * (v + vdot), 2.0 * (v + vdot), -vdot, vdot});
  };

  return Benchmark{
      .name = "double-integrator-box",
      .sys = sys,
      .constraints = std::move(cs),
      .desired = [setpoint](const Vector& x) {
        return Vector::Constant(1, 2.0 * (setpoint - x[0]) - 1.0 * x[1]);
      },
      .safe = [](const Vector& x) { return Vector::Constant(1, -x[0] - 2.0 * x[1]); },
      .safe_jacobian = [](const Vector&) {
        Matrix A(2, 2);
        A << 0.0, 1.0, -1.0, -2.0;
        return A;
      },
      .backup = std::nullopt,
      .backup_box = std::nullopt,
      .oracles = oracles,
      .condition = ClassK::linear(1.0),
      .epsilon = 0.05,
      .density = 60.0,
      .x0 = Vector::Zero(2),
  };
}

namespace pendulum {

// LQR for A = [[0, 1], [1, 0]], B = [0; 1], Q = I, R = 1
// (tools/derive_pendulum_lqr.py).
inline constexpr double kP11 = 3.4142135623730951;
inline constexpr double kP12 = 2.4142135623730951;
inline constexpr double kP22 = 2.4142135623730951;
inline constexpr double kK1 = 2.4142135623730951;
inline constexpr double kK2 = 2.4142135623730951;

inline constexpr double kUmax = 3.0;
inline constexpr double kBackupLevel = 0.05;
inline constexpr double kHalfAngle = 1.0;
inline constexpr double kHalfRate = 1.5;

inline Matrix P() {
  Matrix p(2, 2);
  p << kP11, kP12, kP12, kP22;
  return p;
}

/// k_b(x) = -umax tanh(K x / umax): the LQR law, smoothly saturated into |u| < umax.
inline Vector backup_law(const Vector& x) {
  const double s = kK1 * x[0] + kK2 * x[1];
  return Vector::Constant(1, -kUmax * std::tanh(s / kUmax));
}

}  // namespace pendulum

/// Inverted pendulum about upright, unit constants, |u| <= 3. The safe set is
/// the quartic box 1 - phi^4 - (w / 1.5)^4 >= 0 with half-widths (1, 1.5);
/// the backup set is the LQR level set 0.05 - x^T P x >= 0; T = 2,
/// dtau = 0.2, so 11 slice constraints.
inline Benchmark pendulum_backup(double setpoint = 1.5) {
  using detail::vec;
  namespace pd = pendulum;
  ControlAffineSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.drift = [](const Vector& x) { return vec({x[1], std::sin(x[0])}); };
  sys.actuation = [](const Vector&) {
    Matrix g(2, 1);
    g << 0.0, 1.0;
    return g;
  };
  InputBox ubox;
  ubox.lower = Vector::Constant(1, -pd::kUmax);
  ubox.upper = Vector::Constant(1, pd::kUmax);
  sys.input_box = ubox;

  const double a4 = std::pow(pd::kHalfAngle, 4);
  const double w4 = std::pow(pd::kHalfRate, 4);
  Constraint h{[a4, w4](const Vector& x) {
                 return 1.0 - std::pow(x[0], 4) / a4 - std::pow(x[1], 4) / w4;
               },
               [a4, w4](const Vector& x) {
                 return vec({-4.0 * std::pow(x[0], 3) / a4, -4.0 * std::pow(x[1], 3) / w4});
               }};
  const Matrix P = pd::P();
  Constraint h_b{[P](const Vector& x) { return pd::kBackupLevel - x.dot(P * x); },
                 [P](const Vector& x) { return Vector(-2.0 * P * x); }};

  JacobianFn jac = [](const Vector& x) {
    const double s = pd::kK1 * x[0] + pd::kK2 * x[1];
    const double sech2 = 1.0 - std::pow(std::tanh(s / pd::kUmax), 2);
    Matrix J(2, 2);
    J << 0.0, 1.0, std::cos(x[0]) - sech2 * pd::kK1, -sech2 * pd::kK2;
    return J;
  };

  BackupProblem prob;
  prob.sys = sys;
  prob.k_b = pd::backup_law;
  prob.h = h;
  prob.h_b = h_b;
  prob.T = 2.0;
  prob.dtau = 0.2;
  prob.h_max = 1e-2;
  prob.jacobian = jac;

  Box box = detail::make_box({-1.1, -1.65}, {1.1, 1.65});
  auto cs = backup_constraint_set(prob, box);

  return Benchmark{
      .name = "pendulum-backup",
      .sys = sys,
      .constraints = std::move(cs),
      .desired = [setpoint](const Vector& x) {
        return Vector::Constant(1, 4.0 * (setpoint - x[0]) - 1.0 * x[1]);
      },
      .safe = pd::backup_law,
      .safe_jacobian = jac,
      .backup = prob,
      .backup_box = detail::make_box({-0.3, -0.35}, {0.3, 0.35}),
      .oracles = std::nullopt,
      .condition = ClassK::linear(1.0),
      .epsilon = 0.02,
      .density = 40.0,
      .x0 = Vector::Zero(2),
  };
}

inline std::vector<std::string> benchmark_names() {
  return {"double-integrator-box", "pendulum-backup", "scalar-stable", "scalar-unstable"};
}

/// Looks a benchmark up by registered name; `setpoint` overrides the desired
/// controller's target.
inline Benchmark make_benchmark(const std::string& name,
                                std::optional<double> setpoint = std::nullopt) {
  if (name == "double-integrator-box") return double_integrator_box(setpoint.value_or(3.0));
  if (name == "pendulum-backup") return pendulum_backup(setpoint.value_or(1.5));
  if (name == "scalar-stable") return scalar_stable(setpoint.value_or(3.0));
  if (name == "scalar-unstable") return scalar_unstable(setpoint.value_or(3.0));
  throw InvalidInput("unknown benchmark '" + name + "'");
}

}  // namespace softcbf
