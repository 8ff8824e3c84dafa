#pragma once

// Single-constraint CBF safety filter for control-affine systems
//
//   xdot = f0(x) + g(x) u,
//   u* = argmin |u - u_des|^2  s.t.  c + a^T u >= rhs,  u in U
//
// with a = g(x)^T grad h(x), c = grad h(x)^T f0(x) and rhs = -alpha(h) or
// -gamma(h, |x|). U is either R^m (closed form) or a box (dual bisection on
// the single multiplier).

#include "softcbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <variant>

namespace softcbf {

struct InputBox {
  Vector lower;
  Vector upper;

  bool valid() const {
    return lower.size() == upper.size() && lower.size() > 0 &&
           (lower.array() < upper.array()).all();
  }
  Vector clip(const Vector& u) const { return u.cwiseMax(lower).cwiseMin(upper); }
};

struct ControlAffineSystem {
  int n = 0;
  int m = 0;
  std::function<Vector(const Vector&)> drift;      // f0(x), size n
  std::function<Matrix(const Vector&)> actuation;  // g(x), n x m
  std::optional<InputBox> input_box;

  void validate() const {
    if (n < 1 || m < 1) throw InvalidInput("ControlAffineSystem: n and m must be >= 1");
    if (!drift || !actuation) throw InvalidInput("ControlAffineSystem: missing drift/actuation");
    if (input_box && (!input_box->valid() || input_box->lower.size() != m)) {
      throw InvalidInput("ControlAffineSystem: input box malformed");
    }
  }

  Vector dynamics(const Vector& x, const Vector& u) const {
    return drift(x) + actuation(x) * u;
  }

  /// Closed loop x -> f0(x) + g(x) k(x).
  VectorField closed_loop(Controller k) const {
    auto f0 = drift;
    auto g = actuation;
    return [f0, g, k = std::move(k)](const Vector& x) -> Vector { return f0(x) + g(x) * k(x); };
  }
};

/// Class-K function with an odd extension to negative arguments.
struct ClassK {
  enum class Kind { Linear, Cubic, Tanh };
  Kind kind = Kind::Linear;
  double kappa = 1.0;
  double scale = 1.0;  // tanh saturation scale s

  static ClassK linear(double kappa) { return make(Kind::Linear, kappa, 1.0); }
  static ClassK cubic(double kappa) { return make(Kind::Cubic, kappa, 1.0); }
  /// kappa * s * tanh(h / s): slope kappa at 0, saturates at kappa * s.
  static ClassK tanh_scaled(double kappa, double s) { return make(Kind::Tanh, kappa, s); }

  double operator()(double h) const {
    switch (kind) {
      case Kind::Linear:
        return kappa * h;
      case Kind::Cubic:
        return kappa * h * h * h;
      case Kind::Tanh:
        return kappa * scale * std::tanh(h / scale);
    }
    return 0.0;
  }

  bool unbounded() const { return kind != Kind::Tanh; }

  /// alpha(0) = 0 and strictly increasing on [0, hmax], checked on a grid.
  bool check_sampled(double hmax, int points = 1000) const {
    if ((*this)(0.0) != 0.0) return false;
    double prev = 0.0;
    for (int k = 1; k <= points; ++k) {
      const double v = (*this)(hmax * k / points);
      if (!(v > prev)) return false;
      prev = v;
    }
    return true;
  }

 private:
  static ClassK make(Kind kind, double kappa, double s) {
    if (!(kappa > 0.0) || !(s > 0.0) || !std::isfinite(kappa) || !std::isfinite(s)) {
      throw DomainError("ClassK: parameters must be positive and finite");
    }
    ClassK a;
    a.kind = kind;
    a.kappa = kappa;
    a.scale = s;
    return a;
  }
};

/// gamma(h, s) = alpha1(h) * (1 + beta_gain * s^beta_power), alpha1 in K_inf.
struct ClassKinfK {
  ClassK alpha1 = ClassK::linear(1.0);
  double beta_gain = 1.0;
  double beta_power = 1.0;

  static ClassKinfK make(ClassK alpha1, double beta_gain, double beta_power) {
    if (!alpha1.unbounded()) throw DomainError("ClassKinfK: alpha1 must be class K_inf");
    if (!(beta_gain > 0.0) || !(beta_power > 0.0)) {
      throw DomainError("ClassKinfK: beta parameters must be positive");
    }
    return {alpha1, beta_gain, beta_power};
  }

  double operator()(double h, double s) const {
    return alpha1(h) * (1.0 + beta_gain * std::pow(s, beta_power));
  }

  /// gamma(., s) increasing for each sampled s and gamma(h, .) nondecreasing.
  bool check_sampled(double hmax, double smax, int points = 100) const {
    for (int i = 0; i <= points; ++i) {
      const double s = smax * i / points;
      double prev = (*this)(0.0, s);
      if (prev != 0.0) return false;
      for (int k = 1; k <= points; ++k) {
        const double v = (*this)(hmax * k / points, s);
        if (!(v > prev)) return false;
        prev = v;
      }
    }
    for (int k = 1; k <= points; ++k) {
      const double h = hmax * k / points;
      double prev = (*this)(h, 0.0);
      for (int i = 1; i <= points; ++i) {
        const double v = (*this)(h, smax * i / points);
        if (v < prev) return false;
        prev = v;
      }
    }
    return true;
  }
};

/// Either a CBF condition (alpha) or an extended CBF condition (gamma).
using BarrierCondition = std::variant<ClassK, ClassKinfK>;

/// Right-hand side of L_f h(x, u) >= rhs.
inline double make_rhs(const BarrierCondition& cond, double h_val, double x_norm) {
  if (const auto* a = std::get_if<ClassK>(&cond)) return -(*a)(h_val);
  return -std::get<ClassKinfK>(cond)(h_val, x_norm);
}

struct BarrierRow {
  Vector a;  // g(x)^T grad h
  double c;  // grad h^T f0(x)
};

inline BarrierRow barrier_row(const ControlAffineSystem& sys, const Vector& grad_h,
                              const Vector& x) {
  if (grad_h.size() != sys.n || x.size() != sys.n) {
    throw InvalidInput("barrier_row: dimension mismatch");
  }
  return {sys.actuation(x).transpose() * grad_h, grad_h.dot(sys.drift(x))};
}

enum class QpStatus { Analytic, Clipped, Infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Analytic:
      return "analytic";
    case QpStatus::Clipped:
      return "clipped";
    case QpStatus::Infeasible:
      return "infeasible";
  }
  return "?";
}

struct FilterOutcome {
  Vector u;
  double constraint_value = 0.0;  // c + a^T u - rhs
  bool modified = false;
  QpStatus status = QpStatus::Analytic;

  bool feasible() const { return status != QpStatus::Infeasible; }
};

namespace detail {
inline void check_filter_inputs(const Vector& a, double c, double rhs, const Vector& u_des) {
  if (a.size() != u_des.size() || a.size() < 1) {
    throw InvalidInput("filter: a and u_des must have the same nonzero length");
  }
  if (!a.allFinite() || !u_des.allFinite() || !std::isfinite(c) || !std::isfinite(rhs)) {
    throw InvalidInput("filter: non-finite input");
  }
}
}  // namespace detail

/// Closed-form projection of u_des onto {u : a^T u >= rhs - c}.
inline FilterOutcome filter_unconstrained(const Vector& a, double c, double rhs,
                                          const Vector& u_des) {
  detail::check_filter_inputs(a, c, rhs, u_des);
  const double target = rhs - c;
  const double have = a.dot(u_des);
  FilterOutcome out;
  if (have >= target) {
    out.u = u_des;
    out.constraint_value = have - target;
    return out;
  }
  const double a2 = a.squaredNorm();
  if (!(a2 > 0.0)) {
    out.u = u_des;
    out.constraint_value = have - target;
    out.status = QpStatus::Infeasible;
    return out;
  }
  out.u = u_des + ((target - have) / a2) * a;
  out.constraint_value = a.dot(out.u) - target;
  out.modified = true;
  return out;
}

/// Projection of u_des onto {a^T u >= rhs - c} intersected with a box. The
/// multiplier lambda >= 0 is found by bisection on a^T clip(u_des + lambda a),
/// then refined exactly for the final clipping pattern. When even the best
/// box corner violates the constraint the outcome is Infeasible and u is
/// that corner.
inline FilterOutcome filter_boxed(const Vector& a, double c, double rhs, const Vector& u_des,
                                  const InputBox& box) {
  detail::check_filter_inputs(a, c, rhs, u_des);
  if (!box.valid() || box.lower.size() != a.size()) {
    throw InvalidInput("filter_boxed: box malformed or wrong dimension");
  }
  const double target = rhs - c;
  const auto m = a.size();
  FilterOutcome out;

  // Inactive halfspace: plain projection onto the box.
  const Vector u0 = box.clip(u_des);
  if (a.dot(u0) >= target) {
    out.u = u0;
    out.constraint_value = a.dot(u0) - target;
    out.modified = (u0.array() != u_des.array()).any();
    out.status = out.modified ? QpStatus::Clipped : QpStatus::Analytic;
    return out;
  }

  Vector best(m);
  for (Eigen::Index j = 0; j < m; ++j) best[j] = a[j] >= 0.0 ? box.upper[j] : box.lower[j];
  if (a.dot(best) < target) {
    out.u = best;
    out.constraint_value = a.dot(best) - target;
    out.modified = true;
    out.status = QpStatus::Infeasible;
    return out;
  }

  // Inactive box: closed-form solution.
  const FilterOutcome free = filter_unconstrained(a, c, rhs, u_des);
  if (free.feasible() && (free.u.array() >= box.lower.array()).all() &&
      (free.u.array() <= box.upper.array()).all()) {
    return free;
  }

  auto u_of = [&](double lambda) { return Vector(box.clip(u_des + lambda * a)); };
  double lo = 0.0;
  double hi = 1.0;
  while (a.dot(u_of(hi)) < target) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) break;
  }
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (a.dot(u_of(mid)) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  Vector u = u_of(hi);

  // Exact multiplier for the clipping pattern at hi.
  double fixed = 0.0;
  double free_dot = 0.0;
  double free_norm = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double raw = u_des[j] + hi * a[j];
    if (raw <= box.lower[j] || raw >= box.upper[j]) {
      fixed += a[j] * u[j];
    } else {
      free_dot += a[j] * u_des[j];
      free_norm += a[j] * a[j];
    }
  }
  if (free_norm > 0.0) {
    const double lambda = (target - fixed - free_dot) / free_norm;
    if (lambda >= lo - 1e-12 && lambda <= hi + 1e-12) {
      Vector exact = u;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double raw = u_des[j] + hi * a[j];
        if (!(raw <= box.lower[j] || raw >= box.upper[j])) exact[j] = u_des[j] + lambda * a[j];
      }
      if ((exact.array() >= box.lower.array()).all() &&
          (exact.array() <= box.upper.array()).all() && a.dot(exact) >= target - 1e-12) {
        u = exact;
      }
    }
  }

  out.u = u;
  out.constraint_value = a.dot(u) - target;
  out.modified = true;
  out.status = QpStatus::Clipped;
  return out;
}

/// Dispatches on the system's input set.
inline FilterOutcome safety_filter(const ControlAffineSystem& sys, const Vector& x,
                                   const Vector& grad_h, double rhs, const Vector& u_des) {
  const BarrierRow row = barrier_row(sys, grad_h, x);
  return sys.input_box ? filter_boxed(row.a, row.c, rhs, u_des, *sys.input_box)
                       : filter_unconstrained(row.a, row.c, rhs, u_des);
}

}  // namespace softcbf
