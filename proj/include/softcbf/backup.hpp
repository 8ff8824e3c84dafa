#pragma once

// Backup-CBF pipeline. A backup controller k_b with closed loop
// F_b(x) = f(x, k_b(x)) is flowed forward for T time units; the slice
// constraints
//
//   b_i(x) = h(phi(x, tau_i))     i < N,   tau_i = (i - 1) dtau
//   b_N(x) = h_b(phi(x, T))
//
// have gradients D_x phi(x, tau_i)^T grad h(phi(x, tau_i)), where the flow
// sensitivity S = D_x phi solves the variational equation Sdot = J_Fb(x) S,
// S(0) = I, integrated alongside the state.

#include "softcbf/certify.hpp"
#include "softcbf/detail/ode.hpp"
#include "softcbf/detail/parallel.hpp"
#include "softcbf/filter.hpp"
#include "softcbf/geometry.hpp"
#include "softcbf/softmin.hpp"
#include "softcbf/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace softcbf {

using JacobianFn = std::function<Matrix(const Vector&)>;

struct BackupProblem {
  ControlAffineSystem sys;
  Controller k_b;
  Constraint h;    // safe set S = {h >= 0}
  Constraint h_b;  // backup set S_b = {h_b >= 0}
  double T = 1.0;
  double dtau = 0.1;
  double h_max = 1e-2;  // largest RK4 step
  JacobianFn jacobian;  // analytic Jacobian of F_b; finite differences if empty

  /// Number of slice constraints, T / dtau + 1.
  int slices() const { return static_cast<int>(std::lround(T / dtau)) + 1; }

  VectorField closed_loop() const { return sys.closed_loop(k_b); }

  void validate() const {
    sys.validate();
    if (!k_b) throw InvalidInput("BackupProblem: missing backup controller");
    if (!h.value || !h.gradient || !h_b.value || !h_b.gradient) {
      throw InvalidInput("BackupProblem: h and h_b need value and gradient");
    }
    if (!(T > 0.0) || !(dtau > 0.0) || !(h_max > 0.0)) {
      throw DomainError("BackupProblem: T, dtau and h_max must be positive");
    }
    const double ratio = T / dtau;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio)) {
      throw DomainError("BackupProblem: dtau must divide T");
    }
    if (slices() < 2) throw DomainError("BackupProblem: need at least two slices");
  }
};

struct FlowStats {
  std::size_t steps = 0;
  double step_size = 0.0;
  double max_local_error = std::numeric_limits<double>::quiet_NaN();  // step doubling, if requested
};

struct FlowResult {
  std::vector<double> times;
  std::vector<Vector> states;         // phi(x, tau_i)
  std::vector<Matrix> sensitivities;  // D_x phi(x, tau_i); empty without sensitivities
  FlowStats stats;

  /// 2-norm condition number of the sensitivity at slice i.
  double condition(std::size_t i) const {
    Eigen::JacobiSVD<Matrix> svd(sensitivities.at(i));
    const auto& s = svd.singularValues();
    return s[0] / s[s.size() - 1];
  }
};

struct FlowOptions {
  bool sensitivities = true;
  bool estimate_error = false;
};

/// Flows x0 under `field` and records the state (and sensitivity) at
/// `slices` grid times 0, dtau, ..., (slices - 1) dtau. RK4 step is
/// dtau / ceil(dtau / h_max) so every slice time is a grid point.
inline FlowResult integrate_field(const VectorField& field, const JacobianFn& jacobian,
                                  const Vector& x0, double dtau, int slices, double h_max,
                                  FlowOptions opts = {}) {
  if (!x0.allFinite()) throw InvalidInput("integrate_flow: initial state not finite");
  if (slices < 1 || !(dtau > 0.0) || !(h_max > 0.0)) {
    throw DomainError("integrate_flow: bad time grid");
  }
  const auto n = x0.size();
  const int substeps = static_cast<int>(std::ceil(dtau / h_max - 1e-12));
  const double step = dtau / substeps;

  auto jac = [&](const Vector& x) -> Matrix {
    return jacobian ? jacobian(x) : detail::fd_jacobian(field, x);
  };
  // Augmented right-hand side for (x, S).
  auto aug = [&](const Vector& x, const Matrix& S, Vector& dx, Matrix& dS) {
    dx = field(x);
    if (opts.sensitivities) dS = jac(x) * S;
  };

  FlowResult out;
  out.stats.step_size = step;
  out.times.reserve(static_cast<std::size_t>(slices));
  out.states.reserve(static_cast<std::size_t>(slices));
  Vector x = x0;
  Matrix S = Matrix::Identity(n, n);
  out.times.push_back(0.0);
  out.states.push_back(x);
  if (opts.sensitivities) out.sensitivities.push_back(S);
  double max_err = 0.0;

  Vector k1x, k2x, k3x, k4x;
  Matrix k1s, k2s, k3s, k4s;
  for (int slice = 1; slice < slices; ++slice) {
    for (int k = 0; k < substeps; ++k) {
      const Vector x_start = x;
      aug(x, S, k1x, k1s);
      if (opts.sensitivities) {
        aug(x + 0.5 * step * k1x, S + 0.5 * step * k1s, k2x, k2s);
        aug(x + 0.5 * step * k2x, S + 0.5 * step * k2s, k3x, k3s);
        aug(x + step * k3x, S + step * k3s, k4x, k4s);
        S += (step / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
      } else {
        aug(x + 0.5 * step * k1x, S, k2x, k2s);
        aug(x + 0.5 * step * k2x, S, k3x, k3s);
        aug(x + step * k3x, S, k4x, k4s);
      }
      x += (step / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      ++out.stats.steps;
      const double t_now = (slice - 1) * dtau + (k + 1) * step;
      if (!x.allFinite() || (opts.sensitivities && !S.allFinite())) {
        std::ostringstream msg;
        msg << "integrate_flow: state diverged at t = " << t_now;
        throw FlowBlowUp(msg.str(), t_now);
      }
      if (opts.estimate_error) {
        const Vector half = detail::rk4_step(field, x_start, 0.5 * step);
        const Vector two_half = detail::rk4_step(field, half, 0.5 * step);
        max_err = std::max(max_err, (two_half - x).norm() / 15.0);
      }
    }
    out.times.push_back(slice * dtau);
    out.states.push_back(x);
    if (opts.sensitivities) out.sensitivities.push_back(S);
  }
  if (opts.estimate_error) out.stats.max_local_error = max_err;
  return out;
}

inline FlowResult integrate_flow(const BackupProblem& prob, const Vector& x0,
                                 FlowOptions opts = {}) {
  if (x0.size() != prob.sys.n) throw InvalidInput("integrate_flow: state dimension mismatch");
  return integrate_field(prob.closed_loop(), prob.jacobian, x0, prob.dtau, prob.slices(),
                         prob.h_max, opts);
}

struct BackupBarrier {
  Vector b_values;     // b_1..b_N
  Matrix b_gradients;  // row i = grad b_i
  double theta = 0.0;
  double soft_value = 0.0;
  Vector soft_gradient;
};

namespace detail {
inline ConstraintEval slice_constraints(const BackupProblem& prob, const FlowResult& flow) {
  const int N = prob.slices();
  if (static_cast<int>(flow.states.size()) != N ||
      static_cast<int>(flow.sensitivities.size()) != N) {
    throw InvalidInput("backup: flow does not match the problem's slices");
  }
  ConstraintEval ev;
  ev.values.resize(N);
  ev.gradients.resize(N, prob.sys.n);
  for (int i = 0; i < N; ++i) {
    const auto& y = flow.states[static_cast<std::size_t>(i)];
    const auto& S = flow.sensitivities[static_cast<std::size_t>(i)];
    const Constraint& c = (i < N - 1) ? prob.h : prob.h_b;
    ev.values[i] = c.value(y);
    ev.gradients.row(i) = (S.transpose() * c.gradient(y)).transpose();
  }
  return ev;
}

inline Vector slice_values(const BackupProblem& prob, const FlowResult& flow) {
  const int N = prob.slices();
  Vector v(N);
  for (int i = 0; i < N; ++i) {
    const auto& y = flow.states[static_cast<std::size_t>(i)];
    v[i] = (i < N - 1) ? prob.h.value(y) : prob.h_b.value(y);
  }
  return v;
}
}  // namespace detail

inline BackupBarrier backup_barrier(const BackupProblem& prob, const FlowResult& flow,
                                    double theta) {
  const ConstraintEval ev = detail::slice_constraints(prob, flow);
  BackupBarrier bb;
  bb.b_values = ev.values;
  bb.b_gradients = ev.gradients;
  bb.theta = theta;
  const Vector w = softmin_weights(ev.values, theta);
  bb.soft_value = softmin_value(ev.values, theta);
  bb.soft_gradient = softmin_gradient(ev.gradients, w);
  return bb;
}

/// Constraint family x -> (b_i(x), grad b_i(x)); each evaluation integrates
/// the backup flow.
inline ConstraintSet backup_constraint_set(const BackupProblem& prob,
                                           std::optional<Box> box = std::nullopt) {
  prob.validate();
  ConstraintSet::Evaluator eval = [prob](const Vector& x) {
    return detail::slice_constraints(prob, integrate_flow(prob, x));
  };
  ConstraintSet::ValueEvaluator vals = [prob](const Vector& x) {
    return detail::slice_values(prob, integrate_flow(prob, x, {.sensitivities = false}));
  };
  return ConstraintSet(prob.sys.n, prob.slices(), std::move(eval), std::move(vals),
                       std::move(box));
}

struct PreconditionCheck {
  bool passed = false;
  bool vacuous = false;
  std::size_t tested = 0;
  double margin = kInf;  // smallest tested quantity
  Vector witness;        // state attaining the margin
  std::string note;
};

struct BackupPreconditionReport {
  PreconditionCheck backup_set_safe;     // L_Fb h_b > 0 on the backup set boundary
  PreconditionCheck reachable_boundary;  // L_Fb h > 0 on the backup-reachable boundary of S
  PreconditionCheck regular_value;       // |grad h_b| > tol on the backup set boundary
  double integrator_step = 0.0;

  bool passed() const {
    return backup_set_safe.passed && reachable_boundary.passed && regular_value.passed;
  }
};

/// Sampled checks of the backup-set safety, the backup-reachable boundary
/// condition and the regular-value condition. Membership of the reachable
/// boundary is decided by h_b(phi(y, T)) >= 0 with the RK4 flow.
inline BackupPreconditionReport check_backup_preconditions(const BackupProblem& prob,
                                                           const std::vector<Vector>& samples,
                                                           double tol) {
  prob.validate();
  if (!(tol > 0.0)) throw DomainError("check_backup_preconditions: tol must be positive");
  const VectorField Fb = prob.closed_loop();
  const std::size_t n = samples.size();

  struct Row {
    bool near_sb = false;
    double lie_hb = 0.0;
    double grad_hb = 0.0;
    bool on_c = false;
    double lie_h = 0.0;
  };
  std::vector<Row> rows(n);
  detail::parallel_for(n, [&](std::size_t k) {
    const Vector& x = samples[k];
    Row r;
    const Vector fx = Fb(x);
    if (std::abs(prob.h_b.value(x)) <= tol) {
      r.near_sb = true;
      const Vector g = prob.h_b.gradient(x);
      r.lie_hb = g.dot(fx);
      r.grad_hb = g.norm();
    }
    if (std::abs(prob.h.value(x)) <= tol) {
      const FlowResult flow = integrate_flow(prob, x, {.sensitivities = false});
      if (prob.h_b.value(flow.states.back()) >= 0.0) {
        r.on_c = true;
        r.lie_h = prob.h.gradient(x).dot(fx);
      }
    }
    rows[k] = r;
  });

  BackupPreconditionReport rep;
  rep.integrator_step = prob.dtau / std::ceil(prob.dtau / prob.h_max - 1e-12);
  auto fold = [&](PreconditionCheck& chk, bool Row::*select, double Row::*quantity,
                  double threshold) {
    for (std::size_t k = 0; k < n; ++k) {
      if (!(rows[k].*select)) continue;
      ++chk.tested;
      if (rows[k].*quantity < chk.margin) {
        chk.margin = rows[k].*quantity;
        chk.witness = samples[k];
      }
    }
    chk.passed = chk.tested > 0 && chk.margin > threshold;
  };
  fold(rep.backup_set_safe, &Row::near_sb, &Row::lie_hb, 0.0);
  fold(rep.regular_value, &Row::near_sb, &Row::grad_hb, tol);
  fold(rep.reachable_boundary, &Row::on_c, &Row::lie_h, 0.0);

  if (rep.backup_set_safe.tested == 0) {
    rep.backup_set_safe.note = "no samples near the backup set boundary";
    rep.regular_value.note = rep.backup_set_safe.note;
  }
  if (rep.reachable_boundary.tested == 0) {
    rep.reachable_boundary.passed = true;
    rep.reachable_boundary.vacuous = true;
    rep.reachable_boundary.note = "C empty - trivial case";
  } else {
    rep.reachable_boundary.note = "membership via RK4 flow, step " +
                                  std::to_string(rep.integrator_step);
  }
  return rep;
}

/// States near the boundary of S (tube of h over box_s) and of S_b (tube of
/// h_b over box_b), band wide, for check_backup_preconditions.
inline std::vector<Vector> backup_boundary_samples(const BackupProblem& prob, const Box& box_s,
                                                   const Box& box_b, double density,
                                                   std::uint64_t seed, double band) {
  const int n = prob.sys.n;
  const auto s_set = ConstraintSet::from_constraints(n, {prob.h}, box_s);
  const auto b_set = ConstraintSet::from_constraints(n, {prob.h_b}, box_b);
  auto out = sample_tube(s_set, band, density, seed).samples;
  auto inner = sample_tube(b_set, band, density, seed + 1).samples;
  out.insert(out.end(), inner.begin(), inner.end());
  return out;
}

/// Threshold for the soft-min of the slice constraints, with bounds sampled
/// on the tube of min_i b_i under `field` (normally F_b). Uses the given
/// activity tolerance, or the tolerance ladder of tightest_bounds if none.
inline ThetaCertificate certify_backup(const BackupProblem& prob, const VectorField& field,
                                       double epsilon, double density, std::uint64_t seed,
                                       const Box& box,
                                       std::optional<double> tolerance = std::nullopt) {
  const ConstraintSet cs = backup_constraint_set(prob, box);
  const TubeSpec tube = sample_tube(cs, epsilon, density, seed);
  const CompactBounds bounds =
      tolerance ? estimate_bounds(cs, field, tube, tolerance) : tightest_bounds(cs, field, tube);
  return theta_star_compact(bounds, cs.count());
}

}  // namespace softcbf
