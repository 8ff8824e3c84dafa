#pragma once

// Sampled-data closed loop: at every control step the soft-min barrier is
// evaluated, the desired input is filtered, and the plant is integrated over
// one step with the input held (RK4 substeps).

#include "softcbf/detail/ode.hpp"
#include "softcbf/filter.hpp"
#include "softcbf/softmin.hpp"
#include "softcbf/systems.hpp"
#include "softcbf/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace softcbf {

enum class InfeasiblePolicy { Halt, BackupTakeover, Clip };

inline const char* to_string(InfeasiblePolicy p) {
  switch (p) {
    case InfeasiblePolicy::Halt:
      return "halt";
    case InfeasiblePolicy::BackupTakeover:
      return "backup-takeover";
    case InfeasiblePolicy::Clip:
      return "clip";
  }
  return "?";
}

inline InfeasiblePolicy parse_policy(const std::string& s) {
  if (s == "halt") return InfeasiblePolicy::Halt;
  if (s == "backup-takeover") return InfeasiblePolicy::BackupTakeover;
  if (s == "clip") return InfeasiblePolicy::Clip;
  throw InvalidInput("unknown infeasible policy '" + s + "'");
}

struct SimConfig {
  Vector x0;
  double t_final = 10.0;
  double dt = 0.01;
  double theta = 1.0;
  BarrierCondition condition = ClassK::linear(1.0);
  InfeasiblePolicy policy = InfeasiblePolicy::BackupTakeover;
  int substeps = 10;
  double violation_tolerance = -1e-6;

  void validate(int n) const {
    if (x0.size() != n) throw InvalidInput("SimConfig: x0 has wrong dimension");
    if (!x0.allFinite()) throw InvalidInput("SimConfig: x0 not finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("SimConfig: dt must be positive");
    if (!(t_final >= dt) || !std::isfinite(t_final)) {
      throw InvalidInput("SimConfig: t_final must be >= dt");
    }
    if (!(theta > 0.0) || !std::isfinite(theta)) {
      throw InvalidInput("SimConfig: theta must be positive");
    }
    if (substeps < 1) throw InvalidInput("SimConfig: substeps must be >= 1");
  }
};

struct Violation {
  double t;
  double h;
};

struct SimTrace {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> controls;
  std::vector<double> h_soft;
  std::vector<double> h_hard;
  std::vector<bool> modified;
  std::vector<bool> infeasible;
  double min_h_soft = kInf;
  std::vector<Violation> violations;
  std::size_t infeasible_count = 0;
  bool halted = false;
  bool took_over = false;
  bool truncated = false;  // plant or backup flow blew up
  std::vector<std::string> warnings;

  std::size_t size() const { return times.size(); }
  std::size_t modified_count() const {
    std::size_t c = 0;
    for (bool b : modified) c += b ? 1 : 0;
    return c;
  }
};

namespace detail {

struct BarrierSample {
  double soft = 0.0;
  double hard = 0.0;
  Vector gradient;
};

inline BarrierSample barrier_at(const ConstraintSet& cs, const Vector& x, double theta) {
  const ConstraintEval ev = cs.evaluate(x);
  const SoftMinResult sm = softmin(ev.values, theta);
  return {sm.value, ev.min(), softmin_gradient(ev.gradients, sm.weights)};
}

}  // namespace detail

/// Runs the filtered closed loop from cfg.x0 for floor(t_final / dt) steps
/// and records K + 1 rows (the last row has no step after it).
inline SimTrace run(const Benchmark& bench, const SimConfig& cfg) {
  const ControlAffineSystem& sys = bench.sys;
  sys.validate();
  cfg.validate(sys.n);

  SimTrace tr;
  {
    const double soft0 = bench.constraints.soft_min(cfg.x0, cfg.theta);
    if (soft0 < 0.0) {
      if (bench.constraints.hard_min(cfg.x0) < 0.0) {
        throw InvalidInput("sim: x0 is outside the safe set");
      }
      tr.warnings.push_back("x0 is in the safe set but outside the soft-min set");
    }
  }
  if (cfg.policy == InfeasiblePolicy::Clip) {
    tr.warnings.push_back("clip policy: infeasible steps apply a saturated input, no guarantee");
  }

  const Controller fallback = bench.backup ? bench.backup->k_b : bench.safe;
  const auto steps = static_cast<long>(std::floor(cfg.t_final / cfg.dt + 1e-9));
  const double h = cfg.dt / cfg.substeps;
  bool backup_mode = false;
  Vector x = cfg.x0;

  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    detail::BarrierSample bs;
    try {
      bs = detail::barrier_at(bench.constraints, x, cfg.theta);
    } catch (const FlowBlowUp&) {
      tr.truncated = true;
      tr.warnings.push_back("backup flow blew up at t = " + std::to_string(t));
      break;
    }

    const Vector u_des = bench.desired(x);
    Vector u;
    bool modified = false;
    bool infeasible = false;
    if (backup_mode) {
      u = fallback(x);
      if (sys.input_box) u = sys.input_box->clip(u);
      modified = true;
    } else {
      const double rhs = make_rhs(cfg.condition, bs.soft, x.norm());
      const FilterOutcome fo = safety_filter(sys, x, bs.gradient, rhs, u_des);
      u = fo.u;
      modified = fo.modified;
      if (!fo.feasible()) {
        infeasible = true;
        ++tr.infeasible_count;
        switch (cfg.policy) {
          case InfeasiblePolicy::Halt:
            tr.halted = true;
            break;
          case InfeasiblePolicy::BackupTakeover:
            backup_mode = true;
            tr.took_over = true;
            u = fallback(x);
            if (sys.input_box) u = sys.input_box->clip(u);
            modified = true;
            break;
          case InfeasiblePolicy::Clip:
            break;
        }
      }
    }

    tr.times.push_back(t);
    tr.states.push_back(x);
    tr.controls.push_back(u);
    tr.h_soft.push_back(bs.soft);
    tr.h_hard.push_back(bs.hard);
    tr.modified.push_back(modified);
    tr.infeasible.push_back(infeasible);
    tr.min_h_soft = std::min(tr.min_h_soft, bs.soft);
    if (bs.soft < cfg.violation_tolerance) tr.violations.push_back({t, bs.soft});

    if (tr.halted || k == steps) break;

    auto held = [&](const Vector& s) { return sys.dynamics(s, u); };
    for (int j = 0; j < cfg.substeps; ++j) x = detail::rk4_step(held, x, h);
    if (!x.allFinite()) {
      tr.truncated = true;
      tr.warnings.push_back("plant blew up after t = " + std::to_string(t));
      break;
    }
  }
  return tr;
}

/// CSV with header t,x_1..x_n,u_1..u_m,h_soft,h_hard,modified,infeasible.
inline void write_csv(const SimTrace& tr, std::ostream& os) {
  const Eigen::Index n = tr.states.empty() ? 0 : tr.states.front().size();
  const Eigen::Index m = tr.controls.empty() ? 0 : tr.controls.front().size();
  os << "t";
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x_" << i;
  for (Eigen::Index i = 1; i <= m; ++i) os << ",u_" << i;
  os << ",h_soft,h_hard,modified,infeasible\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
  };
  for (std::size_t k = 0; k < tr.size(); ++k) {
    put(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) {
      os << ',';
      put(tr.states[k][i]);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      os << ',';
      put(tr.controls[k][i]);
    }
    os << ',';
    put(tr.h_soft[k]);
    os << ',';
    put(tr.h_hard[k]);
    os << ',' << (tr.modified[k] ? 1 : 0) << ',' << (tr.infeasible[k] ? 1 : 0) << '\n';
  }
}

inline void write_csv(const SimTrace& tr, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  write_csv(tr, f);
}

}  // namespace softcbf
