#pragma once

// certify / simulate / sweep as library calls. Each writes its artifacts to
// cfg.out and returns the process exit code:
//   0 ok, 1 bad configuration, 2 not strictly safe, 3 MFCQ failure,
//   4 simulated safety violation.

#include "softcbf/backup.hpp"
#include "softcbf/certify.hpp"
#include "softcbf/detail/parallel.hpp"
#include "softcbf/geometry.hpp"
#include "softcbf/scenario.hpp"
#include "softcbf/sim.hpp"
#include "softcbf/systems.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace softcbf {

enum ExitCode : int {
  kExitOk = 0,
  kExitBadConfig = 1,
  kExitNotSafe = 2,
  kExitMfcq = 3,
  kExitViolation = 4,
};

struct CertifyOutcome {
  int code = kExitOk;
  std::string message;
  std::optional<BackupPreconditionReport> preconditions;
  std::optional<TubeSpec> tube;
  std::optional<MfcqReport> mfcq;
  std::optional<ThetaCertificate> cert;
  std::optional<VerifyReport> verify;
  std::optional<NotStrictlySafe> unsafe;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    s += fmt(v[i]);
  }
  return s;
}

inline std::filesystem::path prepare_out(const ScenarioConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_certificate(const CertifyOutcome& o, std::ostream& os) {
  if (o.preconditions) {
    const auto& p = *o.preconditions;
    auto put = [&](const char* name, const PreconditionCheck& c) {
      os << "backup." << name << ".passed = " << (c.passed ? "true" : "false") << '\n'
         << "backup." << name << ".tested = " << c.tested << '\n'
         << "backup." << name << ".margin = " << fmt(c.margin) << '\n';
      if (!c.note.empty()) os << "backup." << name << ".note = " << c.note << '\n';
      if (c.witness.size() > 0 && !c.passed) {
        os << "backup." << name << ".witness = " << fmt(c.witness) << '\n';
      }
    };
    put("backup_set_safe", p.backup_set_safe);
    put("reachable_boundary", p.reachable_boundary);
    put("regular_value", p.regular_value);
    os << "backup.integrator_step = " << fmt(p.integrator_step) << '\n';
  }
  if (o.tube) {
    os << "tube.samples = " << o.tube->samples.size() << '\n'
       << "tube.density = " << fmt(o.tube->density) << '\n';
  }
  if (o.mfcq) {
    os << "mfcq.checked = " << o.mfcq->checked << '\n'
       << "mfcq.failures = " << o.mfcq->failures << '\n';
  }
  if (o.unsafe) {
    os << "unsafe.constraint = " << o.unsafe->constraint() + 1 << '\n'
       << "unsafe.lie = " << fmt(o.unsafe->lie_value()) << '\n'
       << "unsafe.witness = " << fmt(o.unsafe->witness()) << '\n';
  }
  if (o.cert) {
    const auto& c = *o.cert;
    os << "N = " << c.N << '\n'
       << "epsilon = " << fmt(c.bounds.epsilon) << '\n'
       << "M = " << fmt(c.bounds.M) << '\n'
       << "r = " << fmt(c.bounds.r) << '\n'
       << "d = " << fmt(c.bounds.d) << '\n'
       << "activity_tolerance = "
       << (c.bounds.tolerance ? fmt(*c.bounds.tolerance) : std::string("default")) << '\n';
    if (c.tail) {
      os << "tail.R = " << fmt(c.tail->R) << '\n'
         << "tail.eta = " << fmt(c.tail->eta_at_R) << '\n'
         << "tail.C = " << fmt(c.tail->C) << '\n'
         << "tail.p = " << fmt(c.tail->p) << '\n'
         << "tail.r_inf = " << fmt(c.tail->r_inf) << '\n';
    }
    os << "theta_tube = " << fmt(c.theta_tube) << '\n'
       << "theta_core = " << fmt(c.theta_core) << '\n'
       << "theta_tail = " << (c.theta_tail ? fmt(*c.theta_tail) : std::string("none")) << '\n'
       << "theta_star = " << fmt(c.theta_star) << '\n'
       << "kind = " << to_string(c.kind) << '\n';
  }
  if (o.verify) {
    const auto& v = *o.verify;
    os << "verify.theta = " << fmt(v.theta) << '\n'
       << "verify.above_threshold = " << (v.above_threshold ? "true" : "false") << '\n'
       << "verify.located = " << v.located << '\n'
       << "verify.min_lie = " << fmt(v.min_lie) << '\n'
       << "verify.nonpositive = " << v.nonpositive.size() << '\n'
       << "verify.below_zero = " << v.below_zero << '\n'
       << "verify.above_epsilon = " << v.above_epsilon << '\n';
    if (!v.nonpositive.empty()) {
      os << "verify.witness = " << fmt(v.points[v.nonpositive.front()].x) << '\n';
    }
  }
  os << "exit_code = " << o.code << '\n';
  if (!o.message.empty()) os << "message = " << o.message << '\n';
}

}  // namespace detail

/// Preconditions (backup problems), tube sampling, MFCQ, bounds, threshold
/// and boundary verification at cfg.theta or theta_multiplier * theta*.
inline CertifyOutcome certify_benchmark(const Benchmark& bench, const ScenarioConfig& cfg) {
  CertifyOutcome o;
  const ConstraintSet& cs = bench.constraints;
  const VectorField F = bench.closed_loop();
  const double eps = *cfg.epsilon;
  const double density = *cfg.density;

  if (bench.backup) {
    const double band = eps / 4.0;
    const Box box_b = bench.backup_box.value_or(*cs.bounding_box());
    const auto samples =
        backup_boundary_samples(*bench.backup, *cs.bounding_box(), box_b, density, cfg.seed, band);
    o.preconditions = check_backup_preconditions(*bench.backup, samples, band);
    if (!o.preconditions->passed()) {
      o.code = kExitNotSafe;
      o.message = "backup preconditions failed";
      return o;
    }
  }

  try {
    o.tube = sample_tube(cs, eps, density, cfg.seed);
  } catch (const EmptyTube& e) {
    o.code = kExitBadConfig;
    o.message = e.what();
    return o;
  }

  if (cfg.check_mfcq) {
    o.mfcq = check_mfcq(cs, *o.tube, cfg.tolerance);
    if (!o.mfcq->passed()) {
      o.code = kExitMfcq;
      o.message = "MFCQ fails at " + std::to_string(o.mfcq->failures) + " boundary samples";
      return o;
    }
  }

  CompactBounds bounds;
  try {
    bounds = cfg.tolerance ? estimate_bounds(cs, F, *o.tube, cfg.tolerance)
                           : tightest_bounds(cs, F, *o.tube);
  } catch (const NotStrictlySafe& e) {
    o.unsafe = e;
    o.code = kExitNotSafe;
    o.message = e.what();
    return o;
  }
  o.cert = certify(bounds, cfg.tail, cs.count());

  if (cfg.n_check == 0) return o;
  const double theta = cfg.theta.value_or(cfg.theta_multiplier * o.cert->theta_star);
  o.verify = verify_certificate(cs, F, *o.cert, theta, cfg.n_check, cfg.seed + 1);
  if (!o.verify->lie_positive() || !o.verify->contained()) {
    o.code = kExitNotSafe;
    o.message = o.verify->located == 0 ? "no boundary points located"
                                       : "boundary verification found witnesses";
  }
  return o;
}

inline SimConfig sim_config(const Benchmark& bench, const ScenarioConfig& cfg, double theta) {
  SimConfig s;
  s.x0 = *cfg.x0;
  s.t_final = cfg.t_final;
  s.dt = cfg.dt;
  s.theta = theta;
  s.condition = bench.condition;
  s.policy = cfg.policy;
  s.substeps = cfg.substeps;
  return s;
}

inline int cmd_certify(ScenarioConfig cfg, std::ostream& log) {
  Benchmark bench = resolve(cfg);
  const CertifyOutcome o = certify_benchmark(bench, cfg);
  const auto dir = detail::prepare_out(cfg);
  std::ofstream rep(dir / "report.txt");
  rep << "command = certify\n";
  write_config(cfg, rep);
  detail::write_certificate(o, rep);
  if (o.cert) log << "theta* = " << detail::fmt(o.cert->theta_star) << '\n';
  if (o.verify) log << "min boundary Lie value = " << detail::fmt(o.verify->min_lie) << '\n';
  if (o.code != kExitOk) log << "certify: " << o.message << '\n';
  log << "report: " << (dir / "report.txt").string() << '\n';
  return o.code;
}

inline int cmd_simulate(ScenarioConfig cfg, std::ostream& log) {
  Benchmark bench = resolve(cfg);
  std::optional<CertifyOutcome> o;
  double theta = 0.0;
  if (cfg.theta) {
    theta = *cfg.theta;
  } else {
    ScenarioConfig quick = cfg;
    quick.n_check = 0;
    o = certify_benchmark(bench, quick);
    if (!o->cert) {
      log << "simulate: cannot certify: " << o->message << '\n';
      return o->code;
    }
    theta = cfg.theta_multiplier * o->cert->theta_star;
  }
  const SimTrace tr = run(bench, sim_config(bench, cfg, theta));
  const auto dir = detail::prepare_out(cfg);
  write_csv(tr, (dir / "trace.csv").string());
  const int code = tr.violations.empty() ? kExitOk : kExitViolation;

  std::ofstream rep(dir / "report.txt");
  rep << "command = simulate\n";
  write_config(cfg, rep);
  if (o && o->cert) rep << "theta_star = " << detail::fmt(o->cert->theta_star) << '\n';
  rep << "theta = " << detail::fmt(theta) << '\n'
      << "rows = " << tr.size() << '\n'
      << "min_h_soft = " << detail::fmt(tr.min_h_soft) << '\n'
      << "violations = " << tr.violations.size() << '\n'
      << "modified = " << tr.modified_count() << '\n'
      << "infeasible = " << tr.infeasible_count << '\n'
      << "halted = " << (tr.halted ? "true" : "false") << '\n'
      << "took_over = " << (tr.took_over ? "true" : "false") << '\n'
      << "truncated = " << (tr.truncated ? "true" : "false") << '\n';
  for (const auto& w : tr.warnings) rep << "warning = " << w << '\n';
  rep << "exit_code = " << code << '\n';

  for (const auto& w : tr.warnings) log << "warning: " << w << '\n';
  log << "theta = " << detail::fmt(theta) << ", min_h_soft = " << detail::fmt(tr.min_h_soft)
      << ", infeasible = " << tr.infeasible_count << '\n';
  if (code != kExitOk) {
    log << "simulate: " << tr.violations.size() << " steps below "
        << detail::fmt(SimConfig{}.violation_tolerance) << ", first at t = " << detail::fmt(tr.violations.front().t)
        << '\n';
  }
  return code;
}

struct SweepRow {
  double theta = 0.0;
  double min_boundary_lie = kInf;
  double min_h_soft = kInf;
  std::size_t infeasible = 0;
};

/// One verification and one simulation per theta, in parallel over theta.
inline std::vector<SweepRow> sweep_rows(const Benchmark& bench, const ScenarioConfig& cfg,
                                        const ThetaCertificate& cert) {
  std::vector<SweepRow> rows(cfg.thetas.size());
  const VectorField F = bench.closed_loop();
  detail::parallel_for(cfg.thetas.size(), [&](std::size_t k) {
    const double theta = cfg.thetas[k];
    const VerifyReport v =
        verify_certificate(bench.constraints, F, cert, theta, cfg.n_check, cfg.seed + 1);
    SimConfig s = sim_config(bench, cfg, theta);
    SimTrace tr;
    try {
      tr = run(bench, s);
    } catch (const InvalidInput&) {
      // x0 outside the safe set for this theta: no trace
    }
    rows[k] = {theta, v.min_lie, tr.min_h_soft, tr.infeasible_count};
  });
  return rows;
}

inline int cmd_sweep(ScenarioConfig cfg, std::ostream& log) {
  if (cfg.thetas.empty()) {
    log << "sweep: empty theta list\n";
    return kExitBadConfig;
  }
  Benchmark bench = resolve(cfg);
  ScenarioConfig quick = cfg;
  quick.n_check = 0;
  const CertifyOutcome o = certify_benchmark(bench, quick);
  if (!o.cert) {
    log << "sweep: cannot certify: " << o.message << '\n';
    return o.code;
  }
  const auto rows = sweep_rows(bench, cfg, *o.cert);
  const auto dir = detail::prepare_out(cfg);
  std::ofstream csv(dir / "sweep.csv");
  csv << "theta,min_boundary_lie,min_h_soft,infeasible_count\n";
  for (const auto& r : rows) {
    csv << detail::fmt(r.theta) << ',' << detail::fmt(r.min_boundary_lie) << ','
        << detail::fmt(r.min_h_soft) << ',' << r.infeasible << '\n';
  }
  std::ofstream rep(dir / "report.txt");
  rep << "command = sweep\n";
  write_config(cfg, rep);
  rep << "theta_star = " << detail::fmt(o.cert->theta_star) << '\n'
      << "theta_tube = " << detail::fmt(o.cert->theta_tube) << '\n'
      << "rows = " << rows.size() << '\n';
  log << "theta* = " << detail::fmt(o.cert->theta_star) << ", " << rows.size()
      << " rows: " << (dir / "sweep.csv").string() << '\n';
  return kExitOk;
}

}  // namespace softcbf
