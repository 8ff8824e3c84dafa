#pragma once

// Smoothing thresholds for the soft-min barrier.
//
// Compact sets:
//   theta_tube = log(N) / eps
//   theta_core = (1/d) log(N (r + M) / r)
//   theta*     = max(theta_tube, theta_core)
//
// Unbounded sets add the tail term
//   theta_tail = (1/eta(R)) log((N - 1)(r_inf + C (1 + R)^p) / r_inf)
// and the result is an extended CBF certificate.

#include "softcbf/detail/parallel.hpp"
#include "softcbf/geometry.hpp"
#include "softcbf/softmin.hpp"
#include "softcbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace softcbf {

struct TailSpec {
  double R = 0.0;         // core/tail split radius
  double eta_at_R = 0.0;  // inactive gap floor at the split radius
  double C = 0.0;         // inactive Lie derivative growth C (1 + |x|)^p
  double p = 0.0;
  double r_inf = 0.0;     // uniform floor on active Lie derivatives in the tail

  void validate() const {
    if (!(R > 0.0) || !std::isfinite(R)) throw InvalidCertificate("TailSpec: R must be positive");
    if (!(eta_at_R > 0.0) || !std::isfinite(eta_at_R)) {
      throw InvalidCertificate("TailSpec: eta(R) must be positive");
    }
    if (!(C >= 0.0) || !std::isfinite(C)) throw InvalidCertificate("TailSpec: C must be >= 0");
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidCertificate("TailSpec: p must be >= 0");
    if (!(r_inf > 0.0) || !std::isfinite(r_inf)) {
      throw InvalidCertificate("TailSpec: r_inf must be positive");
    }
  }
};

enum class BarrierKind { CBF, eCBF };

inline const char* to_string(BarrierKind k) { return k == BarrierKind::CBF ? "CBF" : "eCBF"; }

struct ThetaCertificate {
  double theta_tube = 0.0;
  double theta_core = 0.0;
  std::optional<double> theta_tail;
  double theta_star = 0.0;
  int N = 1;
  CompactBounds bounds;
  std::optional<TailSpec> tail;
  BarrierKind kind = BarrierKind::CBF;
};

/// Compact-set threshold. With N = 1 or no inactive constraints (d = inf)
/// the inactive sum is empty and theta_core is 0.
inline ThetaCertificate theta_star_compact(const CompactBounds& bounds, int N) {
  if (N < 1) throw InvalidCertificate("theta_star_compact: N must be >= 1");
  if (!(bounds.r > 0.0) || !std::isfinite(bounds.r)) {
    throw InvalidCertificate("theta_star_compact: r must be positive and finite");
  }
  if (!(bounds.epsilon > 0.0) || !std::isfinite(bounds.epsilon)) {
    throw InvalidCertificate("theta_star_compact: epsilon must be positive");
  }
  if (!(bounds.d > 0.0)) throw InvalidCertificate("theta_star_compact: d must be positive");
  if (!(bounds.M >= 0.0) || !std::isfinite(bounds.M)) {
    throw InvalidCertificate("theta_star_compact: M must be finite and nonnegative");
  }

  ThetaCertificate cert;
  cert.N = N;
  cert.bounds = bounds;
  cert.theta_tube = std::log(static_cast<double>(N)) / bounds.epsilon;
  if (N > 1 && std::isfinite(bounds.d)) {
    cert.theta_core =
        std::log(static_cast<double>(N) * (bounds.r + bounds.M) / bounds.r) / bounds.d;
  }
  cert.theta_star = std::max(cert.theta_tube, cert.theta_core);
  cert.kind = BarrierKind::CBF;
  return cert;
}

/// Tail threshold; 0 for N = 1 (no inactive constraints in the tail).
inline double theta_star_tail(const TailSpec& tail, int N) {
  if (N < 1) throw InvalidCertificate("theta_star_tail: N must be >= 1");
  tail.validate();
  if (N == 1) return 0.0;
  const double growth = tail.r_inf + tail.C * std::pow(1.0 + tail.R, tail.p);
  return std::log(static_cast<double>(N - 1) * growth / tail.r_inf) / tail.eta_at_R;
}

inline ThetaCertificate certify(const CompactBounds& bounds, const std::optional<TailSpec>& tail,
                                int N) {
  ThetaCertificate cert = theta_star_compact(bounds, N);
  if (tail) {
    cert.tail = *tail;
    cert.theta_tail = theta_star_tail(*tail, N);
    cert.theta_star = std::max(cert.theta_star, *cert.theta_tail);
    cert.kind = BarrierKind::eCBF;
  }
  return cert;
}

/// Tube bounds with the activity tolerance chosen from a ladder
/// {default, eps * 1e-3, 1e-2, 1e-1, 0.5} to minimize theta*. Any partition
/// whose active group contains the minimizer and has positive Lie
/// derivatives yields a valid bound, so each rung is a certificate on its own.
/// Rethrows the default-tolerance error when no rung is strictly safe.
inline CompactBounds tightest_bounds(const ConstraintSet& cs, const VectorField& field,
                                     const TubeSpec& tube) {
  std::optional<CompactBounds> best;
  double best_theta = kInf;
  std::optional<NotStrictlySafe> first_error;
  const std::vector<std::optional<double>> ladder = {
      std::nullopt, tube.epsilon * 1e-3, tube.epsilon * 1e-2, tube.epsilon * 1e-1,
      tube.epsilon * 0.5};
  for (const auto& tol : ladder) {
    try {
      CompactBounds b = estimate_bounds(cs, field, tube, tol);
      const double theta = theta_star_compact(b, cs.count()).theta_star;
      if (theta < best_theta) {
        best_theta = theta;
        best = std::move(b);
      }
    } catch (const NotStrictlySafe& e) {
      if (!tol) first_error = e;
    }
  }
  if (!best) {
    if (first_error) throw *first_error;
    throw InvalidCertificate("tightest_bounds: no tolerance produced a certificate");
  }
  return *best;
}

struct BoundaryPoint {
  Vector x;
  double soft_value = 0.0;  // >= 0, within 1e-10 of zero
  double hard_value = 0.0;
  double lie = 0.0;         // L_F of the soft-min barrier
};

struct VerifyReport {
  double theta = 0.0;
  bool above_threshold = false;  // theta > theta*
  std::size_t requested = 0;
  std::size_t located = 0;
  std::vector<BoundaryPoint> points;
  double min_lie = kInf;
  std::vector<std::size_t> nonpositive;  // indices into points
  std::size_t below_zero = 0;            // hard min < 0 at a located point
  std::size_t above_epsilon = 0;         // hard min > epsilon (only when theta >= theta_tube)
  bool no_interior = false;              // soft-min set empty on the sampled box
  bool no_exit = false;                  // no ray left the soft-min set

  bool lie_positive() const { return located > 0 && nonpositive.empty(); }
  bool contained() const { return below_zero == 0 && above_epsilon == 0; }
};

/// Locates points on {h_theta = 0} by bisection along random rays from
/// interior states (h_theta > 0) of the bounding box. Returned points satisfy
/// 0 <= h_theta(x) <= 1e-10.
inline std::vector<Vector> locate_soft_boundary(const ConstraintSet& cs, double theta,
                                                std::size_t count, std::uint64_t seed,
                                                bool* no_interior = nullptr,
                                                bool* no_exit = nullptr) {
  if (!cs.compact()) throw InvalidInput("locate_soft_boundary: constraint set has no box");
  detail::require_theta(theta, "locate_soft_boundary");
  const Box& box = *cs.bounding_box();
  std::mt19937_64 rng(seed);
  auto f = [&](const Vector& x) { return cs.soft_min(x, theta); };

  const std::size_t pool_size = std::max<std::size_t>(256, 2 * count);
  std::vector<Vector> pool(pool_size);
  for (auto& p : pool) p = detail::uniform_in_box(box, rng);
  std::vector<double> pool_vals(pool_size);
  detail::parallel_for(pool_size, [&](std::size_t i) { pool_vals[i] = f(pool[i]); });
  std::vector<std::size_t> interior;
  for (std::size_t i = 0; i < pool_size; ++i) {
    if (pool_vals[i] > 0.0) interior.push_back(i);
  }
  if (no_interior) *no_interior = interior.empty();
  if (no_exit) *no_exit = false;
  if (interior.empty() || count == 0) return {};

  const double step = box.diagonal() / 64.0;
  std::vector<Vector> found;
  std::uniform_int_distribution<std::size_t> pick(0, interior.size() - 1);
  // Up to four rounds of rays; misses (rays that stay inside up to the box)
  // are replaced in the next round.
  for (int round = 0; round < 4 && found.size() < count; ++round) {
    const std::size_t need = count - found.size();
    std::vector<Vector> origins(need);
    std::vector<Vector> dirs(need);
    for (std::size_t k = 0; k < need; ++k) {
      origins[k] = pool[interior[pick(rng)]];
      dirs[k] = detail::random_direction(box.dim(), rng);
    }
    std::vector<std::optional<Vector>> hits(need);
    detail::parallel_for(need, [&](std::size_t k) {
      hits[k] = detail::bisect_ray(f, box, origins[k], dirs[k], step, 1e-10);
    });
    for (auto& h : hits) {
      if (h) found.push_back(std::move(*h));
    }
  }
  if (no_exit) *no_exit = found.empty();
  return found;
}

/// Samples the soft-min boundary at the given theta and reports the minimum
/// of L_F h_theta together with containment of the boundary in the tube.
inline VerifyReport verify_certificate(const ConstraintSet& cs, const VectorField& field,
                                       const ThetaCertificate& cert, double theta,
                                       std::size_t n_check, std::uint64_t seed) {
  VerifyReport rep;
  rep.theta = theta;
  rep.above_threshold = theta > cert.theta_star;
  rep.requested = n_check;
  const auto xs = locate_soft_boundary(cs, theta, n_check, seed, &rep.no_interior, &rep.no_exit);
  rep.points.resize(xs.size());
  detail::parallel_for(xs.size(), [&](std::size_t k) {
    const ConstraintEval ev = cs.evaluate(xs[k]);
    const Vector w = softmin_weights(ev.values, theta);
    const Vector grad = softmin_gradient(ev.gradients, w);
    const Vector fx = field(xs[k]);
    rep.points[k] = {xs[k], softmin_value(ev.values, theta), ev.min(), grad.dot(fx)};
  });
  rep.located = rep.points.size();
  // Slack for the 1e-10 location tolerance in the upper containment check.
  const double eps_slack = 1e-9;
  for (std::size_t k = 0; k < rep.points.size(); ++k) {
    const auto& p = rep.points[k];
    rep.min_lie = std::min(rep.min_lie, p.lie);
    if (!(p.lie > 0.0)) rep.nonpositive.push_back(k);
    if (p.hard_value < 0.0) ++rep.below_zero;
    if (theta >= cert.theta_tube && p.hard_value > cert.bounds.epsilon + eps_slack) {
      ++rep.above_epsilon;
    }
  }
  return rep;
}

}  // namespace softcbf
