#pragma once

// Constraint families h_1..h_N, the epsilon-tube {0 <= min_i h_i <= eps} and
// sampled estimates of the tube bounds
//
//   M = max_i |L_F h_i|,   r = min_{i active} L_F h_i,   d = min_{j inactive} gap_j
//
// The bounds are certificates over the sample cloud only; `density` is the
// rigor knob and is carried along so reports can state it.

#include "softcbf/detail/parallel.hpp"
#include "softcbf/softmin.hpp"
#include "softcbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace softcbf {

/// Values and gradients of all constraints at one state. Row i of
/// `gradients` is grad h_i(x).
struct ConstraintEval {
  Vector values;
  Matrix gradients;

  double min() const { return values.minCoeff(); }
  Vector lie(const Vector& field) const { return gradients * field; }
};

/// One scalar C^1 constraint.
struct Constraint {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
};

class ConstraintSet {
 public:
  using Evaluator = std::function<ConstraintEval(const Vector&)>;
  using ValueEvaluator = std::function<Vector(const Vector&)>;

  ConstraintSet(int dim, int count, Evaluator evaluator, ValueEvaluator values = {},
                std::optional<Box> box = std::nullopt)
      : dim_(dim),
        count_(count),
        evaluator_(std::move(evaluator)),
        values_(std::move(values)),
        box_(std::move(box)) {
    if (dim_ < 1 || count_ < 1) throw InvalidInput("ConstraintSet: need n >= 1 and N >= 1");
    if (!evaluator_) throw InvalidInput("ConstraintSet: evaluator is empty");
    if (box_ && (!box_->valid() || box_->dim() != dim_)) {
      throw InvalidInput("ConstraintSet: bounding box malformed or wrong dimension");
    }
  }

  static ConstraintSet from_constraints(int dim, std::vector<Constraint> constraints,
                                        std::optional<Box> box = std::nullopt) {
    const int count = static_cast<int>(constraints.size());
    auto shared = std::make_shared<const std::vector<Constraint>>(std::move(constraints));
    Evaluator eval = [shared, dim](const Vector& x) {
      ConstraintEval out;
      const auto n = static_cast<Eigen::Index>(shared->size());
      out.values.resize(n);
      out.gradients.resize(n, dim);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& c = (*shared)[static_cast<std::size_t>(i)];
        out.values[i] = c.value(x);
        out.gradients.row(i) = c.gradient(x).transpose();
      }
      return out;
    };
    ValueEvaluator vals = [shared](const Vector& x) {
      Vector v(static_cast<Eigen::Index>(shared->size()));
      for (std::size_t i = 0; i < shared->size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = (*shared)[i].value(x);
      }
      return v;
    };
    return ConstraintSet(dim, count, std::move(eval), std::move(vals), std::move(box));
  }

  int dim() const { return dim_; }
  int count() const { return count_; }
  bool compact() const { return box_.has_value(); }
  const std::optional<Box>& bounding_box() const { return box_; }

  ConstraintSet with_box(Box box) const {
    return ConstraintSet(dim_, count_, evaluator_, values_, std::move(box));
  }

  ConstraintEval evaluate(const Vector& x) const {
    check_state(x);
    ConstraintEval out = evaluator_(x);
    if (out.values.size() != count_ || out.gradients.rows() != count_ ||
        out.gradients.cols() != dim_) {
      throw InvalidInput("ConstraintSet: evaluator returned wrong shape");
    }
    if (!out.values.allFinite() || !out.gradients.allFinite()) {
      throw InvalidInput("ConstraintSet: evaluator returned non-finite values");
    }
    return out;
  }

  /// Values only; uses the cheaper value path when one was supplied.
  Vector values(const Vector& x) const {
    if (!values_) return evaluate(x).values;
    check_state(x);
    Vector v = values_(x);
    if (v.size() != count_ || !v.allFinite()) {
      throw InvalidInput("ConstraintSet: value evaluator returned bad output");
    }
    return v;
  }

  double hard_min(const Vector& x) const { return values(x).minCoeff(); }

  double soft_min(const Vector& x, double theta) const {
    return softmin_value(values(x), theta);
  }

 private:
  void check_state(const Vector& x) const {
    if (x.size() != dim_) throw InvalidInput("ConstraintSet: state has wrong dimension");
    if (!x.allFinite()) throw InvalidInput("ConstraintSet: state is not finite");
  }

  int dim_;
  int count_;
  Evaluator evaluator_;
  ValueEvaluator values_;
  std::optional<Box> box_;
};

struct TubeSpec {
  double epsilon = 0.0;
  double density = 0.0;
  std::uint64_t seed = 0;
  std::vector<Vector> samples;
  std::size_t rejection_count = 0;      // samples[0, rejection_count) came from rejection
  std::vector<std::size_t> active_hits;  // per constraint, samples where it attains the min
};

struct CompactBounds {
  double M = 0.0;
  double r = 0.0;
  double d = kInf;
  double epsilon = 0.0;
  std::size_t n_samples = 0;
  std::optional<double> tolerance;  // nullopt: default relative tolerance

  Vector r_witness;
  std::size_t r_constraint = 0;
  Vector d_witness;

  bool d_infinite() const { return std::isinf(d); }
};

namespace detail {

inline Vector uniform_in_box(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector x(box.dim());
  for (int k = 0; k < box.dim(); ++k) {
    x[k] = box.lower[k] + unit(rng) * (box.upper[k] - box.lower[k]);
  }
  return x;
}

inline Vector random_direction(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(dim);
  do {
    for (int k = 0; k < dim; ++k) v[k] = gauss(rng);
  } while (v.norm() < 1e-12);
  return v.normalized();
}

inline double tolerance_for(const std::optional<double>& tol, double hmin) {
  return tol ? *tol : default_activity_tolerance(hmin);
}

/// Walks from an interior origin along dir until f < 0 and bisects the
/// crossing. Returns the last point with f >= 0 once f there is <= accept,
/// or nullopt if the ray leaves the box first.
template <typename Fn>
std::optional<Vector> bisect_ray(const Fn& f, const Box& box, const Vector& origin,
                                 const Vector& dir, double step, double accept,
                                 int max_bisections = 200) {
  double t_in = 0.0;
  double f_in = f(origin);
  if (f_in < 0.0) return std::nullopt;
  if (f_in <= accept) return origin;
  double t_out = -1.0;
  for (double t = step;; t += step) {
    const Vector x = origin + t * dir;
    if (!box.contains(x)) {
      // Clamp the last probe to the box face before giving up.
      double t_face = kInf;
      for (int k = 0; k < box.dim(); ++k) {
        if (dir[k] > 0) t_face = std::min(t_face, (box.upper[k] - origin[k]) / dir[k]);
        if (dir[k] < 0) t_face = std::min(t_face, (box.lower[k] - origin[k]) / dir[k]);
      }
      if (t_face > t_in && f(origin + t_face * dir) < 0.0) {
        t_out = t_face;
        break;
      }
      return std::nullopt;
    }
    const double fx = f(x);
    if (fx < 0.0) {
      t_out = t;
      break;
    }
    t_in = t;
    f_in = fx;
    if (f_in <= accept) return x;
  }
  for (int it = 0; it < max_bisections; ++it) {
    if (f_in <= accept) return Vector(origin + t_in * dir);
    const double t_mid = 0.5 * (t_in + t_out);
    if (t_mid <= t_in || t_mid >= t_out) break;
    const double fm = f(Vector(origin + t_mid * dir));
    if (fm >= 0.0) {
      t_in = t_mid;
      f_in = fm;
    } else {
      t_out = t_mid;
    }
  }
  if (f_in <= accept) return Vector(origin + t_in * dir);
  return std::nullopt;
}

}  // namespace detail

/// Samples the tube {0 <= min_i h_i <= epsilon} inside the bounding box:
/// uniform rejection candidates (max(2, ceil(density * width)) per axis,
/// multiplied out) plus ray bisection from interior candidates to place
/// points with min_i h_i in [0, epsilon/10]. Deterministic for a seed.
inline TubeSpec sample_tube(const ConstraintSet& cs, double epsilon, double density,
                            std::uint64_t seed) {
  if (!cs.compact()) throw InvalidInput("sample_tube: constraint set has no bounding box");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw DomainError("sample_tube: epsilon must be positive");
  }
  if (!(density > 0.0) || !std::isfinite(density)) {
    throw DomainError("sample_tube: density must be positive");
  }
  const Box& box = *cs.bounding_box();

  std::size_t n_candidates = 1;
  for (int k = 0; k < box.dim(); ++k) {
    const double per_axis = std::ceil(density * (box.upper[k] - box.lower[k]));
    n_candidates *= static_cast<std::size_t>(std::max(2.0, per_axis));
  }

  std::mt19937_64 rng(seed);
  std::vector<Vector> candidates(n_candidates);
  for (auto& c : candidates) c = detail::uniform_in_box(box, rng);

  std::vector<double> hmin(n_candidates);
  detail::parallel_for(n_candidates,
                       [&](std::size_t i) { hmin[i] = cs.hard_min(candidates[i]); });

  TubeSpec tube;
  tube.epsilon = epsilon;
  tube.density = density;
  tube.seed = seed;
  std::vector<std::size_t> interior;
  for (std::size_t i = 0; i < n_candidates; ++i) {
    if (hmin[i] >= 0.0 && hmin[i] <= epsilon) tube.samples.push_back(candidates[i]);
    if (hmin[i] > 0.0) interior.push_back(i);
  }
  tube.rejection_count = tube.samples.size();

  if (!interior.empty()) {
    const std::size_t n_rays = std::max<std::size_t>(32, n_candidates / 8);
    std::uniform_int_distribution<std::size_t> pick(0, interior.size() - 1);
    std::vector<Vector> origins(n_rays);
    std::vector<Vector> dirs(n_rays);
    for (std::size_t k = 0; k < n_rays; ++k) {
      origins[k] = candidates[interior[pick(rng)]];
      dirs[k] = detail::random_direction(box.dim(), rng);
    }
    const double step = box.diagonal() / 64.0;
    const double accept = epsilon / 10.0;
    auto f = [&cs](const Vector& x) { return cs.hard_min(x); };
    std::vector<std::optional<Vector>> hits(n_rays);
    detail::parallel_for(n_rays, [&](std::size_t k) {
      hits[k] = detail::bisect_ray(f, box, origins[k], dirs[k], step, accept);
    });
    for (auto& h : hits) {
      if (h) tube.samples.push_back(std::move(*h));
    }
  }

  if (tube.samples.empty()) {
    throw EmptyTube(
        "sample_tube: no states with 0 <= min h <= epsilon found; the safe set may be "
        "empty or the bounding box may not contain it");
  }

  tube.active_hits.assign(static_cast<std::size_t>(cs.count()), 0);
  for (const auto& x : tube.samples) {
    const Vector v = cs.values(x);
    const auto part = partition(v);
    for (std::size_t i : part.active) ++tube.active_hits[i];
  }
  return tube;
}

/// Sampled tube bounds. Throws NotStrictlySafe if some active constraint has
/// a nonpositive Lie derivative at a sample.
inline CompactBounds estimate_bounds(const ConstraintSet& cs, const VectorField& field,
                                     const TubeSpec& tube,
                                     std::optional<double> tolerance = std::nullopt) {
  if (tube.samples.empty()) throw InvalidInput("estimate_bounds: tube has no samples");
  if (tolerance && (!(*tolerance >= 0.0) || !std::isfinite(*tolerance))) {
    throw DomainError("estimate_bounds: tolerance must be finite and nonnegative");
  }
  const std::size_t n = tube.samples.size();

  struct PerSample {
    double max_abs_lie;
    double min_active_lie;
    std::size_t argmin_active;
    double min_inactive_gap;
  };
  std::vector<PerSample> per(n);
  detail::parallel_for(n, [&](std::size_t s) {
    const Vector& x = tube.samples[s];
    const ConstraintEval ev = cs.evaluate(x);
    const Vector fx = field(x);
    if (fx.size() != cs.dim() || !fx.allFinite()) {
      throw InvalidInput("estimate_bounds: vector field returned bad output");
    }
    const Vector lie = ev.lie(fx);
    const auto part = partition(ev.values, detail::tolerance_for(tolerance, ev.min()));
    PerSample p{lie.cwiseAbs().maxCoeff(), kInf, 0, kInf};
    for (std::size_t i : part.active) {
      if (lie[static_cast<Eigen::Index>(i)] < p.min_active_lie) {
        p.min_active_lie = lie[static_cast<Eigen::Index>(i)];
        p.argmin_active = i;
      }
    }
    for (std::size_t j : part.inactive) {
      p.min_inactive_gap = std::min(p.min_inactive_gap, part.gaps[static_cast<Eigen::Index>(j)]);
    }
    per[s] = p;
  });

  CompactBounds b;
  b.epsilon = tube.epsilon;
  b.n_samples = n;
  b.tolerance = tolerance;
  b.r = kInf;
  b.d = kInf;
  std::size_t r_at = 0;
  std::size_t d_at = n;
  for (std::size_t s = 0; s < n; ++s) {
    b.M = std::max(b.M, per[s].max_abs_lie);
    if (per[s].min_active_lie < b.r) {
      b.r = per[s].min_active_lie;
      r_at = s;
      b.r_constraint = per[s].argmin_active;
    }
    if (per[s].min_inactive_gap < b.d) {
      b.d = per[s].min_inactive_gap;
      d_at = s;
    }
  }
  b.r_witness = tube.samples[r_at];
  if (d_at < n) b.d_witness = tube.samples[d_at];

  if (!(b.r > 0.0)) {
    std::ostringstream msg;
    msg << "estimate_bounds: not strictly safe: constraint " << b.r_constraint
        << " has Lie derivative " << b.r << " at state [" << b.r_witness.transpose() << "]";
    throw NotStrictlySafe(msg.str(), b.r_witness, b.r_constraint, b.r);
  }
  return b;
}

struct TubeBounds {
  TubeSpec tube;
  CompactBounds bounds;
  int halvings = 0;
};

/// Halves epsilon until the sampled tube is strictly safe (r > 0), up to
/// max_halvings times; rethrows the last NotStrictlySafe otherwise.
inline TubeBounds shrink_epsilon_until_safe(const ConstraintSet& cs, const VectorField& field,
                                            double epsilon, double density,
                                            std::uint64_t seed,
                                            std::optional<double> tolerance = std::nullopt,
                                            int max_halvings = 8) {
  for (int k = 0;; ++k) {
    TubeSpec tube = sample_tube(cs, epsilon, density, seed);
    try {
      CompactBounds b = estimate_bounds(cs, field, tube, tolerance);
      return {std::move(tube), std::move(b), k};
    } catch (const NotStrictlySafe&) {
      if (k >= max_halvings) throw;
    }
    epsilon *= 0.5;
  }
}

struct MfcqSampleResult {
  std::size_t sample = 0;
  bool passed = false;
  Vector direction;                           // witness v when passed
  std::pair<std::size_t, std::size_t> worst_pair{0, 0};  // most opposed active pair on failure
};

struct MfcqReport {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::vector<MfcqSampleResult> results;

  bool passed() const { return failures == 0; }
};

/// Common ascent direction for a set of gradients: sum of normalized
/// gradients first, then cyclic projections onto {v : g_i^T v >= 1}.
inline std::optional<Vector> mfcq_direction(const std::vector<Vector>& grads,
                                            int max_sweeps = 200) {
  if (grads.empty()) return std::nullopt;
  std::vector<Vector> unit;
  unit.reserve(grads.size());
  for (const auto& g : grads) {
    const double nrm = g.norm();
    if (!(nrm > 0.0)) return std::nullopt;
    unit.push_back(g / nrm);
  }
  auto ok = [&](const Vector& v) {
    return std::all_of(unit.begin(), unit.end(), [&](const Vector& g) { return g.dot(v) > 0.0; });
  };
  Vector v = Vector::Zero(unit.front().size());
  for (const auto& g : unit) v += g;
  if (v.norm() > 0.0 && ok(v)) return Vector(v.normalized());
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (const auto& g : unit) {
      const double viol = 1.0 - g.dot(v);
      if (viol > 0.0) v += viol * g;
    }
    if (v.norm() > 0.0 && ok(v)) return Vector(v.normalized());
  }
  return std::nullopt;
}

/// MFCQ at tube samples with min h <= boundary_band (default epsilon/10).
inline MfcqReport check_mfcq(const ConstraintSet& cs, const TubeSpec& tube,
                             std::optional<double> tolerance = std::nullopt,
                             std::optional<double> boundary_band = std::nullopt) {
  const double band = boundary_band.value_or(tube.epsilon / 10.0);
  const std::size_t n = tube.samples.size();
  std::vector<std::optional<MfcqSampleResult>> slots(n);
  detail::parallel_for(n, [&](std::size_t s) {
    const ConstraintEval ev = cs.evaluate(tube.samples[s]);
    if (ev.min() > band) return;
    const auto part = partition(ev.values, detail::tolerance_for(tolerance, ev.min()));
    std::vector<Vector> grads;
    for (std::size_t i : part.active) {
      grads.emplace_back(ev.gradients.row(static_cast<Eigen::Index>(i)).transpose());
    }
    MfcqSampleResult res;
    res.sample = s;
    if (auto v = mfcq_direction(grads)) {
      res.passed = true;
      res.direction = *v;
    } else {
      double worst = kInf;
      for (std::size_t a = 0; a < part.active.size(); ++a) {
        for (std::size_t b = a; b < part.active.size(); ++b) {
          const double na = grads[a].norm();
          const double nb = grads[b].norm();
          const double c = (na > 0 && nb > 0) ? grads[a].dot(grads[b]) / (na * nb) : -kInf;
          if (c < worst) {
            worst = c;
            res.worst_pair = {part.active[a], part.active[b]};
          }
        }
      }
    }
    slots[s] = std::move(res);
  });
  MfcqReport report;
  for (auto& slot : slots) {
    if (!slot) continue;
    ++report.checked;
    if (!slot->passed) ++report.failures;
    report.results.push_back(std::move(*slot));
  }
  return report;
}

}  // namespace softcbf
