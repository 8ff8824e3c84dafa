#pragma once

// Log-sum-exp soft-min of a finite family of barrier values:
//
//   h_theta = -(1/theta) log sum_i exp(-theta h_i)
//
// together with its weights, gradient and the active/inactive split of the
// Lie derivative used by the threshold certificates.

#include "softcbf/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace softcbf {

namespace detail {

inline void require_values(const Vector& values, const char* where) {
  if (values.size() < 1) {
    throw InvalidInput(std::string(where) + ": at least one constraint value required");
  }
  if (!values.allFinite()) {
    throw InvalidInput(std::string(where) + ": constraint values must be finite");
  }
}

inline void require_theta(double theta, const char* where) {
  if (!std::isfinite(theta)) {
    throw InvalidInput(std::string(where) + ": theta must be finite");
  }
  if (!(theta > 0.0)) {
    throw DomainError(std::string(where) + ": theta must be positive");
  }
}

}  // namespace detail

struct SoftMinResult {
  double value = 0.0;
  Vector weights;
  double theta = 0.0;
};

/// Soft-min value. Shifted by the hard minimum so the exponentials never
/// overflow; the result satisfies min - log(N)/theta <= value <= min.
inline double softmin_value(const Vector& values, double theta) {
  detail::require_values(values, "softmin_value");
  detail::require_theta(theta, "softmin_value");
  if (values.size() == 1) return values[0];
  const double hmin = values.minCoeff();
  // The minimizing term contributes exactly 1, so sum >= 1 and log(sum) >= 0.
  double sum = 0.0;
  for (double h : values) sum += std::exp(-theta * (h - hmin));
  return hmin - std::log(sum) / theta;
}

/// Normalized weights w_i = exp(-theta h_i) / sum_j exp(-theta h_j).
inline Vector softmin_weights(const Vector& values, double theta) {
  detail::require_values(values, "softmin_weights");
  detail::require_theta(theta, "softmin_weights");
  const auto n = values.size();
  if (n == 1) return Vector::Ones(1);
  const double hmin = values.minCoeff();
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = std::exp(-theta * (values[i] - hmin));
  w /= w.sum();
  return w;
}

inline SoftMinResult softmin(const Vector& values, double theta) {
  return {softmin_value(values, theta), softmin_weights(values, theta), theta};
}

/// Weighted gradient sum_i w_i grad h_i. Row i of `gradients` is grad h_i.
inline Vector softmin_gradient(const Matrix& gradients, const Vector& weights) {
  if (gradients.rows() != weights.size() || gradients.rows() < 1) {
    throw InvalidInput("softmin_gradient: need one gradient row per weight");
  }
  if (!gradients.allFinite() || !weights.allFinite()) {
    throw InvalidInput("softmin_gradient: non-finite input");
  }
  return gradients.transpose() * weights;
}

/// Default activity tolerance relative to the hard minimum.
inline double default_activity_tolerance(double hmin) {
  return 1e-8 * (1.0 + std::abs(hmin));
}

struct ActivePartition {
  std::vector<std::size_t> active;
  std::vector<std::size_t> inactive;
  Vector gaps;  // h_j - min_i h_i for every j
  double tolerance = 0.0;

  bool is_active(std::size_t i) const {
    return std::find(active.begin(), active.end(), i) != active.end();
  }
};

/// Splits indices by gap to the minimum: gap <= tolerance is active.
inline ActivePartition partition(const Vector& values, double tolerance) {
  detail::require_values(values, "partition");
  if (!(tolerance >= 0.0) || !std::isfinite(tolerance)) {
    throw DomainError("partition: tolerance must be finite and nonnegative");
  }
  ActivePartition part;
  part.tolerance = tolerance;
  const double hmin = values.minCoeff();
  part.gaps = values.array() - hmin;
  for (Eigen::Index j = 0; j < values.size(); ++j) {
    auto idx = static_cast<std::size_t>(j);
    if (part.gaps[j] <= tolerance) {
      part.active.push_back(idx);
    } else {
      part.inactive.push_back(idx);
    }
  }
  return part;
}

inline ActivePartition partition(const Vector& values) {
  detail::require_values(values, "partition");
  return partition(values, default_activity_tolerance(values.minCoeff()));
}

struct LieSplit {
  double active_part = 0.0;
  double inactive_part = 0.0;
  double total() const { return active_part + inactive_part; }
};

/// Weighted Lie derivative split into active and inactive contributions.
inline LieSplit lie_decomposition(const Vector& lie_values, const Vector& weights,
                                  const ActivePartition& part) {
  const auto n = lie_values.size();
  if (weights.size() != n || part.gaps.size() != n ||
      part.active.size() + part.inactive.size() != static_cast<std::size_t>(n)) {
    throw InvalidInput("lie_decomposition: length mismatch");
  }
  LieSplit split;
  for (std::size_t i : part.active) split.active_part += weights[i] * lie_values[i];
  for (std::size_t j : part.inactive) split.inactive_part += weights[j] * lie_values[j];
  return split;
}

}  // namespace softcbf
