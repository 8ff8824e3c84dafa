#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace softcbf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Closed-loop or open-loop vector field x -> xdot.
using VectorField = std::function<Vector(const Vector&)>;
/// State-feedback law x -> u.
using Controller = std::function<Vector(const Vector&)>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite numbers, mismatched dimensions, malformed configuration.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Parameter outside the mathematical domain (e.g. theta <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Tube sampling found no state with 0 <= min_i h_i <= epsilon.
class EmptyTube : public Error {
 public:
  using Error::Error;
};

/// Certificate inputs that cannot yield a threshold (r <= 0, epsilon <= 0).
class InvalidCertificate : public Error {
 public:
  using Error::Error;
};

/// A sampled state where an active constraint has a nonpositive Lie
/// derivative under the closed loop.
class NotStrictlySafe : public Error {
 public:
  NotStrictlySafe(std::string what, Vector witness, std::size_t constraint,
                  double lie_value)
      : Error(std::move(what)),
        witness_(std::move(witness)),
        constraint_(constraint),
        lie_value_(lie_value) {}

  const Vector& witness() const noexcept { return witness_; }
  std::size_t constraint() const noexcept { return constraint_; }
  double lie_value() const noexcept { return lie_value_; }

 private:
  Vector witness_;
  std::size_t constraint_;
  double lie_value_;
};

/// Integration produced a non-finite state.
class FlowBlowUp : public Error {
 public:
  FlowBlowUp(std::string what, double time) : Error(std::move(what)), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Axis-aligned box [lower, upper].
struct Box {
  Vector lower;
  Vector upper;

  int dim() const { return static_cast<int>(lower.size()); }

  bool valid() const {
    return lower.size() == upper.size() && lower.size() > 0 && lower.allFinite() &&
           upper.allFinite() && (lower.array() < upper.array()).all();
  }

  bool contains(const Vector& x) const {
    return x.size() == lower.size() && (x.array() >= lower.array()).all() &&
           (x.array() <= upper.array()).all();
  }

  Vector clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

  double volume() const { return (upper - lower).prod(); }
  double diagonal() const { return (upper - lower).norm(); }
};

}  // namespace softcbf
