#pragma once

#include "softcbf/types.hpp"

namespace softcbf::detail {

/// Classic RK4 step for xdot = f(x).
template <typename Field>
Vector rk4_step(const Field& f, const Vector& x, double h) {
  const Vector k1 = f(x);
  const Vector k2 = f(Vector(x + 0.5 * h * k1));
  const Vector k3 = f(Vector(x + 0.5 * h * k2));
  const Vector k4 = f(Vector(x + h * k3));
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Central-difference Jacobian with step 1e-6 (1 + |x|).
template <typename Field>
Matrix fd_jacobian(const Field& f, const Vector& x) {
  const auto n = x.size();
  const double step = 1e-6 * (1.0 + x.norm());
  Matrix J(n, n);
  Vector xp = x;
  Vector xm = x;
  for (Eigen::Index k = 0; k < n; ++k) {
    xp[k] = x[k] + step;
    xm[k] = x[k] - step;
    J.col(k) = (f(xp) - f(xm)) / (2.0 * step);
    xp[k] = x[k];
    xm[k] = x[k];
  }
  return J;
}

}  // namespace softcbf::detail
