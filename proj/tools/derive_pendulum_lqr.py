"""Derives the frozen LQR constants used by the pendulum-backup benchmark.

Linearization of  phi'' = sin(phi) + u  about the upright equilibrium:
    A = [[0, 1], [1, 0]],  B = [[0], [1]],  Q = I,  R = 1.

The continuous-time Riccati solution has the closed form
    P = [[2 + sqrt2, 1 + sqrt2], [1 + sqrt2, 1 + sqrt2]],  K = [1 + sqrt2, 1 + sqrt2],
with closed-loop poles -1 and -sqrt2. Run this script to reprint the numbers
stored in include/softcbf/systems.hpp.
"""

import numpy as np
import scipy.linalg as sl

A = np.array([[0.0, 1.0], [1.0, 0.0]])
B = np.array([[0.0], [1.0]])
Q = np.eye(2)
R = np.eye(1)

P = sl.solve_continuous_are(A, B, Q, R)
K = np.linalg.solve(R, B.T @ P)
s2 = np.sqrt(2.0)
assert np.allclose(P, [[2 + s2, 1 + s2], [1 + s2, 1 + s2]], atol=1e-12)
assert np.allclose(K, [[1 + s2, 1 + s2]], atol=1e-12)

print("P =", [[f"{v:.17g}" for v in row] for row in P])
print("K =", [f"{v:.17g}" for v in K[0]])
print("closed-loop poles:", np.linalg.eigvals(A - B @ K))
