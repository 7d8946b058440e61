"""Small dense linear algebra on R^n and SO(n) for n in {2, 3}.

Everything here is a pure function of numpy arrays. The hat map follows the
usual conventions: for n = 2 the scalar w maps to [[0, -w], [w, 0]], for n = 3
the vector w maps to the cross-product matrix.
"""

import math

import numpy as np

from .errors import RetractionError

ORTHO_TOL = 1e-9


def so_dim(n):
    """Dimension n(n-1)/2 of the Lie algebra so(n)."""
    if n not in (2, 3):
        raise ValueError(f"only n in {{2, 3}} is supported, got n={n}")
    return n * (n - 1) // 2


def scaled_projection(v):
    """Return ||v||^2 I - v v^T, which annihilates v and scales v-perp by ||v||^2."""
    v = np.asarray(v, dtype=float)
    return np.dot(v, v) * np.eye(v.shape[0]) - np.outer(v, v)


def skew(omega, n=None):
    """Hat map from R^{n(n-1)/2} to so(n)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if n is None:
        n = 2 if omega.shape[0] == 1 else 3
    if n == 2:
        (w,) = omega
        return np.array([[0.0, -w], [w, 0.0]])
    if n == 3:
        a, b, c = omega
        return np.array([[0.0, -c, b], [c, 0.0, -a], [-b, a, 0.0]])
    raise ValueError(f"only n in {{2, 3}} is supported, got n={n}")


def o_n(x):
    """Matrix O_n(x) with skew(omega) @ x == O_n(x) @ omega for every omega."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n == 2:
        return np.array([[-x[1]], [x[0]]])
    if n == 3:
        return -skew(x, 3)
    raise ValueError(f"only n in {{2, 3}} is supported, got n={n}")


def orthogonality_drift(Q):
    """Frobenius norm of Q^T Q - I."""
    Q = np.asarray(Q, dtype=float)
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[0])))


def rotation_retract(Q):
    """Project a near-orthogonal matrix onto SO(n) via its polar factor.

    The polar factor U V^T of the SVD is the Frobenius-nearest orthogonal
    matrix. A negative determinant means the integrator has crossed into the
    reflection component, which we treat as a hard failure.
    """
    Q = np.asarray(Q, dtype=float)
    if not np.all(np.isfinite(Q)):
        raise RetractionError("non-finite rotation matrix")
    U, _, Vt = np.linalg.svd(Q)
    R = U @ Vt
    if np.linalg.det(R) <= 0.0:
        raise RetractionError("polar factor is a reflection (det <= 0)")
    return R


def rotation_exp(omega, dt=1.0):
    """exp(dt * skew(omega)), in closed form (planar rotation or Rodrigues)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.shape[0] == 1:
        th = dt * omega[0]
        c, s = math.cos(th), math.sin(th)
        return np.array([[c, -s], [s, c]])
    if omega.shape[0] != 3:
        raise ValueError("omega must have 1 (n=2) or 3 (n=3) entries")
    phi = dt * omega
    th = float(np.linalg.norm(phi))
    K = skew(phi, 3)
    if th < 1e-8:
        # second-order Taylor; the truncation error is below double precision
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (math.sin(th) / th) * K + ((1.0 - math.cos(th)) / th**2) * (K @ K)
