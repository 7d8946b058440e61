"""Control-affine systems, quadratic CLFs, circular-obstacle CBFs and class-K gains."""

from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .errors import SingularityError

_SINGULAR_RADIUS = 1e-12


@dataclass(frozen=True)
class ControlAffineSystem:
    """Dynamics xdot = f(x) + g(x) u together with their derivatives.

    ``jac_g_cols(x)`` returns one n-by-n Jacobian per column of g(x).
    ``drift_free`` marks systems with f identically zero, which lets
    analysis code use the simpler collinearity test for integrators.
    """

    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    jac_f: Callable[[np.ndarray], np.ndarray]
    jac_g_cols: Callable[[np.ndarray], List[np.ndarray]]
    drift_free: bool = False
    constant_g: bool = False

    def G(self, x):
        gx = self.g(x)
        return gx @ gx.T

    def vector_field(self, x, u):
        return self.f(x) + self.g(x) @ u


@dataclass(frozen=True)
class QuadraticClf:
    """V(x) = 1/2 sum_i lambda_i x_i^2."""

    lambdas: tuple

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambdas)
        if not lam or min(lam) <= 0.0:
            raise ValueError(f"CLF weights must be positive, got {lam}")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "_lam", np.array(lam))

    @property
    def n(self):
        return len(self.lambdas)

    @property
    def radial(self):
        return len(set(self.lambdas)) == 1

    @property
    def hessian(self):
        return np.diag(self._lam)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(np.dot(self._lam * x, x))

    def gradient(self, x):
        return self._lam * np.asarray(x, dtype=float)

    def grad_hess(self, x):
        return self.gradient(x), self.hessian


@dataclass(frozen=True)
class CircularObstacleCbf:
    """h(x) = 1/2 ||x - center||^2 - 1/2 radius^2; the safe set is h >= 0."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "_c", np.array(self.center))

    @property
    def n(self):
        return len(self.center)

    def value(self, x):
        d = np.asarray(x, dtype=float) - self._c
        return 0.5 * float(np.dot(d, d)) - 0.5 * self.radius**2

    def gradient(self, x):
        return np.asarray(x, dtype=float) - self._c

    @property
    def hessian(self):
        return np.eye(self.n)

    def value_grad_hess(self, x):
        d = np.asarray(x, dtype=float) - self._c
        return 0.5 * float(np.dot(d, d)) - 0.5 * self.radius**2, d, np.eye(self.n)

    def boundary_point(self, theta):
        return self._c + self.radius * np.array([np.cos(theta), np.sin(theta)])


@dataclass(frozen=True)
class ClassKappa:
    """Linear (extended) class-K function s -> gain * s."""

    gain: float = 1.0
    extended: bool = True

    def __post_init__(self):
        if not self.gain > 0.0:
            raise ValueError(f"class-K gain must be positive, got {self.gain}")

    def __call__(self, s):
        if not self.extended and s < 0.0:
            raise ValueError("non-extended class-K function evaluated at a negative argument")
        return self.gain * s

    def derivative(self, s=0.0):
        return self.gain


def clf_value(V, x):
    return V.value(x)


def clf_grad_hess(V, x):
    return V.grad_hess(x)


def cbf_value_grad_hess(h, x):
    return h.value_grad_hess(x)


def _ones_col(n):
    return np.ones(n)


def _identity_g(n):
    eye = np.eye(n)
    zeros = [np.zeros((n, n)) for _ in range(n)]
    return (lambda x: eye), (lambda x: zeros)


def _norm_checked(x):
    r = float(np.linalg.norm(x))
    if r < _SINGULAR_RADIUS:
        raise SingularityError("drift Jacobian is undefined at the origin (||x|| is not differentiable)")
    return r


def builtin_system(name, n=2):
    """One of the benchmark systems: 'integrator', 'f1', 'f2', or 'synthetic'.

    All use g(x) = I except 'synthetic', which pairs the f1 drift with
    g(x) = diag(1 + x1^2, 1) so that input-gain derivatives are nonzero.
    """
    if name == "integrator":
        g, jg = _identity_g(n)
        zero = np.zeros(n)
        zjac = np.zeros((n, n))
        return ControlAffineSystem(
            name, n, n,
            f=lambda x: zero.copy(),
            g=g,
            jac_f=lambda x: zjac.copy(),
            jac_g_cols=jg,
            drift_free=True,
            constant_g=True,
        )
    if n != 2:
        raise ValueError(f"system {name!r} is defined for n = 2 only")
    ones = _ones_col(2)
    if name == "f1":
        g, jg = _identity_g(2)

        def f(x):
            return 0.1 * float(np.linalg.norm(x)) * ones

        def jac_f(x):
            r = _norm_checked(x)
            return 0.1 * np.outer(ones, np.asarray(x, dtype=float) / r)

        return ControlAffineSystem("f1", 2, 2, f, g, jac_f, jg, constant_g=True)
    if name == "f2":
        g, jg = _identity_g(2)

        def f(x):
            x = np.asarray(x, dtype=float)
            return 0.1 * (float(np.linalg.norm(x)) - float(np.dot(x, x))) * ones

        def jac_f(x):
            x = np.asarray(x, dtype=float)
            r = _norm_checked(x)
            return 0.1 * np.outer(ones, x / r - 2.0 * x)

        return ControlAffineSystem("f2", 2, 2, f, g, jac_f, jg, constant_g=True)
    if name == "synthetic":
        def f(x):
            return 0.1 * float(np.linalg.norm(x)) * ones

        def jac_f(x):
            r = _norm_checked(x)
            return 0.1 * np.outer(ones, np.asarray(x, dtype=float) / r)

        def g(x):
            return np.diag([1.0 + x[0] ** 2, 1.0])

        def jac_g_cols(x):
            d0 = np.zeros((2, 2))
            d0[0, 0] = 2.0 * x[0]
            return [d0, np.zeros((2, 2))]

        return ControlAffineSystem("synthetic", 2, 2, f, g, jac_f, jac_g_cols)
    raise ValueError(f"unknown system {name!r}")


SYSTEM_NAMES = ("integrator", "f1", "f2", "synthetic")
