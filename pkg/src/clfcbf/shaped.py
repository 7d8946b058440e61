"""Lyapunov-shaping QP controller.

A reference quadratic CLF V_r is rotated by an auxiliary state Q in SO(n),
V(x, Q) = V_r(Q x), with Qdot = Q skew(omega). A collinearity measure D(x, Q)
vanishes wherever f, G grad V and G grad h line up. The barrier
h_D = sigma(h) (D - eps) keeps D away from zero near the obstacle, and the QP
picks (u, omega, w) subject to CLF, CBF and h_D rows.

Decision vector layout: z = (u[0:m], omega[0:k], w) with k = n(n-1)/2.
Row order: 0 = CLF, 1 = CBF, 2 = h_D.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .models import ClassKappa
from .qp import Constraint, QpProblem, enumerate_active_sets, solve_active_set

SIGMA_KINDS = ("bump", "exp")


@dataclass(frozen=True)
class ShapedGains:
    p: float = 5.0
    q: float = 5.0
    gamma: ClassKappa = field(default_factory=ClassKappa)
    alpha: ClassKappa = field(default_factory=ClassKappa)
    beta: ClassKappa = field(default_factory=ClassKappa)
    epsilon: float = 0.1
    sigma_scale: float = 1.0
    sigma_kind: str = "bump"

    def __post_init__(self):
        for name in ("p", "q", "epsilon", "sigma_scale"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.sigma_kind not in SIGMA_KINDS:
            raise ValueError(f"sigma_kind must be one of {SIGMA_KINDS}, got {self.sigma_kind!r}")


@dataclass(frozen=True)
class ShapedState:
    x: np.ndarray
    Q: np.ndarray

    @classmethod
    def initial(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.eye(x.shape[0]))


@dataclass(frozen=True)
class ShapedControlOutput:
    u: np.ndarray
    omega: np.ndarray
    w: float
    lam1: float
    lam2: float
    lam3: float
    active: tuple

    @property
    def active_mask(self):
        return sum(1 << i for i, a in enumerate(self.active) if a)

    @property
    def case_label(self):
        names = ("clf", "cbf", "hd")
        on = [n for n, a in zip(names, self.active) if a]
        return "+".join(on) if on else "none"


def sigma(h_val, scale=1.0, kind="bump"):
    """Activation weight of the collinearity barrier and its derivative.

    'exp':  exp(-h/scale), positive everywhere.
    'bump': (1 - h/scale)^3 for h < scale and 0 beyond, which is C^2 and
            switches the barrier off away from the obstacle.
    Both satisfy sigma(0) = 1 and vanish as h grows.
    """
    if kind == "exp":
        v = math.exp(-h_val / scale)
        return v, -v / scale
    if kind == "bump":
        if h_val >= scale:
            return 0.0, 0.0
        t = 1.0 - h_val / scale
        return t * t * t, -3.0 * t * t / scale
    raise ValueError(f"unknown sigma kind {kind!r}")


def rotated_clf(V_r, s):
    """Value, x-gradient and omega-row of V(x, Q) = V_r(Q x).

    Vdot = grad_x . (f + g u) + omega_row . omega.
    """
    x, Q = s.x, s.Q
    y = Q @ x
    gy = V_r.gradient(y)
    grad_x = Q.T @ gy
    omega_row = grad_x @ linalg.o_n(x)
    return V_r.value(y), grad_x, omega_row


def rotated_hessian(V_r, Q):
    return Q.T @ V_r.hessian @ Q


def gamma_matrix(sys, v, x):
    """d(G(x) v)/dx for fixed v: sum_i (g_i.v I + g_i v^T) dg_i/dx."""
    n = sys.n
    if sys.constant_g:
        return np.zeros((n, n))
    gx = sys.g(x)
    out = np.zeros((n, n))
    eye = np.eye(n)
    for i, Jg in enumerate(sys.jac_g_cols(x)):
        gi = gx[:, i]
        out += (float(gi @ v) * eye + np.outer(gi, v)) @ Jg
    return out


def _pieces(sys, V_r, h, s):
    x = s.x
    fx = sys.f(x)
    gx = sys.g(x)
    G = gx @ gx.T
    _, dV, _ = rotated_clf(V_r, s)
    hx, dh, _ = h.value_grad_hess(x)
    return fx, gx, G, dV, hx, dh, G @ dV, G @ dh


def collinearity_measure(sys, V_r, h, s):
    """D = 1/2 a^T (P_f + P_b) a with a = G grad V(x, Q), b = G grad h."""
    fx, _, _, _, _, _, a, b = _pieces(sys, V_r, h, s)
    return _measure(fx, a, b)


def _measure(fx, a, b):
    # a^T P_v a = |v|^2 |a|^2 - (v.a)^2
    aa = float(a @ a)
    fa = float(fx @ a)
    ba = float(b @ a)
    return 0.5 * (float(fx @ fx) * aa - fa * fa + float(b @ b) * aa - ba * ba)


def _proj_apply(v, a):
    """P_v a without forming P_v."""
    return float(v @ v) * a - float(v @ a) * v


def _grad_D(sys, V_r, h, x, Q, fx, G, dV, dh, a, b):
    HV = Q.T @ V_r.hessian @ Q
    Pfb_a = _proj_apply(fx, a) + _proj_apply(b, a)
    Pa_b = _proj_apply(a, b)
    Pa_f = _proj_apply(a, fx)
    if sys.constant_g:
        grad_x = HV @ (G @ Pfb_a) + h.hessian @ (G @ Pa_b)
    else:
        grad_x = (
            (HV @ G + gamma_matrix(sys, dV, x).T) @ Pfb_a
            + (h.hessian @ G + gamma_matrix(sys, dh, x).T) @ Pa_b
        )
    if not sys.drift_free:
        grad_x = grad_x + sys.jac_f(x).T @ Pa_f
    dgrad = HV @ linalg.o_n(x) - linalg.o_n(dV)
    grad_Q = dgrad.T @ (G @ Pfb_a)
    return grad_x, grad_Q


def grad_D(sys, V_r, h, s):
    """Gradients of D with respect to x and to a right rotation of Q.

    grad_x = (H_V G + Gamma_{g,grad V}^T)(P_f + P_b) a
           + (H_h G + Gamma_{g,grad h}^T) P_a b + Jf^T P_a f
    grad_Q = (H_V O_n(x) - O_n(grad V))^T G (P_f + P_b) a

    Here a = G grad V, b = G grad h, H_V = Q^T Lambda Q is the x-Hessian of
    the rotated CLF and the Q-gradient is taken along Q -> Q exp(skew(d)).
    """
    fx, _, G, dV, _, dh, a, b = _pieces(sys, V_r, h, s)
    return _grad_D(sys, V_r, h, s.x, s.Q, fx, G, dV, dh, a, b)


def hd_value(sys, V_r, h, s, gains):
    hx = h.value(s.x)
    sg, _ = sigma(hx, gains.sigma_scale, gains.sigma_kind)
    return sg * (collinearity_measure(sys, V_r, h, s) - gains.epsilon)


@dataclass(frozen=True)
class ShapedTerms:
    """Everything the shaped QP and the trajectory log need at one state."""

    V: float
    h: float
    D: float
    hD: float
    A: list
    b: list
    weights: list


def shaped_terms(sys, V_r, h, gains, s):
    x, Q = s.x, s.Q
    m = sys.m
    k = linalg.so_dim(sys.n)
    fx = sys.f(x)
    gx = sys.g(x)
    G = gx @ gx.T
    y = Q @ x
    dV = Q.T @ V_r.gradient(y)
    Vval = V_r.value(y)
    omega_row = dV @ linalg.o_n(x)
    hx, dh, _ = h.value_grad_hess(x)
    a = G @ dV
    bvec = G @ dh
    D = _measure(fx, a, bvec)
    sg, dsg = sigma(hx, gains.sigma_scale, gains.sigma_kind)
    hD = sg * (D - gains.epsilon)
    LgV = dV @ gx
    Lgh = dh @ gx
    LfV = float(dV @ fx)
    Lfh = float(dh @ fx)

    # rows in <= form
    A = [
        LgV.tolist() + omega_row.tolist() + [-1.0],
        (-Lgh).tolist() + [0.0] * (k + 1),
    ]
    b = [-(LfV + gains.gamma(Vval)), Lfh + gains.alpha(hx)]
    if sg != 0.0 or dsg != 0.0:
        gx_D, gq_D = _grad_D(sys, V_r, h, x, Q, fx, G, dV, dh, a, bvec)
        cu = dsg * (D - gains.epsilon) * Lgh + sg * (gx_D @ gx)
        drift = dsg * (D - gains.epsilon) * Lfh + sg * float(gx_D @ fx)
        A.append((-cu).tolist() + (-sg * gq_D).tolist() + [0.0])
        b.append(drift + gains.beta(hD))
    else:
        # barrier switched off: the row reads 0 >= -beta(0) = 0
        A.append([0.0] * (m + k + 1))
        b.append(gains.beta(hD))
    weights = [1.0] * m + [gains.q] * k + [gains.p]
    return ShapedTerms(Vval, hx, D, hD, A, b, weights)


def assemble_shaped(sys, V_r, h, gains, s):
    t = shaped_terms(sys, V_r, h, gains, s)
    labels = ("clf", "cbf", "hd")
    rows = tuple(Constraint(np.array(a), bi, "<=", lab) for a, bi, lab in zip(t.A, t.b, labels))
    return QpProblem(np.array(t.weights), rows)


def _output(sys, z, lam, S):
    m, k = sys.m, linalg.so_dim(sys.n)
    z = np.asarray(z)
    return ShapedControlOutput(
        u=z[:m], omega=z[m:m + k], w=float(z[m + k]),
        lam1=float(lam[0]), lam2=float(lam[1]), lam3=float(lam[2]),
        active=tuple(i in S for i in range(3)),
    )


def solve_shaped(sys, V_r, h, gains, s):
    sol = solve_active_set(assemble_shaped(sys, V_r, h, gains, s))
    S = tuple(i for i, a in enumerate(sol.active) if a)
    return _output(sys, sol.z, sol.multipliers, S)


class ShapedController:
    """Callable wrapper; ``evaluate`` also returns the logged scalars."""

    def __init__(self, sys, V_r, h, gains):
        self.sys, self.V_r, self.h, self.gains = sys, V_r, h, gains

    def evaluate(self, s):
        t = shaped_terms(self.sys, self.V_r, self.h, self.gains, s)
        z, lam, S, _ = enumerate_active_sets(t.A, t.b, t.weights)
        return _output(self.sys, z, lam, S), t

    def __call__(self, s):
        return self.evaluate(s)[0]


def equilibrium_residuals(sys, V_r, h, gains, s, out):
    """Residuals of the shaped closed-loop equilibrium conditions.

    Returns (state residual, rotation residual) where the first is
    f - lam1 G gradV + lam2bar G gradh + lam3 sigma G gradD and the second
    lam1 gradV^T O_n(x) - lam3 sigma grad_Q D; both vanish when
    f + g u = 0 and omega = 0 hold at a KKT point.
    """
    x = s.x
    fx = sys.f(x)
    G = sys.G(x)
    _, dV, _ = rotated_clf(V_r, s)
    hx, dh, _ = h.value_grad_hess(x)
    D = collinearity_measure(sys, V_r, h, s)
    sg, dsg = sigma(hx, gains.sigma_scale, gains.sigma_kind)
    lam2bar = out.lam2 + out.lam3 * dsg * (D - gains.epsilon)
    if sg != 0.0:
        gx_D, gq_D = grad_D(sys, V_r, h, s)
    else:
        gx_D, gq_D = np.zeros(sys.n), np.zeros(linalg.so_dim(sys.n))
    r_state = fx - out.lam1 * (G @ dV) + lam2bar * (G @ dh) + out.lam3 * sg * (G @ gx_D)
    r_rot = out.lam1 * (dV @ linalg.o_n(x)) - out.lam3 * sg * gq_D
    return r_state, r_rot
