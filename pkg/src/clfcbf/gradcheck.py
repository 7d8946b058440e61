"""Finite-difference verification of the collinearity-measure gradients."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg
from .shaped import ShapedState, collinearity_measure, grad_D

FD_STEP = 1e-6
TOLERANCE = 1e-5
# systems whose D grows polynomially fast get a smaller box so that central
# differences with a fixed step stay well conditioned
SAMPLE_BOX = {"synthetic": 2.0}
DEFAULT_BOX = 6.0


def fd_grad_D(sys, V_r, h, s, step=FD_STEP):
    """Central differences of D in x and along Q -> Q exp(skew(d))."""
    n = sys.n
    k = linalg.so_dim(n)
    gx = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        gx[i] = (collinearity_measure(sys, V_r, h, ShapedState(s.x + e, s.Q))
                 - collinearity_measure(sys, V_r, h, ShapedState(s.x - e, s.Q))) / (2.0 * step)
    gq = np.empty(k)
    for i in range(k):
        d = np.zeros(k)
        d[i] = step
        gq[i] = (collinearity_measure(sys, V_r, h, ShapedState(s.x, s.Q @ linalg.rotation_exp(d)))
                 - collinearity_measure(sys, V_r, h, ShapedState(s.x, s.Q @ linalg.rotation_exp(-d)))) / (2.0 * step)
    return gx, gq


def rel_error(analytic, numeric, floor=1e-8):
    """||a - n|| / max(||a||, floor); the floor only matters for vanishing gradients."""
    return float(np.linalg.norm(analytic - numeric)) / max(float(np.linalg.norm(analytic)), floor)


def sample_states(sys, h, rng, count, box=None):
    """Random (x, Q) with x in [-box, box]^n outside the obstacle and away from 0."""
    if box is None:
        box = SAMPLE_BOX.get(sys.name, DEFAULT_BOX)
    k = linalg.so_dim(sys.n)
    out = []
    while len(out) < count:
        x = rng.uniform(-box, box, sys.n)
        if h.value(x) < 0.0 or float(np.linalg.norm(x)) < 1e-3:
            continue
        Q = linalg.rotation_exp(rng.uniform(-math.pi, math.pi, k))
        out.append(ShapedState(x, Q))
    return out


@dataclass(frozen=True)
class GradcheckResult:
    system: str
    samples: int
    max_rel_x: float
    max_rel_q: float
    worst: Optional[ShapedState]

    @property
    def max_rel(self):
        return max(self.max_rel_x, self.max_rel_q)

    @property
    def passed(self):
        return self.max_rel <= TOLERANCE


def run_gradcheck(sys, V_r, h, samples, seed, box=None, corrupt=False):
    """Worst relative error of grad_D over seeded random states.

    ``corrupt`` perturbs the analytic x-gradient by 0.1 percent; it exists so
    the checker can be shown to fail when the gradient is wrong.
    """
    rng = np.random.default_rng(seed)
    worst_x = worst_q = 0.0
    worst = None
    worst_val = -1.0
    for s in sample_states(sys, h, rng, samples, box):
        gx, gq = grad_D(sys, V_r, h, s)
        if corrupt:
            gx = gx * (1.0 + 1e-3)
        fx, fq = fd_grad_D(sys, V_r, h, s)
        ex, eq = rel_error(gx, fx), rel_error(gq, fq)
        worst_x, worst_q = max(worst_x, ex), max(worst_q, eq)
        if max(ex, eq) > worst_val:
            worst_val, worst = max(ex, eq), s
    return GradcheckResult(sys.name, samples, worst_x, worst_q, worst)
