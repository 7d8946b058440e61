"""Minimum-norm CLF-CBF QP controller and its closed-form branches.

The decision vector is z = (u, w). Row 0 is the relaxed CLF decrease
condition, row 1 the hard CBF condition.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import FormulaNotApplicable
from .models import ClassKappa
from .qp import Constraint, QpProblem, enumerate_active_sets, solve_active_set

CASE_LABELS = ("none_active", "clf_only", "cbf_only", "both_active")
REGION_LABELS = ("neither", "clf_only", "cbf_only", "both")
TIE_TOL = 1e-9


@dataclass(frozen=True)
class NominalGains:
    p: float = 5.0
    gamma: ClassKappa = field(default_factory=ClassKappa)
    alpha: ClassKappa = field(default_factory=ClassKappa)

    def __post_init__(self):
        if not self.p > 0.0:
            raise ValueError(f"relaxation weight p must be positive, got {self.p}")


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    w: float
    case_label: str
    lam1: float
    lam2: float


@dataclass(frozen=True)
class LieTerms:
    """Scalars and row vectors that every branch formula is built from."""

    V: float
    h: float
    LfV: float
    LgV: np.ndarray
    Lfh: float
    Lgh: np.ndarray
    a: float  # LfV + gamma(V)
    b: float  # Lfh + alpha(h)


def lie_terms(sys, V, h, gains, x):
    x = np.asarray(x, dtype=float)
    fx = sys.f(x)
    gx = sys.g(x)
    Vx = V.value(x)
    dV = V.gradient(x)
    hx, dh, _ = h.value_grad_hess(x)
    LfV = float(dV @ fx)
    Lfh = float(dh @ fx)
    return LieTerms(
        V=Vx, h=hx, LfV=LfV, LgV=dV @ gx, Lfh=Lfh, Lgh=dh @ gx,
        a=LfV + gains.gamma(Vx), b=Lfh + gains.alpha(hx),
    )


def case_label(active):
    clf, cbf = active
    return CASE_LABELS[int(clf) + 2 * int(cbf)]


def assemble_nominal(sys, V, h, gains, x):
    lt = lie_terms(sys, V, h, gains, x)
    clf = Constraint(np.append(lt.LgV, -1.0), -lt.a, "<=", "clf")
    cbf = Constraint(np.append(lt.Lgh, 0.0), -lt.b, ">=", "cbf")
    weights = np.append(np.ones(sys.m), gains.p)
    return QpProblem(weights, (clf, cbf))


def solve_nominal(sys, V, h, gains, x):
    prob = assemble_nominal(sys, V, h, gains, x)
    sol = solve_active_set(prob)
    m = sys.m
    return ControlOutput(
        u=sol.z[:m], w=float(sol.z[m]), case_label=case_label(sol.active),
        lam1=float(sol.multipliers[0]), lam2=float(sol.multipliers[1]),
    )


def closed_form_case2(sys, V, gains, x, lt=None):
    """Control when only the CLF row is active."""
    if lt is None:
        lt = _clf_terms(sys, V, gains, x)
    denom = 1.0 / gains.p + float(lt.LgV @ lt.LgV)
    return -(lt.a / denom) * lt.LgV


def closed_form_case3(sys, h, gains, x, lt=None):
    """Control when only the CBF row is active."""
    if lt is None:
        lt = _cbf_terms(sys, h, gains, x)
    nh = float(lt.Lgh @ lt.Lgh)
    if nh == 0.0:
        raise FormulaNotApplicable("L_g h is zero; the CBF-only formula is undefined")
    return -(lt.b / nh) * lt.Lgh


def closed_form_case4(sys, V, h, gains, x, lt=None):
    """Control and multipliers when both rows are active.

    Solves the 2x2 stationarity/activity system for (lam1, lam2). Raises
    FormulaNotApplicable when its determinant vanishes (L_g h = 0), in which
    case the CLF-only formula applies instead.
    """
    if lt is None:
        lt = lie_terms(sys, V, h, gains, x)
    s = float(lt.LgV @ lt.Lgh)
    nv = float(lt.LgV @ lt.LgV) + 1.0 / gains.p
    nh = float(lt.Lgh @ lt.Lgh)
    delta = s * s - nv * nh
    if delta >= -1e-12:
        raise FormulaNotApplicable("determinant of the two-row KKT system is zero")
    lam1 = (lt.b * s - lt.a * nh) / delta
    lam2 = (lt.b * nv - lt.a * s) / delta
    u = -lam1 * lt.LgV + lam2 * lt.Lgh
    return u, lam1, lam2


def classify_region(sys, V, h, gains, x, lt=None):
    """Which rows the QP solution activates, decided from sign conditions.

    With a = LfV + gamma(V), b = Lfh + alpha(h), s = LgV.Lgh,
    nv = |LgV|^2 + 1/p and nh = |Lgh|^2 the branches are
      neither:   a <= 0 and b >= 0
      clf_only:  a > 0 and b*nv - a*s > 0        (CBF slack of the CLF-only u)
      cbf_only:  b < 0 and a*nh - b*s < 0        (CLF slack of the CBF-only u)
      both:      otherwise; here lam1 = (b s - a nh)/Delta and
                 lam2 = (b nv - a s)/Delta are both >= 0 because Delta < 0.
    Everything is multiplied out so nothing divides by a.
    """
    if lt is None:
        lt = lie_terms(sys, V, h, gains, x)
    a, b = lt.a, lt.b
    s = float(lt.LgV @ lt.Lgh)
    nv = float(lt.LgV @ lt.LgV) + 1.0 / gains.p
    nh = float(lt.Lgh @ lt.Lgh)
    tol_a = TIE_TOL * (1.0 + abs(lt.LfV) + abs(gains.gamma(lt.V)))
    tol_b = TIE_TOL * (1.0 + abs(lt.Lfh) + abs(gains.alpha(lt.h)))
    if a <= tol_a and b >= -tol_b:
        return "neither"
    cbf_slack = b * nv - a * s
    if a > 0.0 and cbf_slack >= -TIE_TOL * (abs(b * nv) + abs(a * s) + 1.0):
        return "clf_only"
    clf_slack = a * nh - b * s
    if b < 0.0 and clf_slack <= TIE_TOL * (abs(a * nh) + abs(b * s) + 1.0):
        return "cbf_only"
    return "both"


REGION_TO_CASE = dict(zip(REGION_LABELS, CASE_LABELS))


def closed_form_control(sys, V, h, gains, x):
    """Nominal QP solution assembled from the branch formulas alone."""
    lt = lie_terms(sys, V, h, gains, x)
    region = classify_region(sys, V, h, gains, x, lt)
    m = sys.m
    if region == "neither":
        return ControlOutput(np.zeros(m), 0.0, "none_active", 0.0, 0.0)
    if region == "clf_only":
        u = closed_form_case2(sys, V, gains, x, lt)
        lam1 = gains.p * _case2_w(lt, gains)
        return ControlOutput(u, lam1 / gains.p, "clf_only", lam1, 0.0)
    if region == "cbf_only":
        u = closed_form_case3(sys, h, gains, x, lt)
        nh = float(lt.Lgh @ lt.Lgh)
        return ControlOutput(u, 0.0, "cbf_only", 0.0, -lt.b / nh)
    try:
        u, lam1, lam2 = closed_form_case4(sys, V, h, gains, x, lt)
    except FormulaNotApplicable:
        u = closed_form_case2(sys, V, gains, x, lt)
        lam1 = gains.p * _case2_w(lt, gains)
        return ControlOutput(u, lam1 / gains.p, "clf_only", lam1, 0.0)
    return ControlOutput(u, lam1 / gains.p, "both_active", lam1, lam2)


def _case2_w(lt, gains):
    # w = lam1 / p with lam1 = a / (1/p + |LgV|^2)
    return lt.a / (1.0 + gains.p * float(lt.LgV @ lt.LgV))


def _clf_terms(sys, V, gains, x):
    x = np.asarray(x, dtype=float)
    dV = V.gradient(x)
    Vx = V.value(x)
    LfV = float(dV @ sys.f(x))
    return LieTerms(Vx, np.nan, LfV, dV @ sys.g(x), np.nan, None, LfV + gains.gamma(Vx), np.nan)


def _cbf_terms(sys, h, gains, x):
    x = np.asarray(x, dtype=float)
    hx, dh, _ = h.value_grad_hess(x)
    Lfh = float(dh @ sys.f(x))
    return LieTerms(np.nan, hx, np.nan, None, Lfh, dh @ sys.g(x), np.nan, Lfh + gains.alpha(hx))


class NominalController:
    """Callable wrapper binding a scenario to the nominal QP."""

    def __init__(self, sys, V, h, gains):
        self.sys, self.V, self.h, self.gains = sys, V, h, gains
        self._last = None

    def __call__(self, x):
        # same problem as assemble_nominal, handed to the solver core as lists
        sys, gains = self.sys, self.gains
        x = np.asarray(x, dtype=float)
        gx = sys.g(x)
        dV = self.V.gradient(x)
        dh = self.h.gradient(x)
        LgV = (dV @ gx).tolist()
        Lgh = (dh @ gx).tolist()
        a = gains.gamma(self.V.value(x))
        b = gains.alpha(self.h.value(x))
        if not sys.drift_free:
            fx = sys.f(x)
            a += float(dV @ fx)
            b += float(dh @ fx)
        m = len(LgV)
        A = [LgV + [-1.0], [-v for v in Lgh] + [0.0]]
        z, lam, S, _ = enumerate_active_sets(A, [-a, b], [1.0] * m + [gains.p], self._last)
        self._last = S
        return ControlOutput(
            u=np.array(z[:m]), w=z[m], case_label=case_label((0 in S, 1 in S)),
            lam1=lam[0], lam2=lam[1],
        )

    def closed_loop(self, x):
        out = self(x)
        return self.sys.vector_field(x, out.u), out
