"""Exact solver for tiny diagonal-cost QPs by active-set enumeration.

Problems have the form

    minimize    z^T W z          (W positive diagonal)
    subject to  a_i . z  <= b_i  or  >= b_i,   i = 1..k,  k <= 3

Multipliers are those of the Lagrangian 1/2 z^T W z + sum_i lam_i (a_i.z - b_i)
after every row has been rewritten in <= form, so the relaxation multiplier of
a CLF row with coefficient -1 on w satisfies lam = p * w.
"""

from dataclasses import dataclass
import math
from itertools import combinations
from operator import mul

import numpy as np

from .errors import DegenerateQP, InfeasibleQP

DUAL_TOL = 1e-10
PIVOT_TOL = 1e-12
PRIMAL_TOL = 1e-9
MAX_ROWS = 3


@dataclass(frozen=True)
class Constraint:
    coeffs: np.ndarray
    rhs: float
    sense: str = "<="
    label: str = ""

    def __post_init__(self):
        if self.sense not in ("<=", ">="):
            raise ValueError(f"constraint sense must be '<=' or '>=', got {self.sense!r}")
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "rhs", float(self.rhs))

    def normalized(self):
        """(a, b) with the row written as a.z <= b."""
        if self.sense == "<=":
            return self.coeffs, self.rhs
        return -self.coeffs, -self.rhs


@dataclass(frozen=True)
class QpProblem:
    weights: np.ndarray
    rows: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w <= 0.0):
            raise ValueError("cost weights must be a positive vector")
        rows = tuple(self.rows)
        if len(rows) > MAX_ROWS:
            raise ValueError(f"at most {MAX_ROWS} constraint rows are supported")
        for r in rows:
            if r.coeffs.shape != w.shape:
                raise ValueError("constraint row length does not match the decision dimension")
            if not (np.all(np.isfinite(r.coeffs)) and np.isfinite(r.rhs)):
                raise ValueError(f"non-finite constraint row {r.label or ''}".rstrip())
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self):
        return self.weights.shape[0]

    def normalized(self):
        k = len(self.rows)
        A = np.empty((k, self.dim))
        b = np.empty(k)
        for i, r in enumerate(self.rows):
            A[i], b[i] = r.normalized()
        return A, b

    def objective(self, z):
        return float(np.dot(self.weights * z, z))


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    multipliers: np.ndarray
    active: tuple
    objective: float

    @property
    def active_mask(self):
        return sum(1 << i for i, a in enumerate(self.active) if a)


def _solve_small(M, rhs):
    """Solve M y = rhs for k <= 3 with partial pivoting on nested lists.

    Returns None when a pivot falls below PIVOT_TOL relative to the largest
    entry of M. Plain floats beat numpy by a wide margin at this size, and
    the 1x1 and 2x2 cases (the common ones) are unrolled.
    """
    k = len(rhs)
    if k == 1:
        m = M[0][0]
        if abs(m) <= PIVOT_TOL * max(1.0, abs(m)):
            return None
        return [rhs[0] / m]
    if k == 2:
        (a, b), (c, d) = M
        scale = max(1.0, abs(a), abs(b), abs(c), abs(d))
        r0, r1 = rhs
        if abs(c) > abs(a):
            a, b, c, d = c, d, a, b
            r0, r1 = r1, r0
        if abs(a) <= PIVOT_TOL * scale:
            return None
        f = c / a
        d2 = d - f * b
        if abs(d2) <= PIVOT_TOL * scale:
            return None
        y1 = (r1 - f * r0) / d2
        return [(r0 - b * y1) / a, y1]
    A = [row[:] for row in M]
    y = rhs[:]
    scale = 1.0
    for row in A:
        for v in row:
            if abs(v) > scale:
                scale = abs(v)
    for j in range(k):
        p = j
        for i in range(j + 1, k):
            if abs(A[i][j]) > abs(A[p][j]):
                p = i
        if abs(A[p][j]) <= PIVOT_TOL * scale:
            return None
        if p != j:
            A[j], A[p] = A[p], A[j]
            y[j], y[p] = y[p], y[j]
        piv = A[j][j]
        for i in range(j + 1, k):
            r = A[i][j] / piv
            if r:
                Ai, Aj = A[i], A[j]
                for c in range(j, k):
                    Ai[c] -= r * Aj[c]
                y[i] -= r * y[j]
    out = [0.0] * k
    for j in range(k - 1, -1, -1):
        acc = y[j]
        for c in range(j + 1, k):
            acc -= A[j][c] * out[c]
        out[j] = acc / A[j][j]
    return out


def _consistent(rows, rhs):
    M = np.array(rows)
    r = np.array(rhs)
    y, *_ = np.linalg.lstsq(M, r, rcond=None)
    return float(np.max(np.abs(M @ y - r))) <= PRIMAL_TOL * (1.0 + float(np.max(np.abs(r))))


_SUBSETS = {k: [S for size in range(k + 1) for S in combinations(range(k), size)] for k in range(MAX_ROWS + 1)}


def _dot(u, v):
    return sum(map(mul, u, v))


_ORDERS = {}


def _order(k, first):
    key = (k, first)
    if key not in _ORDERS:
        _ORDERS[key] = _SUBSETS[k] if first is None else [first] + [S for S in _SUBSETS[k] if S != first]
    return _ORDERS[key]


def enumerate_active_sets(A, b, wts, first=None):
    """Core of solve_active_set on plain lists (rows already in <= form).

    Returns (z, lam, S, objective) as lists and the winning subset.
    ``first`` is a subset to try before the others (a warm start); any
    subset passing the KKT checks gives the same unique minimizer.
    """
    k, d = len(A), len(wts)
    # Rows are rescaled to unit length: the feasible set and the argmin are
    # unchanged, and pivots become comparable to 1 no matter how small a
    # row's coefficients get (the collinearity row fades out with sigma).
    # Multipliers are mapped back to the original rows at the end.
    scales = []
    A_in, b_in = A, b
    A, b = [], []
    for row, bi in zip(A_in, b_in):
        nrm = math.hypot(*row)
        if nrm == 0.0:
            if bi < -PRIMAL_TOL:
                raise InfeasibleQP("a constraint row with zero coefficients is violated")
            scales.append(0.0)
            A.append(row)
            b.append(0.0)
            continue
        scales.append(nrm)
        A.append([v / nrm for v in row])
        b.append(bi / nrm)
    winv = [1.0 / v for v in wts]
    Aw = [[a * wi for a, wi in zip(row, winv)] for row in A]
    gram = [[_dot(Aw[i], A[j]) for j in range(k)] for i in range(k)]
    best = None
    saw_singular = False
    for S in _order(k, first):
        lam = [0.0] * k
        z = [0.0] * d
        if S:
            sol = _solve_small([[gram[i][j] for j in S] for i in S], [-b[i] for i in S])
            if sol is None:
                # a rank-deficient subset only signals degeneracy when its
                # equalities can hold at once; contradictory rows are simply
                # infeasible together
                if not saw_singular:
                    saw_singular = _consistent([A[i] for i in S], [b[i] for i in S])
                continue
            if min(sol) < -DUAL_TOL:
                continue
            for i, v in zip(S, sol):
                lam[i] = v
                z = [zc - v * rc for zc, rc in zip(z, Aw[i])]
        feasible = True
        for i in range(k):
            terms = list(map(mul, A[i], z))
            if b[i] - sum(terms) < -PRIMAL_TOL * (1.0 + abs(b[i]) + sum(map(abs, terms))):
                feasible = False
                break
        if not feasible:
            continue
        # primal and dual feasible with complementarity: a KKT point, and the
        # objective is strictly convex, so this is the unique minimizer
        best = (z, lam, S, sum(map(mul, wts, map(mul, z, z))))
        break
    if best is None:
        if saw_singular:
            raise DegenerateQP("all admissible active sets have singular KKT systems")
        raise InfeasibleQP("no active set yields a feasible point")
    z, lam, S, obj = best
    lam = [v / sc if sc > 0.0 else 0.0 for v, sc in zip(lam, scales)]
    return z, lam, S, obj


def solve_active_set(prob):
    """Minimize z^T W z over the polyhedron by trying every active set.

    Each subset of rows is treated as equalities. For diagonal W the KKT
    system reduces to the Gram system (A_S W^-1 A_S^T) lam_S = -b_S with
    z = -W^-1 A_S^T lam_S. Candidates must be primal feasible and have
    lam >= -DUAL_TOL; among those the lowest objective wins, ties going to
    the smaller active set and then to the lexicographically first subset.
    """
    A, b = prob.normalized()
    z, lam, S, obj = enumerate_active_sets(A.tolist(), b.tolist(), prob.weights.tolist())
    active = tuple(i in S for i in range(len(lam)))
    return QpSolution(z=np.array(z), multipliers=np.array(lam), active=active, objective=obj)


def kkt_residuals(prob, sol):
    """Max-norm residuals (stationarity, primal, dual, complementarity)."""
    A, b = prob.normalized()
    z = np.asarray(sol.z, dtype=float)
    lam = np.asarray(sol.multipliers, dtype=float)
    stat = prob.weights * z + A.T @ lam
    slack = b - A @ z
    stationarity = float(np.max(np.abs(stat))) if stat.size else 0.0
    primal = float(np.max(np.maximum(0.0, -slack), initial=0.0))
    dual = float(np.max(np.maximum(0.0, -lam), initial=0.0))
    compl = float(np.max(np.abs(lam * slack), initial=0.0))
    return stationarity, primal, dual, compl
