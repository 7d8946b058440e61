"""Closed-loop equilibria of the nominal QP controller and their stability.

Boundary equilibria are located by a fine angular sweep of the circular
obstacle followed by bisection; interior ones by damped Newton from a seed
grid. Stability is judged three ways: the tangent-space Hessian form, the full
Hessian matrix, and a finite-difference Jacobian of the actual closed loop.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ActiveSetSwitch, NotBoundaryPoint, SingularityError, UnsupportedBoundary
from .models import CircularObstacleCbf
from .nominal import NominalController, classify_region, closed_form_case4, lie_terms
from .shaped import gamma_matrix

VERDICTS = ("asymptotically_stable", "unstable", "marginal")
KINDS = ("origin", "interior", "boundary")

SWEEP_STEP = 1e-3
THETA_TOL = 1e-12
DUAL_TOL = 1e-10
BOUNDARY_TOL = 1e-9
DEDUP_TOL = 1e-6
EIG_TOL = 1e-10
FD_STEP = 1e-5
RESIDUAL_TOL = 1e-9
ORIGIN_CUTOFF = 1e-4


@dataclass
class EquilibriumReport:
    location: np.ndarray
    kind: str
    c: Optional[float] = None
    jacobian: Optional[np.ndarray] = None
    eigenvalues: tuple = ()
    verdict: str = "marginal"
    tangent_form_value: Optional[float] = None
    full_matrix_verdict: Optional[str] = None
    residual: float = 0.0
    theta: Optional[float] = None
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def disagreement(self):
        """True when the tangent-space and full-matrix tests disagree."""
        return self.full_matrix_verdict is not None and self.full_matrix_verdict != self.verdict


def verdict_from_values(values, tol=EIG_TOL):
    """Classify by the smallest of a set of quadratic-form eigenvalues."""
    lo = min(values)
    if lo > tol:
        return "asymptotically_stable"
    if lo < -tol:
        return "unstable"
    return "marginal"


def verdict_from_eigenvalues(eigs, tol=EIG_TOL):
    """Classify a linearization by the largest real part of its spectrum."""
    hi = max(float(np.real(e)) for e in eigs)
    if hi < -tol:
        return "asymptotically_stable"
    if hi > tol:
        return "unstable"
    return "marginal"


def tangent_basis(normal):
    """Orthonormal basis (as columns) of the hyperplane orthogonal to ``normal``."""
    normal = np.asarray(normal, dtype=float)
    _, _, vt = np.linalg.svd(normal[None, :])
    return vt[1:].T


def _require_boundary(h, x):
    hx = h.value(x)
    if abs(hx) > BOUNDARY_TOL:
        raise NotBoundaryPoint(f"h(x) = {hx:.3g} is not within {BOUNDARY_TOL:g} of zero")


def stability_tangent_test(V, h, x, c, gains):
    """Hessian test restricted to the tangent space of the boundary.

    Returns (verdict, tangent_form_value). In the plane the tangent space is a
    line and the value is the single Rayleigh quotient; in higher dimension it
    is the smallest eigenvalue of T^T (H_V - c H_h) T.
    """
    x = np.asarray(x, dtype=float)
    _require_boundary(h, x)
    T = tangent_basis(h.gradient(x))
    M = T.T @ (V.hessian - c * h.hessian) @ T
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    return verdict_from_values(eig), float(eig[0])


def full_matrix_test(V, h, x, c):
    """Positive definiteness of the whole matrix H_V - c H_h."""
    M = V.hessian - c * h.hessian
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    return verdict_from_values(eig), eig


def integrator_boundary_jacobian(V, h, x, c, gains):
    """Analytic closed-loop Jacobian of the integrator at a boundary equilibrium.

    J = -|grad h|^-2 (p gamma(V) P_{grad h} (H_V - c H_h) + alpha'(0) grad h grad h^T).
    Its spectrum is -alpha'(0) along grad h plus the tangent eigenvalues.
    """
    x = np.asarray(x, dtype=float)
    dh = h.gradient(x)
    nh = float(dh @ dh)
    P = nh * np.eye(dh.shape[0]) - np.outer(dh, dh)
    pg = gains.p * gains.gamma(V.value(x))
    return -(pg * P @ (V.hessian - c * h.hessian) + gains.alpha.derivative(0.0) * np.outer(dh, dh)) / nh


def numeric_closed_loop_jacobian(controller, x, step=FD_STEP):
    """Central-difference Jacobian of f(x) + g(x) k(x).

    ``controller`` is a NominalController. The case label is probed at every
    stencil point; if it changes the closed loop is only piecewise smooth there
    and ActiveSetSwitch is raised carrying one-sided estimates as ``forward``
    and ``backward`` attributes.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    f0, out0 = controller.closed_loop(x)
    J = np.empty((n, n))
    Jf = np.empty((n, n))
    Jb = np.empty((n, n))
    switched = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fp, op = controller.closed_loop(x + e)
        fm, om = controller.closed_loop(x - e)
        J[:, i] = (fp - fm) / (2.0 * step)
        Jf[:, i] = (fp - f0) / step
        Jb[:, i] = (f0 - fm) / step
        for o in (op, om):
            if o.case_label != out0.case_label:
                switched.append(o.case_label)
    if switched:
        exc = ActiveSetSwitch(
            f"active set changes from {out0.case_label} to {switched[0]} inside the stencil"
        )
        exc.forward, exc.backward = Jf, Jb
        raise exc
    return J


def closed_loop_residual(controller, x):
    f_cl, _ = controller.closed_loop(np.asarray(x, dtype=float))
    return float(np.linalg.norm(f_cl))


def _linearize(controller, x):
    try:
        J = numeric_closed_loop_jacobian(controller, x)
        note = ""
    except ActiveSetSwitch as exc:
        J = 0.5 * (exc.forward + exc.backward)
        note = "active-set switch in stencil; averaged one-sided Jacobian"
    eigs = np.linalg.eigvals(J)
    order = np.lexsort((np.imag(eigs), np.real(eigs)))
    return J, tuple(complex(e) for e in eigs[order]), note


def _boundary_residual_fn(sys, V, h, gains, controller):
    center = np.asarray(h.center)
    r = h.radius
    if sys.drift_free and sys.constant_g:
        # gradV x gradh; for f = 0 and constant G the equilibria are exactly
        # the collinear points
        def res(th):
            x = center + r * np.array([math.cos(th), math.sin(th)])
            a = sys.G(x) @ V.gradient(x)
            b = sys.G(x) @ h.gradient(x)
            return float(a[0] * b[1] - a[1] * b[0])
    else:
        # on the circle with the CBF row active the normal component of the
        # closed loop is zero, so equilibria are zeros of the tangential part
        def res(th):
            ct, st = math.cos(th), math.sin(th)
            x = center + r * np.array([ct, st])
            f_cl, _ = controller.closed_loop(x)
            return float(-st * f_cl[0] + ct * f_cl[1])
    return res


def _bisect(fn, a, fa, b, fb):
    while b - a > THETA_TOL:
        m = 0.5 * (a + b)
        fm = fn(m)
        if fm == 0.0:
            return m
        if (fm > 0.0) == (fa > 0.0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return a if abs(fa) <= abs(fb) else b


def find_boundary_equilibria(sys, V, h, gains, sweep_step=SWEEP_STEP):
    """Boundary equilibria of the nominal closed loop on a circular obstacle.

    Returns reports sorted by angle. If the collinearity residual vanishes on
    the whole circle (radial CLF centred on the obstacle), a single report at
    angle 0 is returned with note 'degenerate continuum' and verdict marginal.
    """
    if not isinstance(h, CircularObstacleCbf):
        raise UnsupportedBoundary(f"boundary search needs a circular obstacle, got {type(h).__name__}")
    if sys.n != 2:
        raise UnsupportedBoundary("boundary search is implemented for n = 2 only")
    controller = NominalController(sys, V, h, gains)
    res = _boundary_residual_fn(sys, V, h, gains, controller)
    count = int(math.ceil(2.0 * math.pi / sweep_step))
    thetas = [2.0 * math.pi * k / count for k in range(count)]
    vals = [res(t) for t in thetas]
    scale = max(abs(v) for v in vals)
    if scale <= 1e-12 * (1.0 + _grad_scale(V, h)):
        x = h.boundary_point(0.0)
        rep = _boundary_report(sys, V, h, gains, controller, x, 0.0)
        if rep is None:
            return []
        rep.note = "degenerate continuum"
        rep.verdict = "marginal"
        return [rep]

    roots = []
    for k in range(count):
        a, fa = thetas[k], vals[k]
        b = thetas[k + 1] if k + 1 < count else 2.0 * math.pi
        fb = vals[k + 1] if k + 1 < count else vals[0]
        if fa == 0.0:
            roots.append(a)
        elif fb != 0.0 and (fa > 0.0) != (fb > 0.0):
            roots.append(_bisect(res, a, fa, b, fb))
    reports = []
    for th in roots:
        th = th % (2.0 * math.pi)
        x = h.boundary_point(th)
        if any(float(np.linalg.norm(x - r.location)) <= DEDUP_TOL for r in reports):
            continue
        rep = _boundary_report(sys, V, h, gains, controller, x, th)
        if rep is not None:
            reports.append(rep)
    reports.sort(key=lambda r: r.theta)
    return reports


def _grad_scale(V, h):
    return max(V.lambdas) * (float(np.linalg.norm(h.center)) + h.radius) * h.radius


def _boundary_report(sys, V, h, gains, controller, x, theta):
    if classify_region(sys, V, h, gains, x) != "both":
        return None
    lt = lie_terms(sys, V, h, gains, x)
    try:
        _, lam1, lam2 = closed_form_case4(sys, V, h, gains, x, lt)
    except Exception:
        return None
    if lam1 < -DUAL_TOL or lam2 < -DUAL_TOL:
        return None
    dV = V.gradient(x)
    dh = h.gradient(x)
    c = float(dV @ dh) / float(dh @ dh)
    if c < 0.0:
        return None
    resid = closed_loop_residual(controller, x)
    if resid > 1e-8 * (1.0 + float(np.linalg.norm(dV))):
        return None
    J, eigs, note = _linearize(controller, x)
    num_verdict = verdict_from_eigenvalues(eigs)
    extra = {"numeric_verdict": num_verdict, "lam1": lam1, "lam2": lam2}
    if sys.drift_free and sys.constant_g:
        verdict, tval = stability_tangent_test(V, h, x, c, gains)
        full_verdict, _ = full_matrix_test(V, h, x, c)
        Ja = integrator_boundary_jacobian(V, h, x, c, gains)
        extra["analytic_eigenvalues"] = tuple(sorted(float(v) for v in np.real(np.linalg.eigvals(Ja))))
        extra["collinearity_residual"] = float(np.linalg.norm(dV - c * dh))
    else:
        verdict, tval, full_verdict = num_verdict, None, None
    return EquilibriumReport(
        location=np.asarray(x, dtype=float), kind="boundary", c=c, jacobian=J,
        eigenvalues=eigs, verdict=verdict, tangent_form_value=tval,
        full_matrix_verdict=full_verdict, residual=resid, theta=float(theta), note=note, extra=extra,
    )


def interior_residual(sys, V, gains, x):
    """f(x) - p gamma(V) G grad V, which vanishes at interior equilibria."""
    return sys.f(x) - gains.p * gains.gamma(V.value(x)) * (sys.G(x) @ V.gradient(x))


def _interior_jacobian(sys, V, gains, x):
    G = sys.G(x)
    dV = V.gradient(x)
    Vx = V.value(x)
    pg = gains.p * gains.gamma(Vx)
    a = G @ dV
    return (
        sys.jac_f(x)
        - gains.p * gains.gamma.derivative(Vx) * np.outer(a, dV)
        - pg * (G @ V.hessian + gamma_matrix(sys, dV, x))
    )


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def _newton(sys, V, gains, x, max_iter=40, known=()):
    """Damped Newton on the interior residual.

    Returns (root or None, residual norm). Iterates that collapse onto the
    trivial root x = 0 or into the basin of an already known root stop early.
    """
    r = interior_residual(sys, V, gains, x)
    nr = _norm(r)
    for _ in range(max_iter):
        if nr <= 1e-13:
            break
        J = _interior_jacobian(sys, V, gains, x)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None, nr
        t = 1.0
        while t > 1e-3:
            xn = x + t * dx
            rn = interior_residual(sys, V, gains, xn)
            nrn = _norm(rn)
            if nrn < (1.0 - 1e-4 * t) * nr:
                break
            t *= 0.5
        else:
            break
        x, r, nr = xn, rn, nrn
        if _norm(x) < ORIGIN_CUTOFF:
            return None, nr
        for y in known:
            if _norm(x - y) < 1e-4:
                return None, nr
    return x, nr


def find_interior_equilibria(sys, V, gains, search_box=((-6.0, 6.0), (-6.0, 6.0)), h=None, grid=50):
    """Interior equilibria f = p gamma(V) G grad V away from the origin.

    Seeds a grid x grid lattice over ``search_box``, refines each seed with
    damped Newton and keeps roots with residual <= 1e-9 that lie in the
    CLF-only region with h > 0 (these checks need ``h``; without it only the
    residual filter applies). Results are deduplicated within 1e-6 and sorted
    lexicographically.
    """
    if sys.drift_free:
        return []
    controller = NominalController(sys, V, h, gains) if h is not None else None
    axes = [np.linspace(lo, hi, grid) for lo, hi in search_box]
    roots = []
    for s in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T:
        if float(np.linalg.norm(s)) < 1e-8:
            continue
        try:
            x, nr = _newton(sys, V, gains, s.astype(float), known=roots)
        except SingularityError:
            continue
        if x is None or nr > RESIDUAL_TOL:
            continue
        if any(float(np.linalg.norm(x - y)) <= DEDUP_TOL for y in roots):
            continue
        roots.append(x)
    roots.sort(key=lambda v: tuple(v))
    reports = []
    for x in roots:
        resid = float(np.linalg.norm(interior_residual(sys, V, gains, x)))
        if h is not None:
            if not h.value(x) > 0.0:
                continue
            if classify_region(sys, V, h, gains, x) != "clf_only":
                continue
            J, eigs, note = _linearize(controller, x)
            verdict = verdict_from_eigenvalues(eigs)
            cl = closed_loop_residual(controller, x)
        else:
            J = _interior_jacobian(sys, V, gains, x)
            eigs = tuple(complex(e) for e in np.linalg.eigvals(J))
            verdict, note, cl = verdict_from_eigenvalues(eigs), "", None
        reports.append(EquilibriumReport(
            location=x, kind="interior", jacobian=J, eigenvalues=eigs, verdict=verdict,
            residual=resid, note=note, extra={"closed_loop_residual": cl},
        ))
    return reports


def find_equilibria(sys, V, h, gains, search_box=((-6.0, 6.0), (-6.0, 6.0))):
    """Boundary equilibria followed by interior ones."""
    return find_boundary_equilibria(sys, V, h, gains) + find_interior_equilibria(sys, V, gains, search_box, h=h)
