"""Fixed-step closed-loop simulation with safety monitors."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import linalg
from .errors import ClfCbfError
from .nominal import NominalController
from .shaped import ShapedController, ShapedState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_final: float = 50.0
    convergence_radius: float = 1e-2
    convergence_hold: float = 1.0
    monitors_tolerance: float = 1e-6
    sample_and_hold: bool = False
    stop_on_convergence: bool = True

    def __post_init__(self):
        for name in ("dt", "t_final", "convergence_radius", "convergence_hold", "monitors_tolerance"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.dt < self.t_final:
            raise ValueError("dt must be smaller than t_final")


@dataclass(frozen=True)
class Terminal:
    """How a run ended: 'converged', 't_final' or 'error'."""

    kind: str
    point: Optional[tuple] = None
    reason: str = ""

    def describe(self):
        if self.kind == "converged":
            return "converged_to(" + ",".join(f"{v:.6g}" for v in self.point) + ")"
        if self.kind == "error":
            return f"error({self.reason})"
        return "t_final_reached"


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    w: np.ndarray
    h: np.ndarray
    V: np.ndarray
    case: List[str]
    terminal: Terminal
    Q: Optional[np.ndarray] = None
    omega: Optional[np.ndarray] = None
    D: Optional[np.ndarray] = None
    h_D: Optional[np.ndarray] = None

    @property
    def shaped(self):
        return self.Q is not None

    @property
    def min_h(self):
        return float(np.min(self.h))

    @property
    def min_h_D(self):
        return None if self.h_D is None else float(np.min(self.h_D))

    @property
    def max_rotation_drift(self):
        if self.Q is None:
            return None
        n = self.Q.shape[1]
        gram = np.einsum("kji,kjl->kil", self.Q, self.Q) - np.eye(n)
        return float(np.max(np.linalg.norm(gram, axis=(1, 2))))

    @property
    def final_x(self):
        return self.x[-1]

    def __len__(self):
        return self.t.shape[0]


class _Log:
    def __init__(self, shaped):
        self.shaped = shaped
        self.t, self.x, self.u, self.w, self.h, self.V, self.case = [], [], [], [], [], [], []
        if shaped:
            self.Q, self.omega, self.D, self.h_D = [], [], [], []

    def record(self, record):
        t = np.array(self.t)
        kw = {}
        if self.shaped:
            kw = dict(Q=np.array(self.Q), omega=np.array(self.omega), D=np.array(self.D), h_D=np.array(self.h_D))
        return TrajectoryRecord(
            t=t, x=np.array(self.x), u=np.array(self.u), w=np.array(self.w),
            h=np.array(self.h), V=np.array(self.V), case=self.case, terminal=record, **kw,
        )


class _ConvergenceWatch:
    """Detects a run settling in a small ball for a hold window.

    Known equilibria are checked every step. Without a nearby known point the
    trailing window is checked against its own mean every ``stride`` steps;
    that fallback also requires the net displacement across the window to be
    below ``DRIFT_FRACTION * radius`` so a slow crawl is not mistaken for rest.
    """

    DRIFT_FRACTION = 1e-3

    def __init__(self, cfg, known_points, n):
        self.cfg = cfg
        self.points = [np.zeros(n)] + [np.asarray(p, dtype=float) for p in known_points]
        self.hold_steps = max(1, int(round(cfg.convergence_hold / cfg.dt)))
        self.stride = max(1, self.hold_steps // 10)
        self.current = None
        self.count = 0
        self.history = []
        self.steps = 0

    def update(self, x):
        r = self.cfg.convergence_radius
        near = None
        for i, p in enumerate(self.points):
            if float(np.linalg.norm(x - p)) <= r:
                near = i
                break
        if near is not None and near == self.current:
            self.count += 1
        elif near is not None:
            self.current, self.count = near, 1
        else:
            self.current, self.count = None, 0
        if self.current is not None and self.count > self.hold_steps:
            return tuple(float(v) for v in self.points[self.current])
        self.history.append(x)
        self.steps += 1
        if len(self.history) > self.hold_steps + 1:
            del self.history[0]
        if self.current is None and len(self.history) > self.hold_steps and self.steps % self.stride == 0:
            window = np.array(self.history)
            mean = window.mean(axis=0)
            spread = float(np.max(np.linalg.norm(window - mean, axis=1)))
            drift = float(np.linalg.norm(window[-1] - window[0]))
            if spread <= r and drift <= self.DRIFT_FRACTION * r:
                return tuple(float(v) for v in mean)
        return None


def _rk4(fun, y, dt, k1=None):
    # k1 may be passed in when the caller already evaluated fun(y)
    if k1 is None:
        k1 = fun(y)
    k2 = fun(y + 0.5 * dt * k1)
    k3 = fun(y + 0.5 * dt * k2)
    k4 = fun(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_nominal(sys, V, h, gains, x0, cfg=None, known_equilibria=()):
    """Integrate xdot = f(x) + g(x) k(x) with classic RK4.

    The QP is re-solved at each RK4 stage unless ``cfg.sample_and_hold``.
    """
    cfg = cfg or SimConfig()
    ctrl = NominalController(sys, V, h, gains)
    x = np.asarray(x0, dtype=float).copy()
    if h.value(x) < 0.0:
        raise ValueError(f"initial state {x.tolist()} is outside the safe set")
    log = _Log(shaped=False)
    watch = _ConvergenceWatch(cfg, known_equilibria, sys.n)
    n_steps = int(round(cfg.t_final / cfg.dt))
    terminal = Terminal("t_final")

    def rhs(y):
        return sys.vector_field(y, ctrl(y).u)

    for step in range(n_steps + 1):
        t = step * cfg.dt
        try:
            out = ctrl(x)
        except ClfCbfError as exc:
            terminal = Terminal("error", reason=f"t={t:.6g}: {exc}")
            break
        log.t.append(t)
        log.x.append(x.copy())
        log.u.append(out.u)
        log.w.append(out.w)
        log.h.append(h.value(x))
        log.V.append(V.value(x))
        log.case.append(out.case_label)
        hit = watch.update(x)
        if hit is not None:
            terminal = Terminal("converged", hit)
            if cfg.stop_on_convergence:
                break
        if step == n_steps:
            break
        try:
            if cfg.sample_and_hold:
                u = out.u
                x = _rk4(lambda y: sys.vector_field(y, u), x, cfg.dt)
            else:
                x = _rk4(rhs, x, cfg.dt, sys.vector_field(x, out.u))
        except ClfCbfError as exc:
            terminal = Terminal("error", reason=f"t={t:.6g}: {exc}")
            break
        if not np.all(np.isfinite(x)):
            terminal = Terminal("error", reason=f"t={t:.6g}: non-finite state")
            break
    if terminal.kind == "t_final" and watch.current is not None and watch.count > watch.hold_steps:
        terminal = Terminal("converged", tuple(float(v) for v in watch.points[watch.current]))
    return log.record(terminal)


def simulate_shaped(sys, V_r, h, gains, x0, cfg=None, known_equilibria=()):
    """Integrate the pair (x, Q) under the shaped controller.

    Q is carried as a full matrix through RK4 and pulled back onto SO(n)
    with the polar retraction after each step.
    """
    cfg = cfg or SimConfig()
    ctrl = ShapedController(sys, V_r, h, gains)
    n = sys.n
    x = np.asarray(x0, dtype=float).copy()
    if h.value(x) < 0.0:
        raise ValueError(f"initial state {x.tolist()} is outside the safe set")
    Q = np.eye(n)
    log = _Log(shaped=True)
    watch = _ConvergenceWatch(cfg, known_equilibria, n)
    n_steps = int(round(cfg.t_final / cfg.dt))
    terminal = Terminal("t_final")

    def pack(x, Q):
        return np.concatenate([x, Q.ravel()])

    def deriv(y, held=None):
        xs = y[:n]
        Qs = y[n:].reshape(n, n)
        out = held if held is not None else ctrl(ShapedState(xs, Qs))
        dx = sys.vector_field(xs, out.u)
        dQ = Qs @ linalg.skew(out.omega, n)
        return np.concatenate([dx, dQ.ravel()])

    for step in range(n_steps + 1):
        t = step * cfg.dt
        try:
            out, terms = ctrl.evaluate(ShapedState(x, Q))
        except ClfCbfError as exc:
            terminal = Terminal("error", reason=f"t={t:.6g}: {exc}")
            break
        log.t.append(t)
        log.x.append(x.copy())
        log.Q.append(Q.copy())
        log.u.append(out.u)
        log.omega.append(out.omega)
        log.w.append(out.w)
        log.h.append(terms.h)
        log.V.append(terms.V)
        log.D.append(terms.D)
        log.h_D.append(terms.hD)
        log.case.append(out.case_label)
        hit = watch.update(x)
        if hit is not None:
            terminal = Terminal("converged", hit)
            if cfg.stop_on_convergence:
                break
        if step == n_steps:
            break
        try:
            if cfg.sample_and_hold:
                y = _rk4(lambda v: deriv(v, out), pack(x, Q), cfg.dt)
            else:
                y0 = pack(x, Q)
                y = _rk4(deriv, y0, cfg.dt, deriv(y0, out))
            x = y[:n]
            Q = linalg.rotation_retract(y[n:].reshape(n, n))
        except ClfCbfError as exc:
            terminal = Terminal("error", reason=f"t={t:.6g}: {exc}")
            break
        if not np.all(np.isfinite(x)):
            terminal = Terminal("error", reason=f"t={t:.6g}: non-finite state")
            break
    if terminal.kind == "t_final" and watch.current is not None and watch.count > watch.hold_steps:
        terminal = Terminal("converged", tuple(float(v) for v in watch.points[watch.current]))
    return log.record(terminal)


@dataclass
class SweepResult:
    records: List[TrajectoryRecord]
    ics: List[tuple]
    errors: List[Optional[str]]

    @property
    def summary(self):
        """Terminal description -> count, in first-seen order."""
        out = {}
        for rec, err in zip(self.records, self.errors):
            key = f"error({err})" if rec is None else rec.terminal.describe()
            out[key] = out.get(key, 0) + 1
        return out


def sweep(sys, V, h, gains, ics, controller="nominal", cfg=None, known_equilibria=()):
    """Run one simulation per initial condition, in order.

    A failing initial condition (unsafe start, unexpected exception in setup)
    is recorded as None with its message and the sweep carries on.
    """
    if controller not in ("nominal", "shaped"):
        raise ValueError(f"controller must be 'nominal' or 'shaped', got {controller!r}")
    run = simulate_nominal if controller == "nominal" else simulate_shaped
    records, errors = [], []
    for x0 in ics:
        try:
            records.append(run(sys, V, h, gains, x0, cfg, known_equilibria))
            errors.append(None)
        except (ValueError, ClfCbfError) as exc:
            logger.warning("initial condition %s failed: %s", x0, exc)
            records.append(None)
            errors.append(str(exc))
    return SweepResult(records, [tuple(map(float, x)) for x in ics], errors)
