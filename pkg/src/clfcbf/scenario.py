"""Scenario files: a versioned, sectioned key = value text format.

Example::

    format_version = 1
    name = default-integrator

    [system]
    name = integrator
    n = 2

    [clf]
    lambdas = 6, 1

    [obstacle]
    center = 0, 3
    radius = 1.5

    [ics]
    points = 4, 4; -4, 4
    ring_count = 12
    ring_radius = 6

Missing keys take their defaults. Unknown sections or keys, duplicates and
malformed values raise ConfigError with the file and line.
"""

import math
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .models import SYSTEM_NAMES, CircularObstacleCbf, ClassKappa, QuadraticClf, builtin_system
from .nominal import NominalGains
from .shaped import SIGMA_KINDS, ShapedGains
from .simulate import SimConfig

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    system: str = "integrator"
    n: int = 2
    lambdas: tuple = (6.0, 1.0)
    center: tuple = (0.0, 3.0)
    radius: float = 1.5
    nominal: NominalGains = field(default_factory=NominalGains)
    shaped: ShapedGains = field(default_factory=ShapedGains)
    sim: SimConfig = field(default_factory=SimConfig)
    points: tuple = ()
    ring_count: int = 0
    ring_radius: float = 6.0
    ring_phase: float = 0.0

    def build(self):
        """(system, clf, cbf) model objects."""
        return (
            builtin_system(self.system, self.n),
            QuadraticClf(self.lambdas),
            CircularObstacleCbf(self.center, self.radius),
        )

    @property
    def initial_conditions(self):
        """Explicit points first, then the ring counter-clockwise from ring_phase."""
        ics = [tuple(p) for p in self.points]
        for k in range(self.ring_count):
            th = self.ring_phase + 2.0 * math.pi * k / self.ring_count
            ics.append((self.ring_radius * math.cos(th), self.ring_radius * math.sin(th)))
        return ics


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _vec(v):
    return ", ".join(_fmt(float(c)) for c in v)


def dumps(sc):
    """Serialize a Scenario; ``loads(dumps(sc)) == sc`` holds exactly."""
    nm, sh, sim = sc.nominal, sc.shaped, sc.sim
    lines = [
        f"format_version = {FORMAT_VERSION}",
        f"name = {sc.name}",
        "",
        "[system]",
        f"name = {sc.system}",
        f"n = {sc.n}",
        "",
        "[clf]",
        f"lambdas = {_vec(sc.lambdas)}",
        "",
        "[obstacle]",
        f"center = {_vec(sc.center)}",
        f"radius = {_fmt(float(sc.radius))}",
        "",
        "[nominal]",
        f"p = {_fmt(float(nm.p))}",
        f"gamma = {_fmt(float(nm.gamma.gain))}",
        f"alpha = {_fmt(float(nm.alpha.gain))}",
        "",
        "[shaped]",
        f"p = {_fmt(float(sh.p))}",
        f"q = {_fmt(float(sh.q))}",
        f"gamma = {_fmt(float(sh.gamma.gain))}",
        f"alpha = {_fmt(float(sh.alpha.gain))}",
        f"beta = {_fmt(float(sh.beta.gain))}",
        f"epsilon = {_fmt(float(sh.epsilon))}",
        f"sigma_scale = {_fmt(float(sh.sigma_scale))}",
        f"sigma_kind = {sh.sigma_kind}",
        "",
        "[sim]",
    ]
    for f in fields(SimConfig):
        v = getattr(sim, f.name)
        lines.append(f"{f.name} = {_fmt(v if isinstance(v, bool) else float(v))}")
    lines += [
        "",
        "[ics]",
        "points = " + "; ".join(_vec(p) for p in sc.points),
        f"ring_count = {sc.ring_count}",
        f"ring_radius = {_fmt(float(sc.ring_radius))}",
        f"ring_phase = {_fmt(float(sc.ring_phase))}",
    ]
    return "\n".join(lines) + "\n"


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number {s!r}")
    return v


def _floats(s):
    parts = [p.strip() for p in s.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ValueError(f"expected a comma-separated list of numbers, got {s!r}")
    return tuple(_float(p) for p in parts)


def _points(s):
    s = s.strip()
    if not s:
        return ()
    return tuple(_floats(p) for p in s.split(";"))


def _bool(s):
    low = s.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _int(s):
    return int(s.strip())


def _choice(options):
    def parse(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


_SIM_KEYS = {f.name: (_bool if f.type in (bool, "bool") else _float) for f in fields(SimConfig)}

SCHEMA = {
    "": {"format_version": _int, "name": str.strip},
    "system": {"name": _choice(SYSTEM_NAMES), "n": _int},
    "clf": {"lambdas": _floats},
    "obstacle": {"center": _floats, "radius": _float},
    "nominal": {"p": _float, "gamma": _float, "alpha": _float},
    "shaped": {
        "p": _float, "q": _float, "gamma": _float, "alpha": _float, "beta": _float,
        "epsilon": _float, "sigma_scale": _float, "sigma_kind": _choice(SIGMA_KINDS),
    },
    "sim": _SIM_KEYS,
    "ics": {"points": _points, "ring_count": _int, "ring_radius": _float, "ring_phase": _float},
}


def _parse_raw(text, path):
    """{section: {key: (value, line)}} plus the line of each section header."""
    raw = {"": {}}
    header_line = {"": 1}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"malformed section header {stripped!r}", path, lineno)
            section = stripped[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", path, lineno)
            if section in raw:
                raise ConfigError(f"duplicate section [{section}]", path, lineno)
            raw[section] = {}
            header_line[section] = lineno
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", path, lineno)
        key, value = (p.strip() for p in stripped.split("=", 1))
        where = f"[{section}]" if section else "top level"
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in {where}", path, lineno)
        if key in raw[section]:
            raise ConfigError(f"duplicate key {key!r} in {where}", path, lineno)
        try:
            raw[section][key] = (SCHEMA[section][key](value), lineno)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", path, lineno) from None
    return raw, header_line


def loads(text, path=None):
    raw, header_line = _parse_raw(text, path)
    top = raw[""]
    if "format_version" not in top:
        raise ConfigError("missing format_version", path, 1)
    version, line = top["format_version"]
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported format_version {version} (expected {FORMAT_VERSION})", path, line)

    def get(section, key, default):
        return raw.get(section, {}).get(key, (default, None))[0]

    def build(section, fn):
        # semantic errors point at the section header (or line 1)
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), path, header_line.get(section, 1)) from None

    base = Scenario()
    nom = build("nominal", lambda: NominalGains(
        p=get("nominal", "p", base.nominal.p),
        gamma=ClassKappa(get("nominal", "gamma", 1.0)),
        alpha=ClassKappa(get("nominal", "alpha", 1.0)),
    ))
    shp = build("shaped", lambda: ShapedGains(
        p=get("shaped", "p", base.shaped.p),
        q=get("shaped", "q", base.shaped.q),
        gamma=ClassKappa(get("shaped", "gamma", 1.0)),
        alpha=ClassKappa(get("shaped", "alpha", 1.0)),
        beta=ClassKappa(get("shaped", "beta", 1.0)),
        epsilon=get("shaped", "epsilon", base.shaped.epsilon),
        sigma_scale=get("shaped", "sigma_scale", base.shaped.sigma_scale),
        sigma_kind=get("shaped", "sigma_kind", base.shaped.sigma_kind),
    ))
    sim = build("sim", lambda: SimConfig(**{k: get("sim", k, getattr(base.sim, k)) for k in _SIM_KEYS}))
    sc = Scenario(
        name=get("", "name", base.name),
        system=get("system", "name", base.system),
        n=get("system", "n", base.n),
        lambdas=get("clf", "lambdas", base.lambdas),
        center=get("obstacle", "center", base.center),
        radius=get("obstacle", "radius", base.radius),
        nominal=nom, shaped=shp, sim=sim,
        points=get("ics", "points", base.points),
        ring_count=get("ics", "ring_count", base.ring_count),
        ring_radius=get("ics", "ring_radius", base.ring_radius),
        ring_phase=get("ics", "ring_phase", base.ring_phase),
    )
    _validate(sc, path, header_line)
    return sc


def _validate(sc, path, header_line):
    def fail(section, msg):
        raise ConfigError(msg, path, header_line.get(section, 1))

    if sc.n not in (2, 3):
        fail("system", f"n must be 2 or 3, got {sc.n}")
    if sc.system != "integrator" and sc.n != 2:
        fail("system", f"system {sc.system!r} needs n = 2")
    if len(sc.lambdas) != sc.n or min(sc.lambdas) <= 0.0:
        fail("clf", f"lambdas must be {sc.n} positive numbers")
    if len(sc.center) != sc.n:
        fail("obstacle", f"center must have {sc.n} entries")
    if not sc.radius > 0.0:
        fail("obstacle", "radius must be positive")
    if sc.ring_count < 0:
        fail("ics", "ring_count must be non-negative")
    if sc.ring_count and sc.n != 2:
        fail("ics", "ring initial conditions need n = 2")
    for p in sc.points:
        if len(p) != sc.n:
            fail("ics", f"initial condition {p} does not have {sc.n} entries")


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc.strerror}", path) from None
    return loads(text, path)


def save(sc, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(sc))


DEFAULT = Scenario(name="default-integrator", ring_count=12, ring_radius=6.0,
                 sim=SimConfig(dt=1e-2, t_final=50.0))

BUILTIN = {
    "default": DEFAULT,
    "fig1": replace(DEFAULT, name="fig1-integrator-nominal"),
    "fig2": replace(DEFAULT, name="fig2-integrator-shaped", ring_count=0,
                    points=((4.0, 4.0), (-4.0, 4.0), (0.5, 6.0), (-0.5, 6.0))),
    "fig3": replace(DEFAULT, name="fig3-f1", system="f1"),
    "fig4": replace(DEFAULT, name="fig4-f2", system="f2"),
}
