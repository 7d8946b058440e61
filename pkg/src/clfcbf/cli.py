"""Command-line front end.

Exit codes: 0 success, 1 check failed (gradcheck tolerance), 2 configuration
error, 3 simulation error.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import scenario as scn
from .equilibria import find_boundary_equilibria, find_interior_equilibria
from .errors import ClfCbfError, ConfigError
from .gradcheck import TOLERANCE, run_gradcheck
from .models import builtin_system
from .output import (
    equilibria_csv, phase_portrait_svg, summary_text, trajectory_csv, write_text,
)
from .simulate import simulate_nominal, simulate_shaped, sweep

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SIM = 0, 1, 2, 3

FIGURES = {
    1: ("fig1", ("nominal",)),
    2: ("fig2", ("shaped",)),
    3: ("fig3", ("nominal", "shaped")),
    4: ("fig4", ("nominal", "shaped")),
}

log = logging.getLogger("clfcbf")


def load_scenario(spec):
    """A scenario file path, or 'builtin:NAME' for one of the shipped scenarios."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in scn.BUILTIN:
            raise ConfigError(f"unknown builtin scenario {name!r}; choose from {', '.join(scn.BUILTIN)}")
        return scn.BUILTIN[name]
    if not os.path.exists(spec):
        raise ConfigError("scenario file not found", spec)
    return scn.load(spec)


def parse_ic(text, n):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--ic must be {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise ConfigError(f"--ic must have {n} entries, got {len(vals)}")
    return vals


def _gains(sc, controller):
    return sc.nominal if controller == "nominal" else sc.shaped


def _equilibria(sc):
    sys_, V, h = sc.build()
    gains = sc.nominal
    reports = []
    if sc.n == 2:
        reports += find_boundary_equilibria(sys_, V, h, gains)
    reports += find_interior_equilibria(sys_, V, gains, h=h)
    return reports


def _known_points(reports):
    return [tuple(r.location) for r in reports]


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def cmd_simulate(args):
    sc = load_scenario(args.scenario)
    sys_, V, h = sc.build()
    x0 = parse_ic(args.ic, sc.n)
    if h.value(np.array(x0)) < 0.0:
        raise ConfigError(f"initial condition {x0} lies inside the obstacle")
    known = _known_points(_equilibria(sc)) if args.controller == "nominal" else ()
    run = simulate_nominal if args.controller == "nominal" else simulate_shaped
    t0 = time.perf_counter()
    rec = run(sys_, V, h, _gains(sc, args.controller), x0, sc.sim, known)
    runtime = time.perf_counter() - t0
    _ensure_parent(args.out)
    write_text(args.out, trajectory_csv(rec))
    write_text(args.out + ".summary.txt", summary_text(rec, args.controller, x0, runtime))
    print(f"{rec.terminal.describe()} min_h={rec.min_h:.6g} samples={len(rec)} runtime={runtime:.2f}s")
    if rec.terminal.kind == "error":
        print(f"simulation error: {rec.terminal.reason}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


def cmd_equilibria(args):
    sc = load_scenario(args.scenario)
    reports = _equilibria(sc)
    text = equilibria_csv(reports)
    if args.out:
        _ensure_parent(args.out)
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    for r in reports:
        if r.disagreement:
            log.warning("tangent-space and full-matrix tests disagree at %s (%s vs %s)",
                        r.location.tolist(), r.verdict, r.full_matrix_verdict)
    return EXIT_OK


def _run_grid(sc, controllers, outdir, prefix):
    sys_, V, h = sc.build()
    reports = _equilibria(sc)
    known = _known_points(reports)
    runs = []
    lines = []
    status = EXIT_OK
    for controller in controllers:
        res = sweep(sys_, V, h, _gains(sc, controller), sc.initial_conditions, controller, sc.sim,
                    known if controller == "nominal" else ())
        for k, (x0, rec, err) in enumerate(zip(res.ics, res.records, res.errors)):
            name = f"{prefix}_{controller}_ic{k:02d}.csv"
            if rec is None:
                lines.append(f"{name}: error({err})")
                status = EXIT_SIM
                continue
            write_text(os.path.join(outdir, name), trajectory_csv(rec))
            lines.append(f"{name}: ic=({', '.join(f'{v:.6g}' for v in x0)}) {rec.terminal.describe()} "
                         f"final=({', '.join(f'{v:.6g}' for v in rec.final_x)}) min_h={rec.min_h:.6g}")
            if rec.terminal.kind == "error":
                status = EXIT_SIM
            runs.append((controller, rec))
        for key, count in res.summary.items():
            lines.append(f"summary {controller}: {count} x {key}")
    return reports, runs, lines, status


def cmd_sweep(args):
    sc = load_scenario(args.scenario)
    os.makedirs(args.outdir, exist_ok=True)
    _, _, lines, status = _run_grid(sc, (args.controller,), args.outdir, "sweep")
    write_text(os.path.join(args.outdir, "summary.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return status


def cmd_reproduce(args):
    key, controllers = FIGURES[args.figure]
    sc = scn.BUILTIN[key]
    os.makedirs(args.outdir, exist_ok=True)
    prefix = f"fig{args.figure}"
    reports, runs, lines, status = _run_grid(sc, controllers, args.outdir, prefix)
    boundary = [r for r in reports if r.kind == "boundary"]
    level = min((0.5 * float(np.dot(np.array(sc.lambdas) * r.location, r.location)) for r in boundary
                 if r.verdict == "asymptotically_stable"), default=0.0)
    svg = phase_portrait_svg(
        f"Figure {args.figure}: {sc.name}",
        (sc.center, sc.radius), (sc.lambdas, level), runs,
        [(r.location, r.verdict) for r in reports],
    )
    write_text(os.path.join(args.outdir, f"{prefix}.svg"), svg)
    write_text(os.path.join(args.outdir, f"{prefix}_summary.txt"), "\n".join(lines) + "\n")
    print("\n".join(lines))
    return status


def cmd_gradcheck(args):
    sc = load_scenario(args.scenario)
    if args.samples < 0:
        raise ConfigError("--samples must be non-negative")
    if args.samples == 0:
        print("warning: 0 samples requested, nothing to check", file=sys.stderr)
        return EXIT_OK
    sys_, V, h = sc.build()
    systems = [sys_]
    if args.synthetic and sc.n == 2 and sys_.name != "synthetic":
        systems.append(builtin_system("synthetic"))
    ok = True
    for s in systems:
        res = run_gradcheck(s, V, h, args.samples, args.seed, corrupt=args.corrupt_gradient)
        verdict = "ok" if res.passed else "FAILED"
        print(f"{s.name}: samples={res.samples} max_rel_grad_x={res.max_rel_x:.3e} "
              f"max_rel_grad_Q={res.max_rel_q:.3e} tol={TOLERANCE:g} {verdict}")
        if not res.passed:
            ok = False
            w = res.worst
            print(f"  worst sample: x={w.x.tolist()} Q={w.Q.tolist()}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_scenario(args):
    text = scn.dumps(scn.BUILTIN[args.builtin])
    if args.out:
        _ensure_parent(args.out)
        write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="clfcbf", description="CLF-CBF QP controllers: simulation and equilibrium analysis.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one initial condition and write a CSV")
    s.add_argument("--scenario", required=True, help="scenario file, or builtin:NAME")
    s.add_argument("--controller", choices=("nominal", "shaped"), default="nominal")
    s.add_argument("--ic", required=True, help='initial state, e.g. "4,4"')
    s.add_argument("--out", required=True, help="CSV path; a .summary.txt sidecar is written next to it")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("equilibria", help="tabulate closed-loop equilibria of the nominal controller")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_equilibria)

    s = sub.add_parser("sweep", help="simulate every initial condition listed in the scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--controller", choices=("nominal", "shaped"), default="nominal")
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("reproduce", help="rerun a figure's scenario, writing CSVs and an SVG portrait")
    s.add_argument("--figure", type=int, choices=sorted(FIGURES), required=True)
    s.add_argument("--outdir", required=True)
    s.set_defaults(func=cmd_reproduce)

    s = sub.add_parser("gradcheck", help="compare analytic gradients of D with finite differences")
    s.add_argument("--scenario", required=True)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--no-synthetic", dest="synthetic", action="store_false",
                   help="skip the extra non-constant-g system")
    s.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("scenario", help="print a built-in scenario file")
    s.add_argument("--builtin", choices=sorted(scn.BUILTIN), default="default")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scenario)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ClfCbfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
