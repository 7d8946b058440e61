"""CSV trajectory files, equilibrium tables, run summaries and SVG portraits.

Floats are written with 17 significant digits so every value re-parses to
the identical double. Files use UTF-8 and UNIX newlines.
"""

import csv
import io
import math

import numpy as np

from .simulate import Terminal, TrajectoryRecord


def fmt(v):
    return format(float(v), ".17g")


def trajectory_header(rec):
    n = rec.x.shape[1]
    m = rec.u.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
    cols += ["w", "h", "V", "case"]
    if rec.shaped:
        k = rec.omega.shape[1]
        cols += ["D", "h_D"] + [f"omega{i + 1}" for i in range(k)]
        cols += [f"Q{i + 1}{j + 1}" for i in range(n) for j in range(n)]
    return cols


def trajectory_csv(rec):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(trajectory_header(rec))
    for k in range(len(rec)):
        row = [fmt(rec.t[k])] + [fmt(v) for v in rec.x[k]] + [fmt(v) for v in rec.u[k]]
        row += [fmt(rec.w[k]), fmt(rec.h[k]), fmt(rec.V[k]), rec.case[k]]
        if rec.shaped:
            row += [fmt(rec.D[k]), fmt(rec.h_D[k])] + [fmt(v) for v in rec.omega[k]]
            row += [fmt(v) for v in rec.Q[k].ravel()]
        wr.writerow(row)
    return buf.getvalue()


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_trajectory_csv(path, terminal=None):
    """Re-parse a trajectory CSV into a TrajectoryRecord."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    idx = {name: i for i, name in enumerate(header)}

    def block(prefix):
        names = [c for c in header if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return np.array([[float(r[idx[c]]) for c in names] for r in body])

    col = lambda name: np.array([float(r[idx[name]]) for r in body])
    kw = {}
    if "D" in idx:
        Qcols = block("Q")
        n = int(round(math.sqrt(Qcols.shape[1])))
        kw = dict(D=col("D"), h_D=col("h_D"), omega=block("omega"), Q=Qcols.reshape(-1, n, n))
    return TrajectoryRecord(
        t=col("t"), x=block("x"), u=block("u"), w=col("w"), h=col("h"), V=col("V"),
        case=[r[idx["case"]] for r in body], terminal=terminal or Terminal("t_final"), **kw,
    )


def summary_text(rec, controller, x0, runtime=None):
    lines = [
        f"controller = {controller}",
        "ic = " + ", ".join(fmt(v) for v in x0),
        f"terminal = {rec.terminal.describe()}",
        "final_x = " + ", ".join(fmt(v) for v in rec.final_x),
        f"samples = {len(rec)}",
        f"min_h = {fmt(rec.min_h)}",
    ]
    if rec.shaped:
        lines.append(f"min_h_D = {fmt(rec.min_h_D)}")
        lines.append(f"max_rotation_drift = {fmt(rec.max_rotation_drift)}")
    if runtime is not None:
        lines.append(f"runtime_s = {runtime:.3f}")
    return "\n".join(lines) + "\n"


EQ_HEADER = [
    "x1", "x2", "kind", "c", "tangent_form_value", "verdict", "full_matrix_verdict",
    "eig1_re", "eig1_im", "eig2_re", "eig2_im", "residual", "note",
]


def equilibria_csv(reports):
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(EQ_HEADER)
    opt = lambda v: "" if v is None else fmt(v)
    for r in reports:
        eig = list(r.eigenvalues) + [complex("nan")] * (2 - len(r.eigenvalues))
        wr.writerow([
            fmt(r.location[0]), fmt(r.location[1]), r.kind, opt(r.c), opt(r.tangent_form_value),
            r.verdict, r.full_matrix_verdict or "",
            fmt(eig[0].real), fmt(eig[0].imag), fmt(eig[1].real), fmt(eig[1].imag),
            fmt(r.residual), r.note,
        ])
    return buf.getvalue()


# SVG phase portrait

_COLORS = {"nominal": "#1f5fbf", "shaped": "#1a8a3a"}


class _Frame:
    def __init__(self, lo, hi, size=600, pad=30):
        self.lo, self.hi, self.size, self.pad = lo, hi, size, pad
        self.scale = (size - 2 * pad) / (hi - lo)

    def px(self, x, y):
        return (self.pad + (x - self.lo) * self.scale, self.size - self.pad - (y - self.lo) * self.scale)


def _n(v):
    return f"{v:.2f}"


def _decimate(x, limit=1500):
    if x.shape[0] <= limit:
        return x
    idx = np.unique(np.linspace(0, x.shape[0] - 1, limit).round().astype(int))
    return x[idx]


def phase_portrait_svg(title, obstacle, clf_level, runs, equilibria, box=(-7.0, 7.0)):
    """Render trajectories over the obstacle and a CLF level set.

    ``obstacle`` is (center, radius); ``clf_level`` is (lambdas, level) and
    draws the ellipse V = level; ``runs`` is a list of (controller, record);
    ``equilibria`` a list of (point, verdict).
    """
    fr = _Frame(*box)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{fr.size}" height="{fr.size}" '
        f'viewBox="0 0 {fr.size} {fr.size}">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{fr.size}" height="{fr.size}" fill="white"/>',
    ]
    ax0 = fr.px(box[0], 0.0)
    ax1 = fr.px(box[1], 0.0)
    ay0 = fr.px(0.0, box[0])
    ay1 = fr.px(0.0, box[1])
    out.append(f'<line x1="{_n(ax0[0])}" y1="{_n(ax0[1])}" x2="{_n(ax1[0])}" y2="{_n(ax1[1])}" stroke="#bbbbbb"/>')
    out.append(f'<line x1="{_n(ay0[0])}" y1="{_n(ay0[1])}" x2="{_n(ay1[0])}" y2="{_n(ay1[1])}" stroke="#bbbbbb"/>')
    lambdas, level = clf_level
    if level > 0.0:
        cx, cy = fr.px(0.0, 0.0)
        rx = math.sqrt(2.0 * level / lambdas[0]) * fr.scale
        ry = math.sqrt(2.0 * level / lambdas[1]) * fr.scale
        out.append(f'<ellipse cx="{_n(cx)}" cy="{_n(cy)}" rx="{_n(rx)}" ry="{_n(ry)}" fill="none" '
                   'stroke="#999999" stroke-dasharray="4 3"/>')
    (ocx, ocy), rad = obstacle
    px, py = fr.px(ocx, ocy)
    out.append(f'<circle cx="{_n(px)}" cy="{_n(py)}" r="{_n(rad * fr.scale)}" fill="#f2c4c4" stroke="#a02020"/>')
    for controller, rec in runs:
        if rec is None:
            continue
        pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in (fr.px(*p) for p in _decimate(rec.x[:, :2])))
        dash = ' stroke-dasharray="6 3"' if controller == "shaped" else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{_COLORS[controller]}" stroke-width="1.5"{dash}/>')
        sx, sy = fr.px(*rec.x[0, :2])
        out.append(f'<circle cx="{_n(sx)}" cy="{_n(sy)}" r="3" fill="{_COLORS[controller]}"/>')
    ox, oy = fr.px(0.0, 0.0)
    out.append(f'<circle cx="{_n(ox)}" cy="{_n(oy)}" r="5" fill="black"/>')
    for point, verdict in equilibria:
        ex, ey = fr.px(*point[:2])
        fill = "#d00000" if verdict == "asymptotically_stable" else "white"
        out.append(f'<circle cx="{_n(ex)}" cy="{_n(ey)}" r="5" fill="{fill}" stroke="#d00000" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
