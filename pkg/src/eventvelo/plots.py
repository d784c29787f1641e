"""Tidy plot-data CSVs and a dependency-free SVG renderer.

Output is byte-stable: numbers are written with fixed formats and nothing
depends on wall-clock time or environment.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .io import EventStream, ObservationPoint
from .leading_edge import LeadingEdgeSet, RadialHistogram
from .motion import DecayFit
from .trajectory import Fit2D

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")


def histogram_csv(hist: RadialHistogram) -> str:
    buf = io.StringIO()
    buf.write("r_bin,t_bin,count\n")
    for a, b, c in hist.rows():
        buf.write(f"{a},{b},{c}\n")
    return buf.getvalue()


def classified_events_csv(stream: EventStream, edge: LeadingEdgeSet) -> str:
    kept = np.zeros(len(stream), dtype=np.int64)
    kept[edge.indices] = 1
    buf = io.StringIO()
    buf.write("x,y,t_us,p,kept\n")
    for row in zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist(),
                   kept.tolist()):
        buf.write("%d,%d,%d,%d,%d\n" % row)
    return buf.getvalue()


def line2d_csv(fit: Fit2D) -> str:
    # Column names are part of the file contract; line_px/point_py hold the
    # x/y pixel coordinates of the line's anchor point.
    p, d = fit.line.point, fit.line.dir
    return ("line_px,point_py,dir_x,dir_y,rms_px\n"
            f"{p[0]:.17g},{p[1]:.17g},{d[0]:.17g},{d[1]:.17g},{fit.rms:.17g}\n")


def fit_curve_rows(obs: Sequence[ObservationPoint], fit: DecayFit) -> list[tuple[int, float, float]]:
    t = np.array([o.t for o in obs], dtype=np.int64)
    arc = np.array([o.arc for o in obs], dtype=float)
    model = np.atleast_1d(fit.displacement(t)) if len(t) else np.zeros(0)
    return list(zip(t.tolist(), arc.tolist(), model.tolist()))


def fit_curve_csv(obs: Sequence[ObservationPoint], fit: DecayFit) -> str:
    buf = io.StringIO()
    buf.write("t_us,arc_m,fit_m\n")
    for t, a, m in fit_curve_rows(obs, fit):
        buf.write(f"{t},{a:.17g},{m:.17g}\n")
    return buf.getvalue()


def observation_scatter_csv(obs: Sequence[ObservationPoint], muzzle) -> str:
    buf = io.StringIO()
    buf.write("X,Y,Z,t_us,cam,kind\n")
    m = np.asarray(muzzle, dtype=float)
    buf.write(f"{m[0]:.17g},{m[1]:.17g},{m[2]:.17g},,,muzzle\n")
    for o in obs:
        buf.write(f"{o.P[0]:.17g},{o.P[1]:.17g},{o.P[2]:.17g},{o.t},{o.cam},observation\n")
    return buf.getvalue()


# ------------------------------------------------------------------------ SVG


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    kind: str = "scatter"  # or "line"
    color: str = PALETTE[0]
    label: str = ""


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + step * 1e-9, step)


def render_svg(series: Sequence[Series], xlabel: str, ylabel: str, title: str = "",
               width: int = 640, height: int = 420, max_points: int = 4000) -> str:
    """Minimal SVG 1.1 scatter/line chart with axes and tick labels."""
    ml, mr, mt, mb = 70, 20, 30, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = [np.asarray(s.x, dtype=float) for s in series if len(s.x)]
    ys = [np.asarray(s.y, dtype=float) for s in series if len(s.y)]
    if xs:
        xlo, xhi = min(a.min() for a in xs), max(a.max() for a in xs)
        ylo, yhi = min(a.min() for a in ys), max(a.max() for a in ys)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0

    def sx(v):
        return ml + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return mt + ph - (v - ylo) / (yhi - ylo) * ph

    out = [f'<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" '
           f'height="{height}" viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<g stroke="black" stroke-width="1">'
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}"/>'
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}"/></g>']
    out.append('<g font-family="sans-serif" font-size="11" fill="black">')
    for v in _ticks(xlo, xhi):
        X = sx(v)
        out.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 4}" stroke="black"/>'
                   f'<text x="{X:.2f}" y="{mt + ph + 16}" text-anchor="middle">{v:.4g}</text>')
    for v in _ticks(ylo, yhi):
        Y = sy(v)
        out.append(f'<line x1="{ml - 4}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>'
                   f'<text x="{ml - 6}" y="{Y + 4:.2f}" text-anchor="end">{v:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {mt + ph / 2:.1f})">{ylabel}</text>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>')
    out.append("</g>")
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if len(x) > max_points:
            idx = np.linspace(0, len(x) - 1, max_points).round().astype(int)
            x, y = x[idx], y[idx]
        if s.kind == "line" and len(x) > 1:
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{s.color}" stroke-width="1.5" points="{pts}"/>')
        else:
            out.append(f'<g fill="{s.color}">')
            out.extend(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="1.5"/>' for a, b in zip(x, y))
            out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
