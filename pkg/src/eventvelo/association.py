"""Reprojection-error association of leading-edge events with trajectory points.

Every event is compared against the projections, in its own camera, of
search points spaced `step` apart along the 3D trajectory. An event keeps the
closest search point if that distance is below the reception threshold; the
pairing of that point with the event's timestamp is one observation.

The projected search points of one camera lie on a single image line, ordered
monotonically by arc length, so the closest one can be located by bisection
on the along-line coordinate and confirmed by exact distances on a small
window of neighbours. The result is identical to the exhaustive scan, which
is kept as `associate_bruteforce` and used when the monotone ordering cannot
be established.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput, PointBehindCamera, ValidationError
from .geometry import CameraModel, Line3D, project_many
from .io import ObservationPoint, RigConfig
from .leading_edge import LeadingEdgeSet
from .trajectory import line_to_closest_arcs

__all__ = ["SearchGrid", "ObservationPoint", "bound_search_range", "associate",
           "associate_bruteforce", "EventMatch"]

DEFAULT_MARGIN_M = 0.05
_WINDOW = 3


@dataclass(frozen=True, eq=False)
class SearchGrid:
    line: Line3D
    s_min: float
    s_max: float
    step: float

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ValidationError(f"empty search range [{self.s_min}, {self.s_max}]")
        if not self.step > 0:
            raise ValidationError("search step must be positive")

    @property
    def count(self) -> int:
        return int(math.floor((self.s_max - self.s_min) / self.step + 1e-9)) + 1

    def arcs(self) -> np.ndarray:
        return self.s_min + np.arange(self.count) * self.step

    def points(self) -> np.ndarray:
        return self.line.point_at(self.arcs())


@dataclass(eq=False)
class EventMatch:
    """Per-event association record: grid index (or -1) and final residual."""

    cam: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    index: np.ndarray
    resid: np.ndarray


def bound_search_range(edges: Sequence[LeadingEdgeSet], line: Line3D, rig: RigConfig,
                       margin: float = DEFAULT_MARGIN_M, step: float | None = None) -> SearchGrid:
    """Arc-length window covering every leading-edge event, padded by `margin`."""
    arcs = []
    for e in edges:
        if len(e) == 0:
            continue
        s = line_to_closest_arcs(line, rig.cameras[e.cam], e.events.xy)
        arcs.append(s[np.isfinite(s)])
    arcs = np.concatenate(arcs) if arcs else np.zeros(0)
    if len(arcs) == 0:
        raise EmptyInput("no leading-edge events to bound the search range")
    return SearchGrid(line, float(arcs.min() - margin), float(arcs.max() + margin),
                      rig.step_m if step is None else step)


def _distances(px: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    dx = px[..., 0] - x
    dy = px[..., 1] - y
    return np.sqrt(dx * dx + dy * dy)


def _scan(px: np.ndarray, valid: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Exhaustive min over grid points; ties go to the lowest index."""
    best_j = np.full(len(x), -1, dtype=np.int64)
    best_d = np.full(len(x), np.inf)
    cols = np.flatnonzero(valid)
    if len(cols) == 0:
        return best_j, best_d
    pv = px[cols]
    for lo in range(0, len(x), 64):
        hi = min(lo + 64, len(x))
        d = _distances(pv[None, :, :], x[lo:hi, None], y[lo:hi, None])
        k = np.argmin(d, axis=1)  # first occurrence of the minimum
        best_j[lo:hi] = cols[k]
        best_d[lo:hi] = d[np.arange(hi - lo), k]
    return best_j, best_d


def _indexed(px: np.ndarray, valid: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Bisection on the along-line coordinate plus an exact local window.

    Returns None when the projected grid is not strictly monotone along the
    image line, in which case the caller falls back to the exhaustive scan.
    """
    cols = np.flatnonzero(valid)
    if len(cols) < 2 or not np.all(np.diff(cols) == 1):
        return None
    lo_j, hi_j = cols[0], cols[-1] + 1
    pv = px[lo_j:hi_j]
    axis = pv[-1] - pv[0]
    L = np.hypot(*axis)
    if not L > 0:
        return None
    axis = axis / L
    u = (pv - pv[0]) @ axis
    if not np.all(np.diff(u) > 0):
        return None
    ue = (np.column_stack([x, y]) - pv[0]) @ axis
    pos = np.searchsorted(u, ue)
    offs = np.arange(-_WINDOW, _WINDOW + 1)
    cand = np.clip(pos[:, None] + offs[None, :], 0, len(u) - 1)
    d = _distances(pv[cand], x[:, None], y[:, None])
    # Lexicographic (distance, index) minimum; clipped duplicates are harmless.
    dmin = d.min(axis=1, keepdims=True)
    j = np.where(d == dmin, cand, np.iinfo(np.int64).max).min(axis=1)
    return j + lo_j, dmin[:, 0]


def match_camera(cam: CameraModel, cam_id: int, grid: SearchGrid, edge: LeadingEdgeSet,
                 omega: float, exhaustive: bool = False) -> EventMatch:
    x = edge.events.x.astype(float)
    y = edge.events.y.astype(float)
    px, valid = project_many(cam, grid.points())
    if not np.any(valid):
        raise PointBehindCamera(f"camera {cam_id}: every search point lies behind the camera")
    res = None if exhaustive else _indexed(px, valid, x, y)
    j, d = _scan(px, valid, x, y) if res is None else res
    ok = d < omega
    index = np.where(ok, j, -1)
    resid = np.where(ok, d, np.inf)
    return EventMatch(cam_id, edge.events.t.copy(), x, y, index, resid)


def _collect(matches: Sequence[EventMatch], grid: SearchGrid) -> list[ObservationPoint]:
    out = []
    s = grid.arcs()
    for m in matches:
        for i in np.flatnonzero(m.index >= 0):
            arc = float(s[m.index[i]])
            out.append(ObservationPoint(grid.line.point_at(arc), arc, int(m.t[i]), m.cam,
                                        float(m.resid[i])))
    out.sort(key=lambda o: (o.t, o.cam, o.arc))
    return out


def match_all(edges: Sequence[LeadingEdgeSet], grid: SearchGrid, rig: RigConfig,
              omega: float | None = None, threads: int = 1,
              exhaustive: bool = False) -> list[EventMatch]:
    omega = rig.omega_px if omega is None else omega
    for e in edges:
        if e.cam not in rig.cameras:
            raise ValidationError(f"events from camera {e.cam}, which is not in the rig")
    jobs = [(rig.cameras[e.cam], e.cam, grid, e, omega, exhaustive) for e in edges]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: match_camera(*a), jobs))
    return [match_camera(*a) for a in jobs]


def associate(edges: Sequence[LeadingEdgeSet], grid: SearchGrid, rig: RigConfig,
              omega: float | None = None, threads: int = 1) -> list[ObservationPoint]:
    """Observation set built from every event whose best reprojection error is below omega.

    Observations are ordered by (timestamp, camera, arc).
    """
    return _collect(match_all(edges, grid, rig, omega, threads), grid)


def associate_bruteforce(edges: Sequence[LeadingEdgeSet], grid: SearchGrid, rig: RigConfig,
                         omega: float | None = None) -> list[ObservationPoint]:
    """Same contract as `associate`, scanning every (event, search point) pair."""
    return _collect(match_all(edges, grid, rig, omega, exhaustive=True), grid)
