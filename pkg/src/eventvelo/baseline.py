"""Frame-style stereo intersection, the comparison baseline for the yield criterion.

Events of each view are accumulated over fixed time windows and reduced to a
centroid. A window yields a 3D point only if both views have a centroid and
the second lies within `epipolar_px` of the epipolar line of the first.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .geometry import CameraModel
from .io import EventStream, RigConfig


def _skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])


def fundamental_matrix(cam_a: CameraModel, cam_b: CameraModel) -> np.ndarray:
    """F with x_b^T F x_a = 0 for corresponding pixels."""
    C = np.r_[cam_a.center, 1.0]
    e_b = cam_b.Pi @ C
    return _skew(e_b) @ cam_b.Pi @ np.linalg.pinv(cam_a.Pi)


def triangulate_point(cam_a: CameraModel, cam_b: CameraModel, xa, xb) -> np.ndarray:
    """Linear (DLT) two-view triangulation."""
    A = np.vstack([xa[0] * cam_a.Pi[2] - cam_a.Pi[0],
                   xa[1] * cam_a.Pi[2] - cam_a.Pi[1],
                   xb[0] * cam_b.Pi[2] - cam_b.Pi[0],
                   xb[1] * cam_b.Pi[2] - cam_b.Pi[1]])
    X = np.linalg.svd(A)[2][-1]
    return X[:3] / X[3]


def _window_centroids(stream: EventStream, t_start: int, window_us: int, n_windows: int,
                      min_events: int) -> tuple[np.ndarray, np.ndarray]:
    b = (stream.t - t_start) // window_us
    ok = (b >= 0) & (b < n_windows)
    b = b[ok]
    cnt = np.bincount(b, minlength=n_windows)
    sx = np.bincount(b, weights=stream.x[ok], minlength=n_windows)
    sy = np.bincount(b, weights=stream.y[ok], minlength=n_windows)
    has = cnt >= min_events
    with np.errstate(invalid="ignore", divide="ignore"):
        cen = np.column_stack([sx / cnt, sy / cnt])
    return cen, has


def corresponding_point_baseline(streams: Mapping[int, EventStream], rig: RigConfig,
                                 window_us: int = 20, epipolar_px: float = 2.0,
                                 min_events: int = 3) -> list[tuple[int, np.ndarray]]:
    """(window start in us, 3D point) for every window passing the epipolar gate.

    Uses the two lowest-numbered cameras.
    """
    ids = sorted(streams)[:2]
    if len(ids) < 2:
        return []
    sa, sb = streams[ids[0]], streams[ids[1]]
    if len(sa) == 0 or len(sb) == 0:
        return []
    ca, cb = rig.cameras[ids[0]], rig.cameras[ids[1]]
    t_start = int(min(sa.t[0], sb.t[0]))
    t_end = int(max(sa.t[-1], sb.t[-1]))
    n = (t_end - t_start) // window_us + 1
    cen_a, has_a = _window_centroids(sa, t_start, window_us, n, min_events)
    cen_b, has_b = _window_centroids(sb, t_start, window_us, n, min_events)
    F = fundamental_matrix(ca, cb)
    out = []
    for w in np.flatnonzero(has_a & has_b):
        xa = np.r_[cen_a[w], 1.0]
        xb = np.r_[cen_b[w], 1.0]
        l = F @ xa
        dist = abs(xb @ l) / np.hypot(l[0], l[1])
        if dist <= epipolar_px:
            out.append((t_start + int(w) * window_us, triangulate_point(ca, cb, cen_a[w], cen_b[w])))
    return out
