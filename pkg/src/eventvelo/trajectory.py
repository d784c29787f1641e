"""Per-view line fitting and line-based triangulation of the 3D trajectory."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateInput, IsotropicCloud, NearParallelPlanes
from .geometry import CameraModel, Line2D, Line3D, back_project_plane, pixel_ray
from .io import RigConfig

PARALLEL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Fit2D:
    line: Line2D
    rms: float
    inliers: int
    mask: np.ndarray | None = None  # which input points were used, if trimmed


def _tls(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    centroid = pts.mean(axis=0)
    d = pts - centroid
    scatter = d.T @ d
    w, v = np.linalg.eigh(scatter)
    if abs(w[1] - w[0]) <= 1e-12 * max(abs(w[1]), np.finfo(float).tiny):
        raise IsotropicCloud("scatter eigenvalues coincide, line direction is undefined")
    direction = v[:, 1]
    # Orient along the order in which the points were given.
    if (pts[-1] - pts[0]) @ direction < 0:
        direction = -direction
    return centroid, direction


def fit_line_2d(points, trim_px: float | None = None, max_rounds: int = 10) -> Fit2D:
    """Total-least-squares line through pixel points.

    The direction is the principal eigenvector of the centered scatter matrix,
    signed to point from the first toward the last input point. With
    `trim_px`, points farther than max(trim_px, 3 robust sigmas) from the
    line are dropped and the fit repeated until the inlier set is stable.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(np.unique(pts, axis=0)) < 2:
        raise DegenerateInput("line fit needs at least two distinct points")
    mask = np.ones(len(pts), dtype=bool)
    centroid, direction = _tls(pts)
    if trim_px is not None:
        for _ in range(max_rounds):
            normal = np.array([-direction[1], direction[0]])
            dist = np.abs((pts - centroid) @ normal)
            sigma = 1.4826 * np.median(dist[mask])
            new = dist <= max(trim_px, 3.0 * sigma)
            if np.array_equal(new, mask) or np.count_nonzero(new) < 2:
                break
            mask = new
            sub = pts[mask]
            if len(np.unique(sub, axis=0)) < 2:
                raise DegenerateInput("fewer than two distinct inliers remain after trimming")
            centroid, direction = _tls(sub)
    line = Line2D(centroid, direction)
    resid = line.distance(pts[mask])
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return Fit2D(line, rms, int(np.count_nonzero(mask)), None if trim_px is None else mask)


def _planes(fits: Mapping[int, Fit2D], cameras: Mapping[int, CameraModel]):
    ids = sorted(fits)
    normals, offsets = [], []
    for cid in ids:
        n, d = back_project_plane(cameras[cid], fits[cid].line)
        normals.append(n)
        offsets.append(d)
    return ids, np.array(normals), np.array(offsets)


def triangulate_line_3d(fits: Mapping[int, Fit2D], rig: RigConfig) -> Line3D:
    """Intersect the planes back-projected from each view's 2D line.

    With two views this is the exact plane intersection; with more it is the
    line minimizing squared plane-incidence residuals. The origin is the
    point on the line closest to the rig's muzzle, and the direction follows
    the 2D direction of the lowest-numbered view.
    """
    if len(fits) < 2:
        raise DegenerateInput("triangulation needs at least two views")
    ids, N, d = _planes(fits, rig.cameras)
    worst = max(np.linalg.norm(np.cross(N[i], N[j]))
                for i in range(len(ids)) for j in range(i + 1, len(ids)))
    if worst < PARALLEL_TOL:
        raise NearParallelPlanes("back-projected planes are parallel; cameras are coplanar "
                                 "with the trajectory")
    if len(ids) == 2:
        direction = np.cross(N[0], N[1])
        direction /= np.linalg.norm(direction)
    else:
        _, v = np.linalg.eigh(N.T @ N)
        direction = v[:, 0]
    # Offset the muzzle orthogonally to the line until the plane residuals are
    # least squares; the result is the line point closest to the muzzle.
    muzzle = rig.muzzle
    basis = np.linalg.svd(direction.reshape(1, 3))[2][1:].T
    y = np.linalg.lstsq(N @ basis, d - N @ muzzle, rcond=None)[0]
    origin = muzzle + basis @ y

    cam = rig.cameras[ids[0]]
    ref_dir = fits[ids[0]].line.dir
    h0 = cam.Pi @ np.r_[origin, 1.0]
    h1 = cam.Pi @ np.r_[origin + direction * 1e-3, 1.0]
    img_step = h1[:2] / h1[2] - h0[:2] / h0[2]
    if img_step @ ref_dir < 0:
        direction = -direction
    return Line3D(origin, direction)


def line_to_closest_arcs(line: Line3D, cam: CameraModel, px) -> np.ndarray:
    """Arc length on `line` of the point closest to each pixel's viewing ray.

    Rays (nearly) parallel to the line yield NaN.
    """
    m = pixel_ray(cam, px)
    c = cam.center
    u = line.dir
    w0 = line.origin - c
    b = m @ u
    dd = m @ w0
    e = w0 @ u
    denom = 1.0 - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (b * dd - e) / denom
    s[denom < 1e-12] = np.nan
    return s
