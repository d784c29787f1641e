"""Pinhole camera models and the small geometric types used across the pipeline.

World frame is right-handed, in meters, with its origin at the gun muzzle.
Pixel coordinates are 0-based (column x, row y). No lens distortion is modelled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PointBehindCamera, ValidationError

# Homogeneous scale below which a point is treated as not imageable.
MIN_DEPTH = 1e-12


@dataclass(frozen=True)
class Event:
    x: int
    y: int
    t: int  # microseconds
    p: int  # polarity, -1 or +1
    cam: int = 0


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    ox: float
    oy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.ox < self.width and 0 < self.oy < self.height):
            raise ValidationError(
                f"principal point ({self.ox}, {self.oy}) outside sensor {self.width}x{self.height}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.ox],
                         [0.0, self.fy, self.oy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """World-to-camera rigid transform, X_cam = R @ X_world + T."""

    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        T = np.array(self.T, dtype=float).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(T)):
            raise ValidationError("extrinsics must be finite")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9:
            raise ValidationError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValidationError("rotation matrix must have determinant +1")
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.R.T @ self.T


def compose_projection(intr: CameraIntrinsics, extr: CameraExtrinsics) -> np.ndarray:
    """Return the 3x4 projection matrix K @ [R | T]."""
    Rt = np.hstack([extr.R, extr.T.reshape(3, 1)])
    return intr.K @ Rt


@dataclass(frozen=True, eq=False)
class CameraModel:
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    Pi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Pi = compose_projection(self.intrinsics, self.extrinsics)
        Pi.flags.writeable = False
        object.__setattr__(self, "Pi", Pi)

    @property
    def center(self) -> np.ndarray:
        return self.extrinsics.center

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @classmethod
    def look_at(cls, intr: CameraIntrinsics, center, target, up=(0.0, -1.0, 0.0)) -> "CameraModel":
        """Build a camera at `center` whose optical axis points at `target`.

        `up` is the world direction that should appear toward decreasing image rows.
        """
        center = np.asarray(center, dtype=float)
        z = np.asarray(target, dtype=float) - center
        z /= np.linalg.norm(z)
        x = np.cross(np.asarray(up, dtype=float) * -1.0, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.vstack([x, y, z])
        T = -R @ center
        return cls(intr, CameraExtrinsics(R, T))


@dataclass(frozen=True, eq=False)
class Line2D:
    point: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        p = np.array(self.point, dtype=float).reshape(2)
        d = np.array(self.dir, dtype=float).reshape(2)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValidationError("line direction must be non-zero")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "dir", d / n)

    @property
    def normal(self) -> np.ndarray:
        return np.array([-self.dir[1], self.dir[0]])

    def homogeneous(self) -> np.ndarray:
        """Coefficients (a, b, c) with a*x + b*y + c = 0 and (a, b) a unit normal."""
        n = self.normal
        return np.array([n[0], n[1], -n @ self.point])

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.abs((pts - self.point) @ self.normal)


@dataclass(frozen=True, eq=False)
class Line3D:
    """Arc-length parameterized 3D line: X(s) = origin + s * dir."""

    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self):
        o = np.array(self.origin, dtype=float).reshape(3)
        d = np.array(self.dir, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if not (np.all(np.isfinite(o)) and np.isfinite(n) and n > 0):
            raise ValidationError("Line3D needs a finite origin and non-zero direction")
        object.__setattr__(self, "origin", o)
        if abs(n - 1.0) > 4 * np.finfo(float).eps:  # keep already-unit input bit-exact
            d = d / n
        object.__setattr__(self, "dir", d)

    def point_at(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.dir

    def arc_of(self, X) -> np.ndarray:
        """Arc length of the orthogonal projection of X onto the line."""
        return (np.asarray(X, dtype=float) - self.origin) @ self.dir


def _homogeneous_project(Pi: np.ndarray, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X @ Pi[:, :3].T + Pi[:, 3]


def project(cam: CameraModel, P) -> np.ndarray:
    """Project a world point (or an (N, 3) array of points) to pixel coordinates.

    Raises PointBehindCamera if any point has homogeneous scale <= 1e-12.
    """
    P = np.asarray(P, dtype=float)
    h = _homogeneous_project(cam.Pi, P)
    w = h[..., 2]
    if np.any(w <= MIN_DEPTH):
        raise PointBehindCamera("point does not lie in front of the camera")
    return h[..., :2] / w[..., None]


def project_many(cam: CameraModel, P) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection that flags rather than raises.

    Returns (pixels, in_front); pixels of points behind the camera are NaN.
    """
    h = _homogeneous_project(cam.Pi, P)
    w = h[..., 2]
    ok = w > MIN_DEPTH
    with np.errstate(divide="ignore", invalid="ignore"):
        px = h[..., :2] / w[..., None]
    px[~ok] = np.nan
    return px, ok


def pixel_ray(cam: CameraModel, px) -> np.ndarray:
    """Unit world-frame direction(s) of the viewing ray through pixel(s) `px`."""
    px = np.atleast_2d(np.asarray(px, dtype=float))
    K = cam.intrinsics
    xn = (px[:, 0] - K.ox) / K.fx
    yn = (px[:, 1] - K.oy) / K.fy
    d_cam = np.column_stack([xn, yn, np.ones_like(xn)])
    d = d_cam @ cam.extrinsics.R  # R.T @ d for each row
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def back_project_plane(cam: CameraModel, line: Line2D) -> tuple[np.ndarray, float]:
    """Plane through the camera center that images onto `line`.

    Returns (n, d) with unit normal n such that n . X = d for points on the plane.
    """
    plane = cam.Pi.T @ line.homogeneous()
    n = plane[:3]
    scale = np.linalg.norm(n)
    return n / scale, float(-plane[3] / scale)
