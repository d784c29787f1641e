"""Readers and writers for event streams, rig configurations and observation sets.

Event CSV:        header ``x,y,t_us,p``; integer fields, one event per line.
Rig JSON:         ``cameras[]``, ``muzzle``, optional ``scatter_origin_px[]``,
                  ``omega_px`` and ``step_m``.
Observation CSV:  header ``X,Y,Z,t_us,cam,arc_m``; reals at 17 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SchemaError, ValidationError
from .geometry import CameraExtrinsics, CameraIntrinsics, CameraModel, Event, project

EVENT_HEADER = ["x", "y", "t_us", "p"]
OBSERVATION_HEADER = ["X", "Y", "Z", "t_us", "cam", "arc_m"]

DEFAULT_OMEGA_PX = 2.0
DEFAULT_STEP_M = 1e-5


@dataclass(eq=False)
class EventStream:
    """Events of one camera stored column-wise, sorted by timestamp.

    Equal timestamps keep their input order.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    cam: int = 0
    width: int = 1280
    height: int = 720

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.t = np.asarray(self.t, dtype=np.int64)
        self.p = np.asarray(self.p, dtype=np.int64)
        if not (len(self.x) == len(self.y) == len(self.t) == len(self.p)):
            raise ValidationError("event columns differ in length")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]), self.cam)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def from_arrays(cls, x, y, t, p, cam=0, width=1280, height=720, sort=True) -> "EventStream":
        s = cls(x, y, t, p, cam, width, height)
        if sort:
            s = s.take(np.argsort(s.t, kind="stable"))
        return s

    @classmethod
    def from_events(cls, events: Iterable[Event], cam=0, width=1280, height=720) -> "EventStream":
        evs = list(events)
        cols = [[getattr(e, k) for e in evs] for k in ("x", "y", "t", "p")]
        return cls.from_arrays(*cols, cam=cam, width=width, height=height)

    def take(self, idx) -> "EventStream":
        return EventStream(self.x[idx], self.y[idx], self.t[idx], self.p[idx],
                           self.cam, self.width, self.height)

    @property
    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y]).astype(float)

    def in_bounds(self) -> bool:
        return bool(np.all((self.x >= 0) & (self.x < self.width)
                           & (self.y >= 0) & (self.y < self.height)))

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.t) >= 0))


def parse_events(text: str, width: int, height: int, cam: int = 0) -> EventStream:
    """Parse an event CSV. Malformed rows raise ParseError with their line number."""
    lines = text.splitlines()
    if not lines:
        raise ParseError(1, "empty input, expected header")
    header = [h.strip() for h in lines[0].split(",")]
    if header != EVENT_HEADER:
        raise ParseError(1, f"expected header {','.join(EVENT_HEADER)}, got {lines[0]!r}")
    n = len(lines) - 1
    cols = np.empty((4, n), dtype=np.int64)
    k = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(lineno, f"expected 4 fields, got {len(parts)}")
        try:
            x, y, t, p = (int(v) for v in parts)
        except ValueError:
            raise ParseError(lineno, f"non-integer field in {line!r}") from None
        if not 0 <= x < width:
            raise ParseError(lineno, f"x={x} outside sensor width {width}")
        if not 0 <= y < height:
            raise ParseError(lineno, f"y={y} outside sensor height {height}")
        if p not in (-1, 1):
            raise ParseError(lineno, f"polarity {p} not in {{-1, 1}}")
        cols[:, k] = (x, y, t, p)
        k += 1
    cols = cols[:, :k]
    return EventStream.from_arrays(*cols, cam=cam, width=width, height=height)


def read_events(path, width: int, height: int, cam: int = 0) -> EventStream:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_events(fh.read(), width, height, cam)


def format_events(stream: EventStream) -> str:
    buf = io.StringIO()
    buf.write(",".join(EVENT_HEADER) + "\n")
    for row in zip(stream.x.tolist(), stream.y.tolist(), stream.t.tolist(), stream.p.tolist()):
        buf.write("%d,%d,%d,%d\n" % row)
    return buf.getvalue()


def write_events(path, stream: EventStream) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_events(stream))


# --------------------------------------------------------------------------- rig


@dataclass(eq=False)
class RigConfig:
    cameras: dict[int, CameraModel]
    muzzle: np.ndarray
    scatter_origin: dict[int, tuple[float, float]] = field(default_factory=dict)
    omega_px: float = DEFAULT_OMEGA_PX
    step_m: float = DEFAULT_STEP_M

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValidationError("rig needs at least one camera")
        if not self.omega_px > 0:
            raise ValidationError(f"omega_px must be > 0, got {self.omega_px}")
        if not self.step_m > 0:
            raise ValidationError(f"step_m must be > 0, got {self.step_m}")
        self.muzzle = np.asarray(self.muzzle, dtype=float).reshape(3)
        unknown = set(self.scatter_origin) - set(self.cameras)
        if unknown:
            raise ValidationError(f"scatter origin given for unknown camera(s) {sorted(unknown)}")

    def origin_for(self, cam: int) -> tuple[float, float]:
        """Scatter origin of a view; defaults to the muzzle's projection."""
        if cam in self.scatter_origin:
            return self.scatter_origin[cam]
        x0, y0 = project(self.cameras[cam], self.muzzle)
        return float(x0), float(y0)

    def with_overrides(self, omega_px=None, step_m=None) -> "RigConfig":
        return RigConfig(dict(self.cameras), self.muzzle.copy(), dict(self.scatter_origin),
                         self.omega_px if omega_px is None else omega_px,
                         self.step_m if step_m is None else step_m)


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaError(f"{where}{key}")
    return obj[key]


def _numbers(value, n: int, name: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise SchemaError(name, f"expected {n} numbers")
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        raise SchemaError(name, "expected numbers") from None
    if not all(math.isfinite(v) for v in out):
        raise ValidationError(f"{name}: values must be finite")
    return out


def rig_from_dict(data: dict) -> RigConfig:
    if not isinstance(data, dict):
        raise SchemaError("<root>", "expected a JSON object")
    cams_raw = _require(data, "cameras", "")
    if not isinstance(cams_raw, list) or not cams_raw:
        raise SchemaError("cameras", "expected a non-empty list")
    cameras: dict[int, CameraModel] = {}
    for i, c in enumerate(cams_raw):
        where = f"cameras[{i}]."
        if not isinstance(c, dict):
            raise SchemaError(f"cameras[{i}]", "expected an object")
        cid = int(_require(c, "id", where))
        if cid in cameras:
            raise ValidationError(f"duplicate camera id {cid}")
        try:
            intr = CameraIntrinsics(*(float(_require(c, k, where)) for k in ("fx", "fy", "ox", "oy")),
                                    int(_require(c, "width", where)), int(_require(c, "height", where)))
            R = _numbers(_require(c, "R", where), 9, where + "R")
            T = _numbers(_require(c, "T", where), 3, where + "T")
            cameras[cid] = CameraModel(intr, CameraExtrinsics(np.reshape(R, (3, 3)), T))
        except ValidationError as exc:
            raise ValidationError(f"camera {cid}: {exc}") from None
    muzzle = _numbers(_require(data, "muzzle", ""), 3, "muzzle")
    origins = {}
    for i, o in enumerate(data.get("scatter_origin_px", []) or []):
        where = f"scatter_origin_px[{i}]."
        origins[int(_require(o, "cam", where))] = (float(_require(o, "x0", where)),
                                                  float(_require(o, "y0", where)))
    omega = float(data.get("omega_px", DEFAULT_OMEGA_PX))
    step = float(data.get("step_m", DEFAULT_STEP_M))
    return RigConfig(cameras, np.array(muzzle), origins, omega, step)


def parse_rig(text: str) -> RigConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON: {exc}") from None
    return rig_from_dict(data)


def read_rig(path) -> RigConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_rig(fh.read())


def rig_to_dict(rig: RigConfig) -> dict:
    cams = []
    for cid in sorted(rig.cameras):
        cam = rig.cameras[cid]
        K = cam.intrinsics
        cams.append({"id": cid, "fx": K.fx, "fy": K.fy, "ox": K.ox, "oy": K.oy,
                     "width": K.width, "height": K.height,
                     "R": cam.extrinsics.R.ravel().tolist(), "T": cam.extrinsics.T.tolist()})
    out = {"cameras": cams, "muzzle": rig.muzzle.tolist()}
    if rig.scatter_origin:
        out["scatter_origin_px"] = [{"cam": c, "x0": x0, "y0": y0}
                                    for c, (x0, y0) in sorted(rig.scatter_origin.items())]
    out["omega_px"] = rig.omega_px
    out["step_m"] = rig.step_m
    return out


def write_rig(path, rig: RigConfig) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(rig_to_dict(rig), fh, indent=2)
        fh.write("\n")


# ------------------------------------------------------------------ observations


@dataclass(frozen=True, eq=False)
class ObservationPoint:
    P: np.ndarray
    arc: float
    t: int
    cam: int
    resid: float = 0.0


def _g17(v: float) -> str:
    return "%.17g" % v


def format_observations(obs: Sequence[ObservationPoint]) -> str:
    buf = io.StringIO()
    buf.write(",".join(OBSERVATION_HEADER) + "\n")
    for o in obs:
        X, Y, Z = (float(v) for v in o.P)
        buf.write(",".join([_g17(X), _g17(Y), _g17(Z), str(int(o.t)), str(int(o.cam)),
                            _g17(float(o.arc))]) + "\n")
    return buf.getvalue()


def write_observations(obs: Sequence[ObservationPoint], path=None) -> str:
    """Serialize an observation set; also writes it to `path` when given."""
    text = format_observations(obs)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def parse_observations(text: str) -> list[ObservationPoint]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "empty input, expected header") from None
    if header != OBSERVATION_HEADER:
        raise ParseError(1, f"expected header {','.join(OBSERVATION_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 6:
            raise ParseError(lineno, f"expected 6 fields, got {len(row)}")
        try:
            X, Y, Z = float(row[0]), float(row[1]), float(row[2])
            t, cam = int(row[3]), int(row[4])
            arc = float(row[5])
        except ValueError:
            raise ParseError(lineno, "malformed number") from None
        out.append(ObservationPoint(np.array([X, Y, Z]), arc, t, cam))
    return out


def read_observations(path) -> list[ObservationPoint]:
    with open(path, encoding="utf-8") as fh:
        return parse_observations(fh.read())
