"""Labeled synthetic event streams of a fragment crossing a multi-camera rig.

Each pixel holds a reference log-intensity. The latent log-intensity is a
uniform background plus a bright disk (the projected fragment), sampled every
``sample_interval_us``. When the change since the pixel's last event reaches
the threshold, an event fires with the sign of the change and the reference
resets to the current level.

Labels:
  leading  target event whose pixel cell contains the disk's front point
  body     any other event caused by the disk
  tailing  delayed re-trigger at a pixel the disk already entered
           (lag ~ exponential, count per pixel ~ Poisson)
  noise    background activity, uniform over the sensor and the recording
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError, SchemaError, ValidationError
from .geometry import CameraIntrinsics, CameraModel, Event, Line3D, project_many
from .io import EventStream, RigConfig, rig_from_dict, rig_to_dict, write_events, write_rig
from .motion import FragmentPhysical, _time_for_displacement, decay_coefficient, displacement_at_time

LABELS = ("leading", "body", "tailing", "noise")
LEADING, BODY, TAILING, NOISE = range(4)


@dataclass(frozen=True, eq=False)
class SimScene:
    rig: RigConfig
    v0: float = 385.6  # m/s
    k: float = 6.16175e-3  # 1/m
    launch_us: float = 100.0
    line: Line3D = field(default_factory=lambda: Line3D([0, 0, 0], [1, 0, 0]))
    fragment_radius_m: float = 0.004
    duration_us: int = 2800
    background_level: float = 0.2  # linear intensity
    target_contrast: float = 1.0  # log-intensity step of the disk over background
    threshold: float = 0.3  # log-intensity units
    sample_interval_us: int = 1
    tail_lag_us: float = 300.0
    tail_multiplier: float = 3.0  # mean tailing events per entered pixel
    noise_rate_hz: float = 0.1  # events per pixel per second
    seed: int = 7

    def __post_init__(self):
        if not self.duration_us > 0:
            raise ValidationError("duration_us must be positive")
        if not self.threshold > 0:
            raise ValidationError("threshold must be positive")
        if int(self.sample_interval_us) != self.sample_interval_us or self.sample_interval_us < 1:
            raise ValidationError("sample_interval_us must be an integer >= 1")
        if not self.v0 > 0 or self.k < 0:
            raise ValidationError("need v0 > 0 and k >= 0")
        if not (self.background_level > 0 and self.fragment_radius_m > 0):
            raise ValidationError("background_level and fragment_radius_m must be positive")
        if self.tail_lag_us <= 0 or self.tail_multiplier < 0 or self.noise_rate_hz < 0:
            raise ValidationError("tailing lag must be positive; rates must be non-negative")


@dataclass(eq=False)
class LabeledStream:
    stream: EventStream
    labels: np.ndarray  # int codes indexing LABELS

    def __len__(self):
        return len(self.stream)

    def mask(self, label: str) -> np.ndarray:
        return self.labels == LABELS.index(label)


@dataclass(frozen=True)
class LabeledEvent:
    event: Event
    label: str


def truth_position(scene: SimScene, t_us) -> np.ndarray:
    """Ground-truth fragment center at time(s) `t_us` (microseconds)."""
    tau = (np.asarray(t_us, dtype=float) - scene.launch_us) * 1e-6
    if np.any(tau < 0):
        raise DomainError("time precedes launch")
    D = displacement_at_time(scene.v0, scene.k, 0.0, tau)
    return scene.line.point_at(D)


def default_rig() -> RigConfig:
    intr = CameraIntrinsics(1600.0, 1600.0, 640.0, 360.0, 1280, 720)
    mid = _default_line().point_at(0.5)
    cam0 = CameraModel.look_at(intr, [0.5, 0.0, -1.4], mid)
    cam1 = CameraModel.look_at(intr, [0.5, -0.5, -1.3], mid)
    return RigConfig({0: cam0, 1: cam1}, np.zeros(3))


def _default_line() -> Line3D:
    return Line3D([0.0, 0.0, 0.0], [1.0, -0.02, 0.04])


def default_scene(**overrides) -> SimScene:
    """Two 1280x720 cameras ~0.5 m apart watching a 1 m window past the muzzle."""
    k = decay_coefficient(FragmentPhysical(M=0.005, rho=1.225, s=5.03e-5, cx=1.0))
    base = SimScene(rig=default_rig(), v0=385.6, k=k, launch_us=100.0, line=_default_line())
    flight = _time_for_displacement(base.v0, base.k, 1.02) * 1e6
    base = replace(base, duration_us=int(math.ceil(base.launch_us + flight)))
    return replace(base, **overrides) if overrides else base


# ------------------------------------------------------------------- rendering


def _render_camera(scene: SimScene, cam_id: int) -> LabeledStream:
    cam = scene.rig.cameras[cam_id]
    W, H = cam.width, cam.height
    rng = np.random.default_rng([scene.seed, cam_id])
    dt = int(scene.sample_interval_us)
    log_bg = math.log(scene.background_level)
    contrast = scene.target_contrast
    phi = scene.threshold

    xs, ys, ts, ps, labels, order_key = [], [], [], [], [], []

    start = int(math.ceil(scene.launch_us / dt) * dt)
    times = np.arange(start, scene.duration_us, dt, dtype=np.int64)
    if len(times) and contrast != 0.0:
        tau = (times - scene.launch_us) * 1e-6
        D = displacement_at_time(scene.v0, scene.k, 0.0, tau)
        P = scene.line.point_at(np.atleast_1d(D))
        c, front_ok = project_many(cam, P)
        depth = P @ cam.extrinsics.R[2] + cam.extrinsics.T[2]
        rad = cam.intrinsics.fx * scene.fragment_radius_m / np.where(front_ok, depth, 1.0)
        # Image-plane motion direction from a centered difference of the truth.
        tau_a = np.maximum(tau - 0.5e-6, 0.0)
        Pa = scene.line.point_at(np.atleast_1d(displacement_at_time(scene.v0, scene.k, 0.0, tau_a)))
        Pb = scene.line.point_at(np.atleast_1d(displacement_at_time(scene.v0, scene.k, 0.0, tau + 0.5e-6)))
        ca, _ = project_many(cam, Pa)
        cb, _ = project_many(cam, Pb)
        u = cb - ca
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
        front = c + rad[:, None] * u

        ref = np.full((H, W), log_bg)
        prev = None  # (cx, cy, r) at the previous sample
        for i, t in enumerate(times.tolist()):
            if not front_ok[i]:
                prev = None
                continue
            cx, cy, r = c[i, 0], c[i, 1], rad[i]
            lo_x, hi_x, lo_y, hi_y = cx - r, cx + r, cy - r, cy + r
            if prev is not None:
                lo_x, hi_x = min(lo_x, prev[0] - prev[2]), max(hi_x, prev[0] + prev[2])
                lo_y, hi_y = min(lo_y, prev[1] - prev[2]), max(hi_y, prev[1] + prev[2])
            x0, x1 = max(int(math.floor(lo_x)) - 1, 0), min(int(math.ceil(hi_x)) + 2, W)
            y0, y1 = max(int(math.floor(lo_y)) - 1, 0), min(int(math.ceil(hi_y)) + 2, H)
            if x0 >= x1 or y0 >= y1:
                prev = (cx, cy, r)
                continue
            gy, gx = np.mgrid[y0:y1, x0:x1]
            g_now = np.hypot(gx - cx, gy - cy) - r
            covered = g_now <= 0
            level = log_bg + contrast * covered
            win = ref[y0:y1, x0:x1]
            diff = level - win
            trig = np.abs(diff) >= phi
            if np.any(trig):
                ex, ey = gx[trig], gy[trig]
                g1 = g_now[trig]
                if prev is not None:
                    g0 = np.hypot(ex - prev[0], ey - prev[1]) - prev[2]
                    with np.errstate(divide="ignore", invalid="ignore"):
                        frac = np.clip(g0 / (g0 - g1), 0.0, 1.0)
                    frac = np.where(np.isfinite(frac), frac, 0.0)
                else:
                    frac = np.zeros(len(ex))
                entering = covered[trig]
                in_cell = (np.abs(ex - front[i, 0]) <= 0.5) & (np.abs(ey - front[i, 1]) <= 0.5)
                lab = np.where(entering & in_cell, LEADING, BODY)
                xs.append(ex)
                ys.append(ey)
                ts.append(np.full(len(ex), t, dtype=np.int64))
                ps.append(np.sign(diff[trig]).astype(np.int64))
                labels.append(lab)
                order_key.append(frac)
                win[trig] = level[trig]

                # Tailing re-triggers behind the front.
                if scene.tail_multiplier > 0 and np.any(entering):
                    tx, ty = ex[entering], ey[entering]
                    n_tail = rng.poisson(scene.tail_multiplier, size=len(tx))
                    total = int(n_tail.sum())
                    if total:
                        lag = rng.exponential(scene.tail_lag_us, size=total)
                        tt = t + np.maximum(np.ceil(lag / dt), 1).astype(np.int64) * dt
                        keep = tt < scene.duration_us
                        xs.append(np.repeat(tx, n_tail)[keep])
                        ys.append(np.repeat(ty, n_tail)[keep])
                        ts.append(tt[keep])
                        ps.append(rng.choice(np.array([-1, 1]), size=total)[keep])
                        labels.append(np.full(int(keep.sum()), TAILING))
                        order_key.append(rng.random(total)[keep])
            prev = (cx, cy, r)

    if scene.noise_rate_hz > 0:
        n_noise = int(rng.poisson(scene.noise_rate_hz * W * H * scene.duration_us * 1e-6))
        xs.append(rng.integers(0, W, n_noise))
        ys.append(rng.integers(0, H, n_noise))
        ts.append(rng.integers(0, scene.duration_us, n_noise))
        ps.append(rng.choice(np.array([-1, 1]), size=n_noise))
        labels.append(np.full(n_noise, NOISE))
        order_key.append(rng.random(n_noise))

    if xs:
        x, y, t, p = (np.concatenate(a).astype(np.int64) for a in (xs, ys, ts, ps))
        lab = np.concatenate(labels).astype(np.int64)
        key = np.concatenate(order_key)
        order = np.lexsort((key, t))
        x, y, t, p, lab = x[order], y[order], t[order], p[order], lab[order]
    else:
        x = y = t = p = lab = np.zeros(0, dtype=np.int64)
    stream = EventStream(x, y, t, p, cam_id, W, H)
    return LabeledStream(stream, lab)


def render_events(scene: SimScene, threads: int = 1) -> dict[int, LabeledStream]:
    """Render every camera of the scene. Output is independent of `threads`."""
    ids = sorted(scene.rig.cameras)
    if threads > 1 and len(ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _render_camera(scene, c), ids))
        return dict(zip(ids, results))
    return {c: _render_camera(scene, c) for c in ids}


# ------------------------------------------------------------------ scene files

_SCALARS = {
    "v0_mps": "v0", "k_per_m": "k", "launch_us": "launch_us",
    "fragment_radius_m": "fragment_radius_m", "duration_us": "duration_us",
    "background_level": "background_level", "target_contrast_log": "target_contrast",
    "threshold_log": "threshold", "sample_interval_us": "sample_interval_us",
    "tail_lag_us": "tail_lag_us", "tail_multiplier": "tail_multiplier",
    "noise_rate_hz_per_px": "noise_rate_hz", "seed": "seed",
}
_INTS = {"duration_us", "sample_interval_us", "seed"}


def scene_to_dict(scene: SimScene) -> dict:
    out = {key: getattr(scene, attr) for key, attr in _SCALARS.items()}
    out["line_origin_m"] = scene.line.origin.tolist()
    out["line_dir"] = scene.line.dir.tolist()
    out["rig"] = rig_to_dict(scene.rig)
    return out


def scene_from_dict(data: dict) -> SimScene:
    """Build a scene from its JSON form; absent fields take the default scene's values."""
    if not isinstance(data, dict):
        raise SchemaError("<root>", "expected a JSON object")
    base = default_scene()
    kw = {}
    for key, attr in _SCALARS.items():
        if key in data:
            try:
                v = float(data[key])
            except (TypeError, ValueError):
                raise SchemaError(key, "expected a number") from None
            if attr in _INTS:
                if v != int(v):
                    raise SchemaError(key, "expected an integer")
                v = int(v)
            kw[attr] = v
    if "rig" in data:
        kw["rig"] = rig_from_dict(data["rig"])
    if "line_origin_m" in data or "line_dir" in data:
        try:
            kw["line"] = Line3D(data.get("line_origin_m", base.line.origin.tolist()),
                                data.get("line_dir", base.line.dir.tolist()))
        except (TypeError, ValueError) as exc:
            raise SchemaError("line_origin_m/line_dir", str(exc)) from None
    try:
        return replace(base, **kw)
    except ValidationError as exc:
        raise ValidationError(f"scene: {exc}") from None


def read_scene(path) -> SimScene:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"invalid JSON: {exc}") from None
    return scene_from_dict(data)


def write_scene(scene: SimScene, rendered: dict[int, LabeledStream], out_dir) -> dict[str, str]:
    """Write event CSVs, label CSVs, the rig and the scene; return {role: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for cid in sorted(rendered):
        ls = rendered[cid]
        p = os.path.join(out_dir, f"events_cam{cid}.csv")
        write_events(p, ls.stream)
        paths[f"events_cam{cid}"] = p
        lp = os.path.join(out_dir, f"labels_cam{cid}.csv")
        s = ls.stream
        with open(lp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y,t_us,p,label\n")
            for row in zip(s.x.tolist(), s.y.tolist(), s.t.tolist(), s.p.tolist(),
                           ls.labels.tolist()):
                fh.write("%d,%d,%d,%d,%s\n" % (*row[:4], LABELS[row[4]]))
        paths[f"labels_cam{cid}"] = lp
    rp = os.path.join(out_dir, "rig.json")
    write_rig(rp, scene.rig)
    paths["rig"] = rp
    sp = os.path.join(out_dir, "scene.json")
    with open(sp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")
    paths["scene"] = sp
    return paths


def read_labels(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()[1:]
    return np.array([LABELS.index(line.rsplit(",", 1)[1]) for line in lines if line],
                    dtype=np.int64)
