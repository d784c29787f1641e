"""Command-line front end: simulate, pipeline, theory, plot-data.

Exit codes: 0 success, 1 other processing error, 2 bad configuration or
missing inputs, 3 near-parallel back-projected planes, 4 too little data to
fit the decay model.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .baseline import corresponding_point_baseline
from .errors import (InsufficientData, NearParallelPlanes, ParseError, SchemaError,
                     ValidationError, VelocimetryError)
from .geometry import Line3D
from .io import read_events, read_observations, read_rig, write_observations
from .leading_edge import build_radial_histogram
from .motion import DecayFit
from .pipeline import run_pipeline, select_polarity
from .plots import (PALETTE, Series, classified_events_csv, fit_curve_csv, fit_curve_rows,
                    histogram_csv, line2d_csv, observation_scatter_csv, render_svg)
from .simulator import default_scene, read_scene, render_events, write_scene
from .theory import compare_measurements, comparison_table, predict_muzzle_velocity, read_gas_gun

log = logging.getLogger("eventvelo")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_PARALLEL, EXIT_INSUFFICIENT = 0, 1, 2, 3, 4
MANIFEST = "manifest.json"


class UsageError(Exception):
    """Bad command-line input; maps to exit code 2."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_manifest(out_dir, command: str, argv, config_paths: dict, inputs: list,
                   outputs: dict, timings: dict, seed=None, params=None) -> str:
    """Record what was run, on what, and what came out (with hashes)."""
    manifest = {
        "command": command,
        "argv": list(argv),
        "tool_version": __version__,
        "seed": seed,
        "config_paths": {k: os.path.abspath(v) for k, v in config_paths.items()},
        "inputs": {os.path.abspath(p): sha256_file(p) for p in inputs},
        "outputs": {name: {"path": os.path.relpath(p, out_dir), "sha256": sha256_file(p)}
                    for name, p in sorted(outputs.items())},
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    if params:
        manifest["params"] = params
    path = os.path.join(out_dir, MANIFEST)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ------------------------------------------------------------------- simulate


def cmd_simulate(args, argv) -> int:
    t0 = time.perf_counter()
    scene = read_scene(args.scene) if args.scene else default_scene()
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    t_load = time.perf_counter() - t0
    t0 = time.perf_counter()
    rendered = render_events(scene, threads=args.threads)
    t_render = time.perf_counter() - t0
    t0 = time.perf_counter()
    paths = write_scene(scene, rendered, args.out)
    t_write = time.perf_counter() - t0
    write_manifest(args.out, "simulate", argv, {"scene": args.scene} if args.scene else {},
                   [args.scene] if args.scene else [], paths,
                   {"load": t_load, "render": t_render, "write": t_write}, seed=scene.seed)
    for cid in sorted(rendered):
        print(f"camera {cid}: {len(rendered[cid])} events")
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- pipeline


def parse_line_arg(text: str) -> Line3D:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--line: expected six numbers ox,oy,oz,dx,dy,dz, got {text!r}") from None
    if len(vals) != 6:
        raise UsageError(f"--line: expected six numbers ox,oy,oz,dx,dy,dz, got {len(vals)}")
    try:
        return Line3D(vals[:3], vals[3:])
    except (ValueError, ValidationError) as exc:
        raise UsageError(f"--line: {exc}") from None


def parse_event_args(items, rig) -> dict[int, str]:
    """`CAM=PATH` entries, or bare paths assigned to the rig's cameras in id order."""
    ids = sorted(rig.cameras)
    out = {}
    for i, item in enumerate(items):
        head, sep, tail = item.partition("=")
        if sep and head.strip().lstrip("-").isdigit():
            cid, path = int(head), tail
        else:
            if i >= len(ids):
                raise UsageError(f"more event files than cameras in the rig ({len(ids)})")
            cid, path = ids[i], item
        if cid not in rig.cameras:
            raise UsageError(f"--events: camera {cid} is not in the rig")
        if cid in out:
            raise UsageError(f"--events: camera {cid} given twice")
        out[cid] = path
    return out


def cmd_pipeline(args, argv) -> int:
    t0 = time.perf_counter()
    rig = read_rig(args.rig).with_overrides(omega_px=args.omega_px, step_m=args.step_m)
    event_paths = parse_event_args(args.events, rig)
    line = parse_line_arg(args.line) if args.line else None
    if line is None and len(event_paths) < 2:
        raise UsageError("triangulation needs >= 2 views; pass event files for two cameras "
                         "or supply a known trajectory with --line")
    streams = {}
    for cid, path in event_paths.items():
        cam = rig.cameras[cid]
        streams[cid] = read_events(path, cam.width, cam.height, cam=cid)
    t_load = time.perf_counter() - t0

    gate = None if args.outlier_gate_px is not None and args.outlier_gate_px <= 0 else args.outlier_gate_px
    res = run_pipeline(rig, streams, line=line, gate=gate, polarity=args.polarity,
                       threads=args.threads)
    timings = {"load": t_load, **res.timings}

    t0 = time.perf_counter()
    os.makedirs(args.out, exist_ok=True)
    out = {}
    j = lambda name: os.path.join(args.out, name)  # noqa: E731
    out["observations"] = j("observations.csv")
    write_observations(res.observations, out["observations"])
    out["fit_report"] = _write_text(j("fit_report.txt"), res.decay.report())
    out["fit_curve"] = _write_text(j("fit_curve.csv"), fit_curve_csv(res.observations, res.decay))
    out["observation_scatter"] = _write_text(j("observation_scatter.csv"),
                                             observation_scatter_csv(res.observations, rig.muzzle))
    for cid in sorted(streams):
        s = select_polarity(streams[cid], args.polarity)
        hist = build_radial_histogram(s, rig.origin_for(cid))
        out[f"histogram_cam{cid}"] = _write_text(j(f"histogram_cam{cid}.csv"), histogram_csv(hist))
        out[f"classified_cam{cid}"] = _write_text(j(f"classified_cam{cid}.csv"),
                                                  classified_events_csv(s, res.edges[cid]))
        if cid in res.fits:
            out[f"line2d_cam{cid}"] = _write_text(j(f"line2d_cam{cid}.csv"), line2d_csv(res.fits[cid]))
    L = res.line
    out["line3d"] = _write_text(j("line3d.json"), json.dumps(
        {"origin_m": L.origin.tolist(), "dir": L.dir.tolist(),
         "grid_s_min_m": res.grid.s_min, "grid_s_max_m": res.grid.s_max,
         "grid_step_m": res.grid.step, "grid_points": res.grid.count}, indent=2) + "\n")

    n_baseline = None
    if args.baseline_intersection:
        tb = time.perf_counter()
        pts = corresponding_point_baseline(streams, rig)
        timings["baseline"] = time.perf_counter() - tb
        n_baseline = len(pts)
        rows = ["t_us,X,Y,Z"] + [f"{t},{P[0]:.17g},{P[1]:.17g},{P[2]:.17g}" for t, P in pts]
        out["baseline"] = _write_text(j("baseline_points.csv"), "\n".join(rows) + "\n")
    timings["write"] = time.perf_counter() - t0

    config = {"rig": args.rig}
    params = {"events": {str(c): os.path.abspath(p) for c, p in sorted(event_paths.items())},
              "polarity": args.polarity, "omega_px": rig.omega_px, "step_m": rig.step_m,
              "outlier_gate_px": gate, "line": args.line}
    write_manifest(args.out, "pipeline", argv, config, [args.rig, *event_paths.values()], out,
                   timings, params=params)

    d = res.decay
    print(f"v0 = {d.v0:.3f} m/s")
    print(f"k = {d.k:.6g} 1/m")
    print(f"observations = {len(res.observations)}")
    if n_baseline is not None:
        print(f"baseline points = {n_baseline}")
    return EXIT_OK


# --------------------------------------------------------------------- theory


def _parse_reference(item: str) -> tuple[str, float]:
    name, sep, val = item.rpartition("=")
    try:
        if not sep or not name:
            raise ValueError
        return name, float(val)
    except ValueError:
        raise UsageError(f"--reference: expected NAME=VALUE, got {item!r}") from None


def cmd_theory(args, argv) -> int:
    cfg = read_gas_gun(args.config)
    v = predict_muzzle_velocity(cfg)
    print(f"predicted v0 = {v:.1f} m/s")
    if args.measured is not None:
        refs = {"Theoretical": v}
        refs.update(_parse_reference(r) for r in args.reference or [])
        a, rel = compare_measurements(args.measured, v)
        print(f"measured v0 = {args.measured:.1f} m/s; deviation {a:+.2f} m/s ({rel:.2f}%)")
        print(comparison_table(args.measured, refs), end="")
    return EXIT_OK


# ------------------------------------------------------------------ plot-data


def _load_manifest(run_dir) -> dict:
    path = os.path.join(run_dir, MANIFEST)
    if not os.path.isfile(path):
        raise UsageError(f"missing input: {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _require_file(path) -> str:
    if not os.path.isfile(path):
        raise UsageError(f"missing input: {path}")
    return path


def _pipeline_params(manifest: dict) -> dict:
    if manifest.get("command") != "pipeline" or "params" not in manifest:
        raise UsageError("run directory does not hold pipeline outputs")
    return manifest["params"]


def cmd_plot_data(args, argv) -> int:
    run = args.run_dir
    if not os.path.isdir(run):
        raise UsageError(f"missing input: run directory {run}")
    out_dir = args.out or run
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if args.kind == "fit":
        obs = read_observations(_require_file(os.path.join(run, "observations.csv")))
        with open(_require_file(os.path.join(run, "fit_report.txt")), encoding="utf-8") as fh:
            fit = DecayFit.from_report(fh.read())
        written.append(_write_text(os.path.join(out_dir, "plot_fit.csv"), fit_curve_csv(obs, fit)))
        if args.svg:
            rows = fit_curve_rows(obs, fit)
            t = np.array([r[0] for r in rows], dtype=float) * 1e-6
            order = np.argsort(t, kind="stable")
            series = [Series(t, np.array([r[1] for r in rows]), "scatter", PALETTE[1], "observations"),
                      Series(t[order], np.array([r[2] for r in rows])[order], "line", PALETTE[0], "fit")]
            written.append(_write_text(os.path.join(out_dir, "plot_fit.svg"),
                                       render_svg(series, "t (s)", "D (m)", "displacement vs time")))
    elif args.kind == "observations":
        manifest = _load_manifest(run)
        rig = read_rig(_require_file(manifest["config_paths"]["rig"]))
        obs = read_observations(_require_file(os.path.join(run, "observations.csv")))
        written.append(_write_text(os.path.join(out_dir, "plot_observations.csv"),
                                   observation_scatter_csv(obs, rig.muzzle)))
        if args.svg:
            series = []
            for i, cid in enumerate(sorted({o.cam for o in obs})):
                P = np.array([o.P for o in obs if o.cam == cid])
                series.append(Series(P[:, 0], P[:, 2], "scatter", PALETTE[i % len(PALETTE)], f"cam {cid}"))
            series.append(Series(rig.muzzle[[0]], rig.muzzle[[2]], "scatter", "black", "muzzle"))
            written.append(_write_text(os.path.join(out_dir, "plot_observations.svg"),
                                       render_svg(series, "X (m)", "Z (m)", "trajectory points")))
    else:  # histogram
        manifest = _load_manifest(run)
        params = _pipeline_params(manifest)
        rig = read_rig(_require_file(manifest["config_paths"]["rig"]))
        for key, path in params["events"].items():
            cid = int(key)
            cam = rig.cameras[cid]
            s = select_polarity(read_events(_require_file(path), cam.width, cam.height, cam=cid),
                                params["polarity"])
            hist = build_radial_histogram(s, rig.origin_for(cid))
            written.append(_write_text(os.path.join(out_dir, f"plot_histogram_cam{cid}.csv"),
                                       histogram_csv(hist)))
            if args.svg:
                rows = np.array(list(hist.rows()), dtype=float).reshape(-1, 3)
                series = [Series((rows[:, 1] + 0.5) * hist.bin_t, (rows[:, 0] + 0.5) * hist.bin_r,
                                 "scatter", PALETTE[1])]
                written.append(_write_text(os.path.join(out_dir, f"plot_histogram_cam{cid}.svg"),
                                           render_svg(series, "t (us)", "r (px)",
                                                      f"radial distance, camera {cid}")))
    for p in written:
        print(p)
    return EXIT_OK


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eventvelo", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic two-camera scene")
    p.add_argument("--scene", help="scene JSON (defaults to the built-in scene)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scene's RNG seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pipeline", help="measure v0 and k from event streams")
    p.add_argument("--rig", required=True, help="rig JSON")
    p.add_argument("--events", nargs="+", required=True, metavar="[CAM=]PATH",
                   help="event CSV per camera")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--omega-px", type=float, help="reception threshold (px)")
    p.add_argument("--step-m", type=float, help="trajectory sampling step (m)")
    p.add_argument("--polarity", choices=("both", "pos", "neg"), default="both")
    p.add_argument("--outlier-gate-px", type=float, default=15.0,
                   help="trend gate for outlier removal (px); <= 0 disables it")
    p.add_argument("--line", help="known trajectory ox,oy,oz,dx,dy,dz (skips triangulation)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--baseline-intersection", action="store_true",
                   help="also run the frame-style corresponding-point baseline")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("theory", help="interior-ballistics muzzle velocity prediction")
    p.add_argument("--config", required=True, help="gas-gun JSON")
    p.add_argument("--measured", type=float, help="measured v0 (m/s) to compare")
    p.add_argument("--reference", action="append", metavar="NAME=V",
                   help="additional reference velocity for the comparison block")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("plot-data", help="emit plot CSVs (and optional SVG) from a run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--kind", choices=("histogram", "observations", "fit"), required=True)
    p.add_argument("--out", help="output directory (defaults to the run directory)")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args, argv)
    except (UsageError, SchemaError, ValidationError, ParseError, FileNotFoundError,
            IsADirectoryError) as exc:
        code, err = EXIT_CONFIG, exc
    except NearParallelPlanes as exc:
        code, err = EXIT_PARALLEL, exc
    except InsufficientData as exc:
        code, err = EXIT_INSUFFICIENT, exc
    except VelocimetryError as exc:
        code, err = EXIT_ERROR, exc
    stage = getattr(err, "stage", None)
    where = f" in stage {stage}" if stage else ""
    print(f"error{where}: {type(err).__name__}: {err}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
