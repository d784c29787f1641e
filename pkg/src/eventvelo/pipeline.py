"""End-to-end measurement chain shared by the CLI and the tests.

extract leading edges -> fit per-view lines -> triangulate -> associate -> fit decay
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .association import DEFAULT_MARGIN_M, SearchGrid, associate, bound_search_range
from .geometry import Line3D
from .io import EventStream, ObservationPoint, RigConfig
from .leading_edge import DEFAULT_GATE_PX, LeadingEdgeSet, extract_leading_edge
from .motion import DecayFit, fit_decay
from .trajectory import Fit2D, fit_line_2d, triangulate_line_3d

log = logging.getLogger(__name__)

# Inlier distance floor (px) when trimming per-view line fits.
LINE_TRIM_PX = 3.0


@dataclass(eq=False)
class PipelineResult:
    edges: dict[int, LeadingEdgeSet]
    fits: dict[int, Fit2D]
    line: Line3D
    grid: SearchGrid
    observations: list[ObservationPoint]
    decay: DecayFit | None
    timings: dict[str, float] = field(default_factory=dict)


def select_polarity(stream: EventStream, polarity: str) -> EventStream:
    if polarity == "both":
        return stream
    if polarity not in ("pos", "neg"):
        raise ValueError(f"polarity must be both, pos or neg, got {polarity!r}")
    return stream.take(np.flatnonzero(stream.p == (1 if polarity == "pos" else -1)))


@contextmanager
def _stage(name: str, timings: dict):
    """Time a stage and tag any escaping error with the stage's name."""
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise
    timings[name] = time.perf_counter() - t0


def run_pipeline(rig: RigConfig, streams: Mapping[int, EventStream], *,
                 line: Line3D | None = None, gate: float | None = DEFAULT_GATE_PX,
                 polarity: str = "both", margin: float = DEFAULT_MARGIN_M,
                 threads: int = 1, fit: bool = True) -> PipelineResult:
    """Run every stage on already-loaded streams.

    Without `line` at least two views are needed to triangulate; with it, the
    line-fitting and triangulation stages are skipped.
    """
    timings = {}

    edges = {}
    with _stage("leading_edge", timings):
        for cid in sorted(streams):
            s = select_polarity(streams[cid], polarity)
            edges[cid] = extract_leading_edge(s, rig.origin_for(cid), gate=gate)
            log.info("camera %d: %d of %d events on the leading edge", cid, len(edges[cid]), len(s))

    fits = {}
    with _stage("trajectory", timings):
        if line is None:
            for cid, e in edges.items():
                fits[cid] = fit_line_2d(e.events.xy, trim_px=LINE_TRIM_PX)
            line = triangulate_line_3d(fits, rig)

    with _stage("association", timings):
        edge_list = [edges[c] for c in sorted(edges)]
        grid = bound_search_range(edge_list, line, rig, margin=margin)
        obs = associate(edge_list, grid, rig, threads=threads)

    decay = None
    if fit:
        with _stage("motion_fit", timings):
            decay = fit_decay(obs)
    return PipelineResult(edges, fits, line, grid, obs, decay, timings)
