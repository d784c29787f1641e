"""Leading-edge event extraction.

A fragment moving away from its scatter origin produces events whose radial
pixel distance from that origin grows monotonically with time. Tailing events
re-fire at pixels the fragment already crossed, so their radial distance lags
behind the front. Walking the stream in time order and keeping only events
that push the radial distance strictly beyond the current reference event
isolates the front.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, EmptyStream
from .io import EventStream

log = logging.getLogger(__name__)

DEFAULT_GATE_PX = 15.0
DEFAULT_BIN_R_PX = 4.0
DEFAULT_BIN_T_US = 50.0
DEFAULT_MIN_BIN_COUNT = 3
# Number of anchor samples used by the subsampled repeated-median slope.
REPEATED_MEDIAN_ANCHORS = 200


@dataclass(eq=False)
class LeadingEdgeSet:
    cam: int
    events: EventStream
    indices: np.ndarray  # positions in the input stream
    r: np.ndarray  # radial distances of the kept events
    prefilter: np.ndarray | None = None  # boolean mask applied before traversal

    def __len__(self) -> int:
        return len(self.indices)


def radial_distance(stream: EventStream, origin) -> np.ndarray:
    x0, y0 = origin
    return np.hypot(stream.x - float(x0), stream.y - float(y0))


@dataclass(eq=False)
class RadialHistogram:
    counts: np.ndarray  # shape (n_r_bins, n_t_bins)
    bin_r: float
    bin_t: float

    def rows(self):
        """Yield (r_bin, t_bin, count) for every non-empty bin."""
        a, b = np.nonzero(self.counts)
        for i, j in zip(a.tolist(), b.tolist()):
            yield i, j, int(self.counts[i, j])


def build_radial_histogram(stream: EventStream, origin, bin_r: float = DEFAULT_BIN_R_PX,
                           bin_t: float = DEFAULT_BIN_T_US) -> RadialHistogram:
    """Count events per (radial distance, time) bin.

    Bin (a, b) covers r in [a*bin_r, (a+1)*bin_r) and t in [b*bin_t, (b+1)*bin_t).
    Timestamps are assumed non-negative.
    """
    if not (bin_r > 0 and bin_t > 0):
        raise ValueError("bin widths must be positive")
    if len(stream) == 0:
        return RadialHistogram(np.zeros((1, 1), dtype=np.int64), bin_r, bin_t)
    a = np.floor(radial_distance(stream, origin) / bin_r).astype(np.int64)
    b = np.floor(stream.t / bin_t).astype(np.int64)
    counts = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(counts, (a, b), 1)
    return RadialHistogram(counts, bin_r, bin_t)


def repeated_median_line(t, r, anchors: int = REPEATED_MEDIAN_ANCHORS) -> tuple[float, float]:
    """Robust (slope, intercept) of r against t.

    Siegel's repeated median with the outer median taken over at most
    `anchors` evenly spaced samples; each anchor's inner median runs over all
    samples with a different timestamp. Deterministic, O(n * anchors).
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if len(np.unique(t)) < 2:
        raise DegenerateInput("need at least two distinct timestamps to estimate a trend")
    n = len(t)
    idx = np.unique(np.linspace(0, n - 1, min(n, anchors)).round().astype(np.int64))
    slopes = []
    for i in idx:
        dt = t - t[i]
        ok = dt != 0
        if np.any(ok):
            slopes.append(np.median((r[ok] - r[i]) / dt[ok]))
    slope = float(np.median(slopes))
    intercept = float(np.median(r - slope * t))
    return slope, intercept


def remove_outliers(t, r, gate: float, trend: tuple[float, float] | None = None) -> np.ndarray:
    """Boolean mask of samples within `gate` pixels of a robust linear trend.

    The trend defaults to the repeated-median line of the samples themselves;
    pass `trend=(slope, intercept)` to gate against a line estimated elsewhere.
    """
    if not gate > 0:
        raise ValueError("gate must be positive")
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    slope, intercept = repeated_median_line(t, r) if trend is None else trend
    return np.abs(r - (slope * t + intercept)) <= gate


def front_envelope(t, r, bin_r: float = DEFAULT_BIN_R_PX, bin_t: float = DEFAULT_BIN_T_US,
                   min_count: int = DEFAULT_MIN_BIN_COUNT) -> tuple[np.ndarray, np.ndarray]:
    """Upper envelope of the dense part of the (t, r) cloud.

    For each time bin, returns the sample with the largest r among samples
    whose histogram cell holds at least `min_count` events. Isolated noise
    never reaches that density, while the target's front does.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if len(t) == 0:
        return t, r
    a = np.floor(r / bin_r).astype(np.int64)
    b = np.floor(t / bin_t).astype(np.int64)
    b -= b.min()
    na = a.max() + 1
    cell = b * na + a
    _, inv, cnt = np.unique(cell, return_inverse=True, return_counts=True)
    dense = cnt[inv] >= min_count
    if not np.any(dense):
        return t[:0], r[:0]
    td, rd, bd = t[dense], r[dense], b[dense]
    order = np.lexsort((-rd, bd))  # per time bin, largest r first
    bd_sorted = bd[order]
    first = np.r_[True, bd_sorted[1:] != bd_sorted[:-1]]
    pick = order[first]
    return td[pick], rd[pick]


def running_max_indices(r) -> np.ndarray:
    """Positions whose value strictly exceeds every earlier value.

    The first element seeds the reference and is never itself selected.
    """
    r = np.asarray(r, dtype=float)
    if len(r) < 2:
        return np.zeros(0, dtype=np.int64)
    prev_max = np.maximum.accumulate(r)[:-1]
    return np.flatnonzero(r[1:] > prev_max) + 1


def prefilter_mask(stream: EventStream, origin, gate: float | None = DEFAULT_GATE_PX,
                   bin_r: float = DEFAULT_BIN_R_PX, bin_t: float = DEFAULT_BIN_T_US,
                   min_count: int = DEFAULT_MIN_BIN_COUNT) -> np.ndarray:
    """Outlier mask applied ahead of the monotonic traversal.

    The trend line is fitted to the front envelope of the radial histogram, so
    that dense tailing clouds behind the front do not drag it backwards. If
    no trend can be estimated, every event is kept.
    """
    n = len(stream)
    if gate is None or n == 0:
        return np.ones(n, dtype=bool)
    r = radial_distance(stream, origin)
    t = stream.t.astype(float)
    te, re = front_envelope(t, r, bin_r, bin_t, min_count)
    try:
        trend = repeated_median_line(te, re)
    except DegenerateInput:
        log.warning("camera %d: no radial trend estimable, outlier removal skipped", stream.cam)
        return np.ones(n, dtype=bool)
    return remove_outliers(t, r, gate, trend=trend)


def extract_leading_edge(stream: EventStream, origin, gate: float | None = DEFAULT_GATE_PX,
                         **envelope_kw) -> LeadingEdgeSet:
    """Select the leading-edge events of one view.

    Outliers are removed first, then the first surviving event becomes the
    reference. Any later event whose radial distance strictly exceeds the
    reference's is emitted and becomes the new reference. `gate=None` skips
    outlier removal.
    """
    if len(stream) == 0:
        raise EmptyStream(f"camera {stream.cam}: no events to extract from")
    mask = prefilter_mask(stream, origin, gate, **envelope_kw)
    kept = np.flatnonzero(mask)
    if len(kept) == 0:
        raise EmptyStream(f"camera {stream.cam}: every event was rejected as an outlier")
    r_all = radial_distance(stream, origin)
    sel = kept[running_max_indices(r_all[kept])]
    return LeadingEdgeSet(stream.cam, stream.take(sel), sel, r_all[sel], mask)
