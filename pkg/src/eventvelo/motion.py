"""Velocity-decay laws for a fragment in air and the trust-region fit of its displacement.

Under quadratic drag the speed decays as v(t) = v0 / (1 + k v0 t), with
k = cx rho s / (2 M). Integrating gives D(t) = ln(1 + k v0 t) / k + C, and
eliminating t gives v(D) = v0 exp(-k D).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientData, SchemaError, ValidationError
from .io import ObservationPoint

log = logging.getLogger(__name__)

V0_MAX = 1e4
K_MAX = 10.0
_V0_MIN = 1e-9
_K_LINEAR = 1e-12
_SERIES_X = 1e-5


@dataclass(frozen=True)
class FragmentPhysical:
    M: float  # kg
    rho: float  # kg/m^3
    s: float  # m^2
    cx: float

    def __post_init__(self):
        for name in ("M", "rho", "s", "cx"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be strictly positive")


def decay_coefficient(phys: FragmentPhysical) -> float:
    """k = cx * rho * s / (2 M), in 1/m."""
    return phys.cx * phys.rho * phys.s / (2.0 * phys.M)


def _check_domain(x):
    if np.any(1.0 + x <= 0):
        raise DomainError("1 + k*v0*t must be positive")


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def velocity_at_time(v0, k, t):
    """v = v0 / (1 + k v0 t)."""
    x = np.multiply(np.multiply(k, v0), t)
    _check_domain(x)
    return _scalar(np.divide(v0, 1.0 + x))


def _log1p_over_x(x):
    """ln(1 + x) / x, continuous through x = 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_X
    safe = np.where(small, 1.0, x)
    out = np.log1p(safe) / safe
    series = 1.0 - x / 2.0 + x * x / 3.0 - x ** 3 / 4.0
    return np.where(small, series, out)


def _dlog1p_over_x(x):
    """Derivative of ln(1 + x) / x with respect to x."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_X
    safe = np.where(small, 1.0, x)
    out = (safe / (1.0 + safe) - np.log1p(safe)) / (safe * safe)
    series = -0.5 + 2.0 * x / 3.0 - 0.75 * x * x + 0.8 * x ** 3
    return np.where(small, series, out)


def displacement_at_time(v0, k, C, t):
    """D(t) = ln(1 + k v0 t) / k + C; for k below 1e-12 the linear limit v0 t + C."""
    vt = np.multiply(v0, t)
    x = np.multiply(k, vt)
    _check_domain(x)
    if np.all(np.asarray(k) < _K_LINEAR):
        D = np.add(vt, C)
    else:
        D = np.where(np.asarray(k) < _K_LINEAR, vt, vt * _log1p_over_x(x)) + C
    return _scalar(D)


def velocity_at_displacement(v0, k, D):
    """v = v0 exp(-k D)."""
    return _scalar(np.multiply(v0, np.exp(-np.multiply(k, D))))


def _time_for_displacement(v0: float, k: float, D: float) -> float:
    """Inverse of D(t) with C = 0 (used by the simulator and tests)."""
    if k < _K_LINEAR:
        return D / v0
    return math.expm1(k * D) / (k * v0)


# --------------------------------------------------------------------- fitting


@dataclass(frozen=True, eq=False)
class DecayFit:
    v0: float
    k: float
    C: float
    covariance: np.ndarray
    rms: float
    iterations: int
    converged: bool
    n_points: int
    t0_us: int  # timestamp taken as t = 0

    def displacement(self, t_us) -> np.ndarray:
        t = (np.asarray(t_us, dtype=float) - self.t0_us) * 1e-6
        return displacement_at_time(self.v0, self.k, self.C, t)

    def velocity(self, t_us) -> np.ndarray:
        t = (np.asarray(t_us, dtype=float) - self.t0_us) * 1e-6
        return velocity_at_time(self.v0, self.k, t)

    def report(self) -> str:
        lines = [
            ("v0_mps", repr(float(self.v0))),
            ("k_per_m", repr(float(self.k))),
            ("C_m", repr(float(self.C))),
            ("rms_m", repr(float(self.rms))),
            ("n_points", str(self.n_points)),
            ("converged", str(self.converged).lower()),
            ("iterations", str(self.iterations)),
            ("t0_us", str(self.t0_us)),
        ]
        return "".join(f"{k}={v}\n" for k, v in lines)

    @classmethod
    def from_report(cls, text: str) -> "DecayFit":
        """Inverse of report(); the covariance is not stored and comes back as NaN."""
        kv = parse_fit_report(text)
        try:
            return cls(float(kv["v0_mps"]), float(kv["k_per_m"]), float(kv["C_m"]),
                       np.full((3, 3), np.nan), float(kv["rms_m"]), int(kv["iterations"]),
                       kv["converged"] == "true", int(kv["n_points"]), int(kv["t0_us"]))
        except KeyError as exc:
            raise SchemaError(exc.args[0]) from None
        except ValueError as exc:
            raise SchemaError("fit report", str(exc)) from None


def parse_fit_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def _residuals_jacobian(params, t, y):
    v0, k, C = params
    vt = v0 * t
    x = k * vt
    h = _log1p_over_x(x)
    r = vt * h + C - y
    J = np.empty((len(t), 3))
    J[:, 0] = t / (1.0 + x)
    J[:, 1] = vt * vt * _dlog1p_over_x(x)
    J[:, 2] = 1.0
    return r, J


def _project(p):
    return np.array([min(max(p[0], _V0_MIN), V0_MAX), min(max(p[1], 0.0), K_MAX), p[2]])


def robust_slope(t, y, max_pairs: int = 1000) -> float:
    """Median of pairwise slopes; pairs i with i + n/2 over time-sorted samples."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    half = max(n // 2, 1)
    i = np.unique(np.linspace(0, n - half - 1, min(max_pairs, n - half)).round().astype(int))
    j = i + half
    dt = t[j] - t[i]
    ok = dt != 0
    if not np.any(ok):
        raise InsufficientData("all observations share one timestamp")
    return float(np.median((y[j][ok] - y[i][ok]) / dt[ok]))


def levenberg_marquardt(fun, x0, max_iter: int = 200, tol: float = 1e-10, lam0: float = 1e-3,
                        project=lambda p: p):
    """Projected Levenberg-Marquardt with Marquardt diagonal scaling.

    `fun(x)` returns (residuals, jacobian). lambda is divided by 10 on an
    accepted step and multiplied by 10 on a rejected one. Converged when both
    the relative step and the relative cost decrease fall below `tol`, or when
    no step can lower the cost any further (the iterate is stationary).
    Returns (x, cost, iterations, converged, jacobian).
    """
    x = project(np.asarray(x0, dtype=float))
    r, J = fun(x)
    cost = float(r @ r)
    lam = lam0
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = project(x + step)
            r_new, J_new = fun(x_new)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # No descent direction left at any damping: stationary point.
            converged = True
            break
        dx = x_new - x
        rel_step = np.max(np.abs(dx) / np.maximum(np.abs(x_new), 1e-12))
        rel_cost = (cost - cost_new) / max(cost, np.finfo(float).tiny)
        x, r, J, cost = x_new, r_new, J_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if (rel_step < tol and rel_cost < tol) or cost == 0.0:
            converged = True
            break
    return x, cost, it, converged, J


def fit_decay(obs: Sequence[ObservationPoint], max_iter: int = 200,
              tol: float = 1e-10) -> DecayFit:
    """Least-squares fit of arc length against time with the displacement law.

    Time is re-based to the earliest observation, so v0 is the speed at first
    observation. Parameters are kept inside v0 in (0, 1e4] m/s and k in [0, 10] 1/m.
    """
    if len(obs) < 3:
        raise InsufficientData(f"need at least 3 observations, got {len(obs)}")
    t_us = np.array([o.t for o in obs], dtype=np.int64)
    arc = np.array([o.arc for o in obs], dtype=float)
    if len(np.unique(t_us)) < 3:
        raise InsufficientData("need at least 3 distinct timestamps")
    order = np.lexsort((arc, t_us))
    t_us, arc = t_us[order], arc[order]
    t0 = int(t_us[0])
    t = (t_us - t0) * 1e-6

    v_init = robust_slope(t, arc)
    x0 = np.array([v_init if v_init > 0 else 1.0, 1e-3, arc[0]])
    x, cost, it, converged, J = levenberg_marquardt(
        lambda p: _residuals_jacobian(p, t, arc), x0, max_iter, tol, project=_project)
    if not converged:
        log.warning("decay fit did not converge in %d iterations", it)
    n = len(t)
    dof = max(n - 3, 1)
    cov = np.linalg.pinv(J.T @ J) * (cost / dof)
    return DecayFit(float(x[0]), float(x[1]), float(x[2]), cov, math.sqrt(cost / n), it,
                    converged, n, t0)


def naive_velocity_baseline(obs: Sequence[ObservationPoint], lag: int = 1) -> list[tuple[float, float]]:
    """Finite-difference speeds between observations `lag` apart in time order.

    Returns (t_us, v_mps) pairs stamped at the earlier observation; pairs
    sharing a timestamp are skipped.
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    pts = sorted(obs, key=lambda o: (o.t, o.arc))
    out = []
    for a, b in zip(pts, pts[lag:]):
        dt = (b.t - a.t) * 1e-6
        if dt == 0:
            continue
        out.append((float(a.t), (b.arc - a.arc) / dt))
    return out
