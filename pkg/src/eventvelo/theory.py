"""Interior-ballistics prediction of muzzle velocity for a light gas gun.

Gas at pressure Q0 in a chamber of volume V expands polytropically behind a
bore of area s as the fragment travels l0 down the barrel:

    phi * E = integral_0^l0  Q0 * V**gamma * s / (V + s*l)**gamma  dl

and the fragment leaves with kinetic energy E = M v0^2 / 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import integrate

from .errors import SchemaError, ValidationError
from .motion import velocity_at_displacement

# JSON field name -> dataclass attribute
_CONFIG_FIELDS = {"l0_m": "l0", "Q0_pa": "Q0", "V_m3": "V", "phi": "phi", "gamma": "gamma",
                  "s_m2": "s", "M_kg": "M"}


@dataclass(frozen=True)
class GasGunConfig:
    l0: float  # barrel length, m
    Q0: float  # initial chamber pressure, Pa
    V: float  # chamber volume, m^3
    phi: float  # secondary work coefficient
    gamma: float  # polytropic index
    s: float  # bore area, m^2
    M: float  # fragment mass, kg

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{f.name} must be finite and strictly positive, got {v}")
        if self.phi < 1:
            raise ValidationError(f"phi must be >= 1, got {self.phi}")


# Light gas gun used in the field trial.
REFERENCE_GAS_GUN = GasGunConfig(l0=1.5, Q0=5e6, V=0.05, phi=1.05, gamma=1.2, s=5.03e-5, M=0.005)


def gas_gun_from_dict(data: dict) -> GasGunConfig:
    kw = {}
    for key, attr in _CONFIG_FIELDS.items():
        if key not in data:
            raise SchemaError(key)
        try:
            kw[attr] = float(data[key])
        except (TypeError, ValueError):
            raise SchemaError(key, "expected a number") from None
    return GasGunConfig(**kw)


def gas_gun_to_dict(cfg: GasGunConfig) -> dict:
    return {key: getattr(cfg, attr) for key, attr in _CONFIG_FIELDS.items()}


def read_gas_gun(path) -> GasGunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("<root>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("<root>", "expected a JSON object")
    return gas_gun_from_dict(data)


def _integrand(cfg: GasGunConfig, l):
    return cfg.Q0 * cfg.V ** cfg.gamma * cfg.s / (cfg.V + cfg.s * l) ** cfg.gamma


def muzzle_energy(cfg: GasGunConfig, method: str = "closed") -> float:
    """Kinetic energy (J) delivered to the fragment at the muzzle.

    method="closed" evaluates the antiderivative, written with expm1/log1p so
    that gamma close to 1 stays accurate and gamma == 1 is the exact limit.
    method="quad" integrates numerically (scipy.integrate.quad).
    """
    if method == "quad":
        val, _ = integrate.quad(lambda l: _integrand(cfg, l), 0.0, cfg.l0,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return val / cfg.phi
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    expansion = math.log1p(cfg.s * cfg.l0 / cfg.V)  # ln((V + s l0) / V)
    a = 1.0 - cfg.gamma
    if a == 0.0:
        work = cfg.Q0 * cfg.V * expansion
    else:
        work = cfg.Q0 * cfg.V * math.expm1(a * expansion) / a
    return work / cfg.phi


def predict_muzzle_velocity(cfg: GasGunConfig) -> float:
    return math.sqrt(2.0 * muzzle_energy(cfg) / cfg.M)


def theory_decay_curve(v0: float, k: float, D_grid) -> list[tuple[float, float]]:
    D = np.asarray(D_grid, dtype=float)
    if not np.all(np.isfinite(D)):
        raise ValueError("displacement grid must be finite")
    v = np.atleast_1d(velocity_at_displacement(v0, k, D))
    return list(zip(D.ravel().tolist(), v.ravel().tolist()))


def compare_measurements(ours: float, reference: float) -> tuple[float, float]:
    """(ours - reference in m/s, |ours - reference| / reference in percent)."""
    if not reference > 0:
        raise ValueError("reference velocity must be positive")
    absolute = ours - reference
    return absolute, abs(absolute) / reference * 100.0


def comparison_table(ours: float, references: dict[str, float]) -> str:
    rows = [f"{'':<16}{'initial velocity':>18}{'deviation':>24}",
            f"{'Ours':<16}{ours:>14.1f} m/s{'-':>24}"]
    for name, ref in references.items():
        a, rel = compare_measurements(ours, ref)
        rows.append(f"{name:<16}{ref:>14.1f} m/s{a:>+15.2f} (absolute)")
        rows.append(f"{'':<16}{'':>18}{rel:>14.2f}% (relative)")
    return "\n".join(rows) + "\n"
