"""Decay envelopes, existence/uniqueness times and contraction certificates as checks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

import numpy as np

from .evolution import PicardDiagnostics, TimeGrid, TrajectoryField
from .lattice import CoefficientField, DecayEnvelope, FrequencySystem

DEFAULT_ABS_TOL = 1e-12
THRESHOLD_DIVISORS = (24, 48, 96, 192)
DEFAULT_DIVISOR = 192

# Deltas below this multiple of eps * sup|c| are round-off, not contraction.
NOISE_FLOOR_ULPS = 64


@dataclass
class BoundReport:
    name: str
    threshold: float | None
    margin: float
    passed: bool
    worst: dict[str, Any] | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def existence_time(env: DecayEnvelope, fs: FrequencySystem, divisor: int = DEFAULT_DIVISOR) -> float:
    """kappa^nu / (32 B divisor^nu |omega|); divisor 192 is the most conservative."""
    if divisor not in THRESHOLD_DIVISORS:
        raise ValueError(f"divisor must be one of {THRESHOLD_DIVISORS}, got {divisor}")
    nu = fs.nu
    return env.kappa**nu / (32.0 * env.B * float(divisor) ** nu * fs.omega_l1)


def uniqueness_time(t0: float, C1: float, rho: float, fs: FrequencySystem) -> float:
    """min(t0, rho^nu / (C1 2^(nu+1) 288^nu |omega|))."""
    if not (C1 > 0 and rho > 0):
        raise ValueError("C1 and rho must be positive")
    nu = fs.nu
    return min(t0, rho**nu / (C1 * 2.0 ** (nu + 1) * 288.0**nu * fs.omega_l1))


def envelope_bound(field_: CoefficientField, env: DecayEnvelope, scale: float, rate_divisor: float) -> np.ndarray:
    return scale * env.B * np.exp(-env.kappa * field_.index.norms / rate_divisor)


def check_envelope(
    field_: CoefficientField,
    env: DecayEnvelope,
    scale: float = 2.0,
    rate_divisor: float = 4.0,
    *,
    abs_tol: float = DEFAULT_ABS_TOL,
    name: str = "envelope",
) -> BoundReport:
    """|c(n)| <= scale * B * exp(-kappa |n| / rate_divisor) on every mode."""
    return check_envelope_many([field_], env, scale, rate_divisor, abs_tol=abs_tol, name=name)


def check_envelope_many(
    fields: Iterable[CoefficientField] | TrajectoryField,
    env: DecayEnvelope,
    scale: float = 2.0,
    rate_divisor: float = 4.0,
    *,
    abs_tol: float = DEFAULT_ABS_TOL,
    name: str = "envelope",
) -> BoundReport:
    if not (scale > 0 and rate_divisor > 0):
        raise ValueError("scale and rate_divisor must be positive")
    margin, worst = math.inf, None
    for j, f in enumerate(fields):
        slack = envelope_bound(f, env, scale, rate_divisor) - np.abs(f.values)
        i = int(np.argmin(slack))
        if slack[i] < margin:
            margin = float(slack[i])
            worst = {"snapshot": j, "n": list(f.keys()[i]), "value": float(abs(f.values[i]))}
    return BoundReport(
        name=name,
        threshold=None,
        margin=margin,
        passed=margin >= -abs_tol,
        worst=worst,
        details={"scale": scale, "rate_divisor": rate_divisor, "B": env.B, "kappa": env.kappa},
    )


def contraction_bound(k: int, env: DecayEnvelope, fs: FrequencySystem, t: float) -> float:
    """B^{k+1} (8e)^k 96^{k nu} (kappa^{-nu} |omega| t)^k."""
    nu = fs.nu
    return env.B ** (k + 1) * (8 * math.e) ** k * 96.0 ** (k * nu) * (env.kappa**-nu * fs.omega_l1 * t) ** k


def contraction_rate(env: DecayEnvelope, fs: FrequencySystem, t: float) -> float:
    """r = 8e 96^nu kappa^{-nu} |omega| t B."""
    return 8 * math.e * 96.0**fs.nu * env.kappa**-fs.nu * fs.omega_l1 * t * env.B


def check_contraction(
    diag: PicardDiagnostics,
    env: DecayEnvelope,
    fs: FrequencySystem,
    grid: TimeGrid,
    *,
    scale: float | None = None,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> BoundReport:
    """deltas[k-1] = sup |d_{k+1} - d_k| against the a priori bound, plus the ratio test.

    A ratio delta_{k+1} / delta_k is compared with r whenever delta_k sits above
    the round-off floor NOISE_FLOOR_ULPS * eps * scale (scale: sup of the data);
    noise in the numerator can only inflate the ratio.
    """
    r = contraction_rate(env, fs, grid.t_end)
    floor = NOISE_FLOOR_ULPS * np.finfo(float).eps * (scale if scale is not None else 2 * env.B)
    margin, worst = math.inf, None
    bounds = []
    for i, delta in enumerate(diag.deltas):
        k = i + 1
        b = contraction_bound(k, env, fs, grid.t_end)
        bounds.append(b)
        if b - delta < margin:
            margin, worst = b - delta, {"k": k, "delta": delta, "bound": b}
    ratios = []
    for i in range(len(diag.deltas) - 1):
        a, b = diag.deltas[i], diag.deltas[i + 1]
        if a > floor:
            ratios.append(b / a)
    if not diag.deltas:
        margin = 0.0
    # the margin covers all three conditions: bound, observed ratio <= r, r < 1
    margin = min([margin, 1.0 - r] + [r - q for q in ratios])
    if margin == 1.0 - r and r >= 1:
        worst = {"rate": r}
    elif ratios and margin == r - max(ratios):
        worst = {"observed_ratio": max(ratios), "rate": r}
    passed = margin >= -abs_tol
    return BoundReport(
        name="contraction",
        threshold=r,
        margin=float(margin),
        passed=bool(passed),
        worst=worst,
        details={
            "deltas": list(diag.deltas),
            "bounds": bounds,
            "observed_ratios": ratios,
            "rate": r,
            "noise_floor": floor,
            "rate_below_one": r < 1,
        },
    )


def uniqueness_compare(
    a: TrajectoryField,
    b: TrajectoryField,
    t1: float | None = None,
    tol: float = 1e-6,
) -> BoundReport:
    """sup over nodes t_j <= t1 and all modes of |a - b|."""
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ValueError("trajectories live on different grids")
    if a.fs != b.fs:
        raise ValueError("trajectories use different frequency systems")
    nodes = a.grid.nodes
    mask = nodes <= (t1 if t1 is not None else a.grid.t_end) * (1 + 1e-12)
    diff = np.abs(a.values[mask] - b.values[mask])
    j, i = np.unravel_index(int(np.argmax(diff)), diff.shape)
    sup = float(diff[j, i])
    return BoundReport(
        name="uniqueness",
        threshold=tol,
        margin=tol - sup,
        passed=sup <= tol,
        worst={"t": float(nodes[mask][j]), "n": list(a.snapshot(0).keys()[i]), "difference": sup},
        details={"sup_distance": sup, "t1": t1},
    )
