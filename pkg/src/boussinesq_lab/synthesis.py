"""Point evaluation of u(t, x) and a-posteriori residuals of the mode equations."""
from __future__ import annotations

import numpy as np

from .bounds import BoundReport
from .evolution import TimeGrid, TrajectoryField, dispersion
from .lattice import CoefficientField, FrequencySystem, weighted_self_convolution_batch

# Residuals below this are treated as exact (zero data, pure linear flow).
RESIDUAL_FLOOR = 1e-13
# Accept the fine grid when |r_h| <= RICHARDSON_SLACK * C h^2, C = |r_2h| / (2h)^2.
RICHARDSON_SLACK = 1.25
EXT_FLOAT = np.longdouble


class GridTooCoarse(ValueError):
    pass


def evaluate_u(field_: CoefficientField, x, fs: FrequencySystem):
    """sum_n c(n) exp(i x n.omega); scalar or array x."""
    x_arr = np.asarray(x, dtype=float)
    phase = np.exp(1j * np.multiply.outer(x_arr, fs.dots(field_.radius)))
    out = (phase * field_.values).sum(axis=-1)
    return complex(out) if out.ndim == 0 else out


def derivative_field(field_: CoefficientField, order: int, fs: FrequencySystem) -> CoefficientField:
    """d^order/dx^order: multiply mode n by (i n.omega)^order."""
    if order not in (1, 2, 3, 4):
        raise ValueError(f"order must be 1..4, got {order}")
    return field_.with_values(field_.values * (1j * fs.dots(field_.radius)) ** order)


def _second_difference(values: np.ndarray, h: float) -> np.ndarray:
    return (values[2:] - 2.0 * values[1:-1] + values[:-2]) / (h * h)


def _residual_arrays(values, duhamel, fs: FrequencySystem, radius: int, t_end: float, J: int, nonlinear: bool) -> np.ndarray:
    if duhamel is not None:
        part = duhamel
        lam2 = dispersion(fs, radius).astype(EXT_FLOAT) ** 2
        h = EXT_FLOAT(t_end) / J
    else:
        part = values
        lam2 = dispersion(fs, radius) ** 2
        h = t_end / J
    r = (_second_difference(part, h) + lam2 * part[1:-1]).astype(complex)
    if nonlinear:
        r = r - weighted_self_convolution_batch(values[1:-1], fs, radius)
    return r


def residual_values(traj: TrajectoryField, *, nonlinear: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """r(t_j, n) = c'' + ((n.omega)^4 + (n.omega)^2) c - A on the interior nodes.

    c'' is a central second difference.  When the trajectory carries its
    Duhamel part, only that part is differenced: the linear flow solves the
    homogeneous equation exactly, so its contribution to c'' + lambda^2 c
    vanishes identically.
    """
    g = traj.grid
    r = _residual_arrays(traj.values, traj.duhamel, traj.fs, traj.radius, g.t_end, g.J, nonlinear)
    return g.nodes[1:-1], r


def max_residual(traj: TrajectoryField, *, nonlinear: bool = True) -> float:
    return float(np.abs(residual_values(traj, nonlinear=nonlinear)[1]).max(initial=0.0))


def _coarse_residual(traj: TrajectoryField, nonlinear: bool) -> tuple[float, str]:
    J = traj.grid.J
    if traj.resolve is not None and (J // 2) % 2 == 0:
        coarse = traj.resolve(TimeGrid(traj.grid.t_end, J // 2))
        return max_residual(coarse, nonlinear=nonlinear), "resolved"
    # Without a way to recompute, reuse every second node.
    duh = None if traj.duhamel is None else traj.duhamel[::2]
    r = _residual_arrays(traj.values[::2], duh, traj.fs, traj.radius, traj.grid.t_end, J // 2, nonlinear)
    return float(np.abs(r).max(initial=0.0)), "subsampled"


def iteration_floor(traj: TrajectoryField, last_delta: float) -> float:
    """Bound on the residual left by stopping a fixed-point iteration.

    An iterate built from its predecessor's nonlinearity misses A(c) by
    A(c_k) - A(c_{k-1}); per mode that is at most
    max (n.omega)^2 * (||c_k||_1 + ||c_{k-1}||_1) * delta <= max (n.omega)^2 * 2 (||c||_1 + delta) * delta.
    """
    x2 = float((traj.fs.dots(traj.radius) ** 2).max())
    l1 = float(np.abs(traj.values).sum(axis=1).max())
    return x2 * 2.0 * (l1 + last_delta * traj.values.shape[1]) * last_delta


def spectral_residual(
    traj: TrajectoryField,
    fs: FrequencySystem | None = None,
    *,
    nonlinear: bool = True,
    floor: float = RESIDUAL_FLOOR,
) -> BoundReport:
    """Max-mode residual with a two-grid Richardson check of second-order decay.

    The coarse grid has J / 2 intervals; the trajectory is recomputed there
    when it knows how (``traj.resolve``), otherwise every second node is
    reused.  The report passes when the fine residual is below ``floor``
    (round-off, or see :func:`iteration_floor`), or when it is at most
    RICHARDSON_SLACK * C h^2 with C estimated from the coarse grid.
    """
    floor = max(floor, RESIDUAL_FLOOR)
    if fs is not None and fs != traj.fs:
        raise ValueError("frequency system does not match the trajectory")
    if traj.grid.J < 4:
        raise GridTooCoarse("need J >= 4")
    times, r = residual_values(traj, nonlinear=nonlinear)
    per_node = np.abs(r).max(axis=1)
    fine = float(per_node.max())
    coarse, coarse_kind = _coarse_residual(traj, nonlinear)
    h = traj.grid.h
    C = coarse / (2 * h) ** 2
    ratio = coarse / fine if fine > 0 else float("inf")
    threshold = max(RICHARDSON_SLACK * C * h * h, floor)
    return BoundReport(
        name="spectral_residual",
        threshold=threshold,
        margin=threshold - fine,
        passed=bool(fine <= threshold),
        worst={"t": float(times[int(np.argmax(per_node))]), "residual": fine},
        details={
            "max_residual": fine,
            "coarse_residual": coarse,
            "richardson_ratio": ratio,
            "coarse_grid": coarse_kind,
            "C": C,
            "floor": floor,
            "h": h,
            "per_node": list(zip(times.tolist(), per_node.tolist())),
        },
    )


def residual_field(traj: TrajectoryField, j: int, *, nonlinear: bool = True) -> CoefficientField:
    """Spectral residual at interior node j as a field (for pointwise synthesis)."""
    if not 1 <= j <= traj.grid.J - 1:
        raise ValueError("j must be an interior node")
    _, r = residual_values(traj, nonlinear=nonlinear)
    return CoefficientField(traj.fs.nu, traj.radius, r[j - 1])


def pointwise_residual(traj: TrajectoryField, j: int, x, *, nonlinear: bool = True):
    """u_tt + u_xxxx - u_xx - (u^2)_xx at (t_j, x), each term synthesized separately."""
    fs, radius = traj.fs, traj.radius
    h = traj.grid.h
    c = traj.snapshot(j)
    if traj.duhamel is not None:
        d = traj.duhamel
        hx = EXT_FLOAT(traj.grid.t_end) / traj.grid.J
        ctt = ((d[j + 1] - 2 * d[j] + d[j - 1]) / (hx * hx)).astype(complex)
        # exact second derivative of the linear flow: -lambda^2 times it
        lin = traj.values[j] - d[j].astype(complex)
        ctt = ctt - dispersion(fs, radius) ** 2 * lin
    else:
        v = traj.values
        ctt = (v[j + 1] - 2 * v[j] + v[j - 1]) / (h * h)
    out = evaluate_u(c.with_values(ctt), x, fs)
    out = out + evaluate_u(derivative_field(c, 4, fs), x, fs) - evaluate_u(derivative_field(c, 2, fs), x, fs)
    if nonlinear:
        A = weighted_self_convolution_batch(c.values, fs, radius)
        out = out - evaluate_u(c.with_values(A), x, fs)
    return out
