"""Linear flow, Picard iteration and an RK4 reference for the mode ODEs

    c''(t, n) + lambda(n)^2 c(t, n) = A(t, n),
    lambda(n) = sqrt((n.omega)^2 + (n.omega)^4).

Picard trajectories keep the linear flow and the Duhamel (nonlinear) part
as separate arrays.  The sum is what callers normally use; the split lets
residual checks difference the small Duhamel part without round-off from
the O(1) oscillatory part.  The Duhamel part is accumulated and stored in
extended precision (np.longdouble) because a second difference divides its
rounding noise by h^2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from .lattice import (
    CoefficientField,
    DecayEnvelope,
    FrequencySystem,
    self_convolution_batch,
    weighted_self_convolution_batch,
)

log = logging.getLogger(__name__)

# Largest h * lambda_max accepted by picard_step.
RESOLUTION_LIMIT = math.pi / 4

EXT_REAL = np.longdouble
EXT_COMPLEX = np.clongdouble

SYMMETRIZED = "symmetrized"
SIGNED = "signed"
CONVENTIONS = (SYMMETRIZED, SIGNED)


class ResolutionError(ValueError):
    """The time grid is too coarse for the fastest oscillation in the ball."""


class BeyondExistenceTime(ValueError):
    """The requested horizon lies past the guaranteed existence time."""


class NotConverged(RuntimeError):
    def __init__(self, kmax: int, last_delta: float, trajectory=None, diagnostics=None):
        super().__init__(f"Picard iteration did not converge in {kmax} iterates (last delta {last_delta:.3e})")
        self.kmax = kmax
        self.last_delta = last_delta
        self.trajectory = trajectory
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class TimeGrid:
    t_end: float
    J: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.J < 2 or self.J % 2:
            raise ValueError(f"J must be even and >= 2, got {self.J}")

    @property
    def h(self) -> float:
        return self.t_end / self.J

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.J + 1) * self.h

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_end, self.J * factor)


@dataclass(frozen=True, eq=False)
class TrajectoryField:
    """One coefficient snapshot per grid node.

    ``values`` has shape (J + 1, modes).  ``duhamel``, when present, is the
    nonlinear part of ``values`` (values = linear flow of c0/c0p + duhamel),
    kept in extended precision.  ``resolve`` rebuilds the same trajectory
    kind on another grid; residual checks use it for a second grid.
    """

    grid: TimeGrid
    fs: FrequencySystem
    radius: int
    values: np.ndarray
    duhamel: np.ndarray | None = None
    c0: CoefficientField | None = None
    c0p: CoefficientField | None = None
    resolve: Callable[[TimeGrid], "TrajectoryField"] | None = None

    def __post_init__(self):
        self.values.setflags(write=False)
        if self.duhamel is not None:
            self.duhamel.setflags(write=False)

    def snapshot(self, j: int) -> CoefficientField:
        return CoefficientField(self.fs.nu, self.radius, self.values[j])

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[CoefficientField]:
        return (self.snapshot(j) for j in range(len(self)))

    def sup_distance(self, other: "TrajectoryField") -> float:
        if self.values.shape != other.values.shape:
            raise ValueError("trajectories live on different grids")
        return float(np.abs(self.values - other.values).max(initial=0.0))


@dataclass
class PicardDiagnostics:
    """deltas[i] = sup_{j,n} |c_{i+1}(t_j, n) - c_i(t_j, n)|."""

    deltas: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def ratios(self) -> list[float]:
        d = self.deltas
        return [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0]


def dispersion_lambda(n: Sequence[int], fs: FrequencySystem) -> float:
    x = fs.dot(n)
    return abs(x) * math.sqrt(1.0 + x * x)


def dispersion(fs: FrequencySystem, radius: int | None = None) -> np.ndarray:
    x = fs.dots(radius)
    return np.abs(x) * np.sqrt(1.0 + x * x)


def _sinc_factor(lam: np.ndarray, t) -> np.ndarray:
    """sin(lam t) / lam with the value t where lam == 0."""
    t = np.asarray(t, dtype=float)
    lam_b, t_b = np.broadcast_arrays(lam, t)
    out = np.array(t_b, dtype=float)
    nz = lam_b != 0
    out[nz] = np.sin(lam_b[nz] * t_b[nz]) / lam_b[nz]
    return out


def _linear_flow_values(c0: np.ndarray, c0p: np.ndarray, lam: np.ndarray, times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype=float)[:, None]
    return c0 * np.cos(lam * t) + c0p * _sinc_factor(lam, t)


def linear_flow(c0: CoefficientField, c0p: CoefficientField, t: float, fs: FrequencySystem) -> CoefficientField:
    """c(n) cos(lambda t) + c'(n) sin(lambda t) / lambda, per mode."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    _check_data(c0, c0p, fs)
    if t == 0:
        return c0
    lam = dispersion(fs, c0.radius)
    vals = _linear_flow_values(c0.values, c0p.values, lam, np.array([t]))[0]
    return c0.with_values(vals)


def duhamel_factor(fs: FrequencySystem, radius: int, convention: str = SYMMETRIZED) -> np.ndarray:
    """Coefficient g(n) with Duhamel term = g(n) * int_0^t sin(lambda (t - tau)) Q(tau, n) dtau.

    Writing K = exp(i lambda (tau - t)) - exp(i lambda (t - tau)) = -2i sin(lambda (t - tau)),
    the symmetrized prefactor -i (n.omega)^2 / (2 lambda) becomes
    g = -|n.omega| / sqrt(1 + (n.omega)^2); the ``signed`` convention keeps the
    sign of n.omega instead of its modulus.  g = 0 where n.omega = 0.
    """
    x = fs.dots(radius)
    if convention == SYMMETRIZED:
        s = np.abs(x)
    elif convention == SIGNED:
        s = x
    else:
        raise ValueError(f"unknown convention {convention!r}; expected one of {CONVENTIONS}")
    return -s / np.sqrt(1.0 + x * x)


@lru_cache(maxsize=16)
def quadrature_weights(J: int) -> np.ndarray:
    """Row j integrates over [0, t_j] from node values (in units of h).

    Even j: composite Simpson.  Odd j >= 3: Simpson up to j - 3 and the 3/8
    rule on the last three intervals.  j = 1: the quadratic through nodes
    0, 1, 2 integrated over the first interval.
    """
    W = np.zeros((J + 1, J + 1))
    for j in range(1, J + 1):
        if j == 1:
            W[1, :3] = (5 / 12, 8 / 12, -1 / 12)
            continue
        even_end = j if j % 2 == 0 else j - 3
        if even_end > 0:
            W[j, 0:even_end + 1:2] += 2 / 3
            W[j, 1:even_end:2] += 4 / 3
            W[j, 0] -= 1 / 3
            W[j, even_end] -= 1 / 3
        if j % 2:
            W[j, j - 3:j + 1] += np.array([3, 9, 9, 3]) / 8
    W.setflags(write=False)
    return W


@lru_cache(maxsize=8)
def _duhamel_kernel(grid: TimeGrid, lam_key: tuple[float, ...]) -> np.ndarray:
    """Kw[j, i, m] = h W[j, i] sin(lambda_m (t_j - t_i))."""
    lam = np.array(lam_key, dtype=EXT_REAL)
    t = np.arange(grid.J + 1, dtype=EXT_REAL) * (EXT_REAL(grid.t_end) / grid.J)
    W = quadrature_weights(grid.J).astype(EXT_REAL) * (EXT_REAL(grid.t_end) / grid.J)
    cols = W.shape[1]
    Kw = np.empty((grid.J + 1, cols, lam.size), dtype=EXT_REAL)
    for j in range(grid.J + 1):
        Kw[j] = W[j][:, None] * np.sin(lam[None, :] * (t[j] - t[:cols])[:, None])
    Kw.setflags(write=False)
    return Kw


def check_resolution(grid: TimeGrid, fs: FrequencySystem, radius: int) -> float:
    lam_max = float(dispersion(fs, radius).max())
    if grid.h * lam_max > RESOLUTION_LIMIT:
        raise ResolutionError(
            f"h * lambda_max = {grid.h * lam_max:.3g} exceeds {RESOLUTION_LIMIT:.3g}; increase J"
        )
    return lam_max


def linear_trajectory(c0: CoefficientField, c0p: CoefficientField, grid: TimeGrid, fs: FrequencySystem) -> TrajectoryField:
    """First Picard iterate: the linear flow sampled on the grid."""
    _check_data(c0, c0p, fs)
    lam = dispersion(fs, c0.radius)
    vals = _linear_flow_values(c0.values, c0p.values, lam, grid.nodes)
    vals[0] = c0.values
    return TrajectoryField(
        grid, fs, c0.radius, vals, np.zeros(vals.shape, dtype=EXT_COMPLEX), c0, c0p,
        resolve=lambda g: linear_trajectory(c0, c0p, g, fs),
    )


def picard_step(
    prev: TrajectoryField,
    c0: CoefficientField,
    c0p: CoefficientField,
    fs: FrequencySystem,
    convention: str = SYMMETRIZED,
) -> TrajectoryField:
    """c_k = linear flow + g(n) int_0^t sin(lambda (t - tau)) Q_{k-1}(tau, n) dtau on every node."""
    _check_data(c0, c0p, fs)
    grid, radius = prev.grid, c0.radius
    if prev.radius != radius:
        raise ValueError("previous iterate and data live on different balls")
    check_resolution(grid, fs, radius)
    lam = dispersion(fs, radius)
    Q = self_convolution_batch(prev.values, fs.nu, radius)
    Kw = _duhamel_kernel(grid, tuple(lam.tolist()))
    g = duhamel_factor(fs, radius, convention).astype(EXT_REAL)
    duh = g * np.einsum("jim,im->jm", Kw, Q.astype(EXT_COMPLEX))
    duh[0] = 0.0
    lin = _linear_flow_values(c0.values, c0p.values, lam, grid.nodes)
    lin[0] = c0.values
    return TrajectoryField(grid, fs, radius, lin + duh.astype(complex), duh, c0, c0p)


def picard_iterates(
    c0: CoefficientField,
    c0p: CoefficientField,
    grid: TimeGrid,
    fs: FrequencySystem,
    convention: str = SYMMETRIZED,
) -> Iterator[TrajectoryField]:
    """Endless sequence c_0 (linear flow), c_1, c_2, ..."""
    cur = linear_trajectory(c0, c0p, grid, fs)
    while True:
        yield cur
        cur = picard_step(cur, c0, c0p, fs, convention)


def picard_solve(
    c0: CoefficientField,
    c0p: CoefficientField,
    grid: TimeGrid,
    fs: FrequencySystem,
    tol: float = 1e-10,
    kmax: int = 20,
    *,
    convention: str = SYMMETRIZED,
    strict: bool = True,
    env: DecayEnvelope | None = None,
    divisor: int = 192,
    allow_beyond: bool = False,
    on_iterate: Callable[[int, TrajectoryField], None] | None = None,
) -> tuple[TrajectoryField, PicardDiagnostics]:
    """Iterate from the linear flow until sup |c_{k+1} - c_k| < tol.

    At most ``kmax`` iterates c_0 .. c_{kmax-1} are returned as candidates; the
    step from the last candidate is still taken to measure its delta.  On
    convergence the newest iterate is returned; otherwise the last candidate
    (so ``kmax=1`` yields the linear flow).  With ``strict`` a missed
    tolerance raises :class:`NotConverged`.

    Given ``env``, a grid reaching past the existence time for that envelope
    (and threshold ``divisor``) is refused unless ``allow_beyond`` is set.
    ``on_iterate(k, c_k)`` sees every iterate that was computed.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if kmax < 1:
        raise ValueError("kmax must be >= 1")
    if env is not None and not allow_beyond:
        from .bounds import existence_time

        t0 = existence_time(env, fs, divisor)
        if grid.t_end > t0 * (1 + 1e-12):
            raise BeyondExistenceTime(f"t_end={grid.t_end:.6g} exceeds the existence time {t0:.6g}")
    diag = PicardDiagnostics()
    it = picard_iterates(c0, c0p, grid, fs, convention)
    cur = next(it)
    result = cur
    if on_iterate is not None:
        on_iterate(0, cur)
    for k in range(1, kmax + 1):
        nxt = next(it)
        if on_iterate is not None:
            on_iterate(k, nxt)
        delta = cur.sup_distance(nxt)
        diag.deltas.append(delta)
        diag.iterations = k
        log.debug("picard iterate %d: delta=%.3e", k, delta)
        if delta < tol:
            diag.converged = True
            result = nxt
            break
        result = cur if k == kmax else nxt
        cur = nxt
    if not diag.converged and strict:
        raise NotConverged(kmax, diag.deltas[-1], result, diag)

    def resolve(g: TimeGrid) -> TrajectoryField:
        return picard_solve(c0, c0p, g, fs, tol, kmax, convention=convention, strict=False,
                            env=env, divisor=divisor, allow_beyond=allow_beyond)[0]

    return replace(result, resolve=resolve), diag


def ode_reference_solve(
    c0: CoefficientField,
    c0p: CoefficientField,
    grid: TimeGrid,
    fs: FrequencySystem,
    substeps: int = 1,
    *,
    nonlinear: bool = True,
) -> TrajectoryField:
    """Classical RK4 on (c, c') with A recomputed from the current field at every stage."""
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    _check_data(c0, c0p, fs)
    radius = c0.radius
    lam2 = dispersion(fs, radius) ** 2

    def accel(c: np.ndarray) -> np.ndarray:
        a = -lam2 * c
        if nonlinear:
            a = a + weighted_self_convolution_batch(c, fs, radius)
        return a

    dt = grid.h / substeps
    c = c0.values.copy()
    v = c0p.values.copy()
    out = np.empty((grid.J + 1, c.size), dtype=complex)
    out[0] = c
    for j in range(1, grid.J + 1):
        for _ in range(substeps):
            k1c, k1v = v, accel(c)
            k2c, k2v = v + 0.5 * dt * k1v, accel(c + 0.5 * dt * k1c)
            k3c, k3v = v + 0.5 * dt * k2v, accel(c + 0.5 * dt * k2c)
            k4c, k4v = v + dt * k3v, accel(c + dt * k3c)
            c = c + dt / 6 * (k1c + 2 * k2c + 2 * k3c + k4c)
            v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        out[j] = c
    return TrajectoryField(
        grid, fs, radius, out, None, c0, c0p,
        resolve=lambda g: ode_reference_solve(c0, c0p, g, fs, substeps, nonlinear=nonlinear),
    )


def time_derivative_at_zero(traj: TrajectoryField) -> CoefficientField:
    """One-sided second-order difference (-3 f0 + 4 f1 - f2) / (2h)."""
    if traj.grid.J < 2:
        raise ValueError("need at least two intervals")
    f = traj.values
    d = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * traj.grid.h)
    return CoefficientField(traj.fs.nu, traj.radius, d)


def _check_data(c0: CoefficientField, c0p: CoefficientField, fs: FrequencySystem) -> None:
    if (c0.nu, c0.radius) != (c0p.nu, c0p.radius):
        raise ValueError("c0 and c0p live on different balls")
    if c0.nu != fs.nu:
        raise ValueError("data and frequency system disagree on nu")
    if c0.radius > fs.N:
        raise ValueError(f"data radius {c0.radius} exceeds truncation radius {fs.N}")
