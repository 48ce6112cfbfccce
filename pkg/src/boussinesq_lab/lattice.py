"""Multi-indices, truncated l1 balls in Z^nu and coefficient fields on them.

All fields live on the ball |n| <= radius, stored densely in the canonical
(lexicographic) ball order.  The quadratic nonlinearity is a direct sparse
convolution over that ball; modes generated outside the output ball are
dropped.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]

# |n.omega| below this (relative to |n||omega|) counts as an exact resonance.
RESONANCE_RTOL = 1e-12


class ResonanceError(ValueError):
    """Some nonzero lattice point is orthogonal to the frequency vector."""


def l1_norm(n: Sequence[int]) -> int:
    return sum(abs(int(v)) for v in n)


def ball(nu: int, N: int) -> list[MultiIndex]:
    """All n in Z^nu with |n| <= N, lexicographically ordered."""
    if nu < 1 or N < 0:
        raise ValueError(f"need nu >= 1 and N >= 0, got nu={nu}, N={N}")
    return list(_ball(nu, N))


@lru_cache(maxsize=None)
def _ball(nu: int, N: int) -> tuple[MultiIndex, ...]:
    rng = range(-N, N + 1)
    return tuple(n for n in itertools.product(rng, repeat=nu) if l1_norm(n) <= N)


class BallIndex:
    """Dense layout of a ball: index array plus position lookup."""

    def __init__(self, nu: int, radius: int):
        self.nu = nu
        self.radius = radius
        self.keys: tuple[MultiIndex, ...] = _ball(nu, radius)
        self.points = np.array(self.keys, dtype=np.int64).reshape(len(self.keys), nu)
        self.norms = np.abs(self.points).sum(axis=1)
        self.position = {n: i for i, n in enumerate(self.keys)}

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, n) -> bool:
        return tuple(n) in self.position


@lru_cache(maxsize=None)
def ball_index(nu: int, radius: int) -> BallIndex:
    return BallIndex(nu, radius)


@dataclass(frozen=True)
class DecayEnvelope:
    """Exponential decay bound |c(n)| <= B exp(-kappa |n| / 2) on initial data."""

    B: float
    kappa: float

    def __post_init__(self):
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")


@dataclass(frozen=True)
class FrequencySystem:
    """Frequency vector omega in R^nu together with the truncation radius N.

    Construction checks n.omega != 0 for every 0 < |n| <= 2N and records the
    smallest |n.omega| over that range as ``resonance_floor``.
    """

    omega: tuple[float, ...]
    N: int
    resonance_floor: float = field(init=False)

    def __post_init__(self):
        omega = tuple(float(w) for w in self.omega)
        object.__setattr__(self, "omega", omega)
        if len(omega) < 1:
            raise ValueError("omega must have at least one component")
        if self.N < 1:
            raise ValueError(f"truncation radius must be >= 1, got {self.N}")
        if not self.omega_l1 > 0:
            raise ValueError("omega must be nonzero")
        object.__setattr__(self, "resonance_floor", resonance_floor(self))

    @property
    def nu(self) -> int:
        return len(self.omega)

    @property
    def omega_l1(self) -> float:
        return float(sum(abs(w) for w in self.omega))

    def dot(self, n: Sequence[int]) -> float:
        """n . omega"""
        return float(np.dot(np.asarray(n, dtype=float), self.omega))

    def dots(self, radius: int | None = None) -> np.ndarray:
        """n . omega for every n of the ball, in ball order."""
        r = self.N if radius is None else radius
        return _dots(self.omega, r)


@lru_cache(maxsize=64)
def _dots(omega: tuple[float, ...], radius: int) -> np.ndarray:
    idx = ball_index(len(omega), radius)
    out = idx.points.astype(float) @ np.asarray(omega)
    out.setflags(write=False)
    return out


def resonance_floor(fs: FrequencySystem) -> float:
    """min |n . omega| over 0 < |n| <= 2N; raises ResonanceError on an exact zero."""
    idx = ball_index(fs.nu, 2 * fs.N)
    dots = idx.points.astype(float) @ np.asarray(fs.omega)
    nonzero = idx.norms > 0
    vals = np.abs(dots[nonzero])
    scale = idx.norms[nonzero] * fs.omega_l1
    bad = vals <= RESONANCE_RTOL * scale
    if bad.any():
        n = tuple(int(v) for v in idx.points[nonzero][np.argmax(bad)])
        raise ResonanceError(f"n={n} satisfies n.omega = 0 for omega={fs.omega}")
    return float(vals.min())


class CoefficientField:
    """Complex amplitudes c(n) on the ball |n| <= radius (absent modes are 0).

    Treated as an immutable value: the backing array is read-only.
    """

    __slots__ = ("nu", "radius", "values")

    def __init__(self, nu: int, radius: int, values=None):
        self.nu = int(nu)
        self.radius = int(radius)
        size = len(ball_index(self.nu, self.radius))
        if values is None:
            arr = np.zeros(size, dtype=complex)
        else:
            arr = np.array(values, dtype=complex).reshape(-1)
            if arr.shape != (size,):
                raise ValueError(f"expected {size} values for nu={nu}, radius={radius}, got {arr.shape}")
        arr.setflags(write=False)
        self.values = arr

    @classmethod
    def zeros(cls, nu: int, radius: int) -> "CoefficientField":
        return cls(nu, radius)

    @classmethod
    def from_dict(cls, nu: int, radius: int, entries: Mapping[Sequence[int], complex]) -> "CoefficientField":
        idx = ball_index(nu, radius)
        arr = np.zeros(len(idx), dtype=complex)
        for n, v in entries.items():
            key = tuple(int(c) for c in n)
            if len(key) != nu:
                raise ValueError(f"index {key} has wrong dimension (nu={nu})")
            if key not in idx.position:
                raise ValueError(f"index {key} lies outside the ball of radius {radius}")
            arr[idx.position[key]] = v
        return cls(nu, radius, arr)

    @property
    def index(self) -> BallIndex:
        return ball_index(self.nu, self.radius)

    def keys(self) -> tuple[MultiIndex, ...]:
        return self.index.keys

    def __getitem__(self, n) -> complex:
        pos = self.index.position.get(tuple(n))
        return 0j if pos is None else complex(self.values[pos])

    def to_dict(self, *, nonzero_only: bool = True) -> dict[MultiIndex, complex]:
        return {
            n: complex(v)
            for n, v in zip(self.index.keys, self.values)
            if not nonzero_only or v != 0
        }

    def with_values(self, values) -> "CoefficientField":
        return CoefficientField(self.nu, self.radius, values)

    def restrict(self, radius: int) -> "CoefficientField":
        """Project onto a ball of another radius (zero-padding when larger)."""
        if radius == self.radius:
            return self
        src, dst = self.index, ball_index(self.nu, radius)
        out = np.zeros(len(dst), dtype=complex)
        for n, v in zip(src.keys, self.values):
            pos = dst.position.get(n)
            if pos is not None:
                out[pos] = v
        return CoefficientField(self.nu, radius, out)

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max(initial=0.0))

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "CoefficientField":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoefficientField):
            return NotImplemented
        return (self.nu, self.radius) == (other.nu, other.radius) and np.array_equal(self.values, other.values)

    def __repr__(self) -> str:
        return f"CoefficientField(nu={self.nu}, radius={self.radius}, nonzero={int(np.count_nonzero(self.values))})"

    def _check_compatible(self, other: "CoefficientField") -> None:
        if (self.nu, self.radius) != (other.nu, other.radius):
            raise ValueError("fields live on different balls")


class ConvolutionPlan:
    """Pair lists for sum_{m1 + m2 = n} over an input ball, grouped by output n.

    Within each output mode the pairs are sorted lexicographically in m1, so
    the accumulation order (and hence the floating-point result) is fixed.
    """

    def __init__(self, nu: int, in_radius: int, out_radius: int):
        src = ball_index(nu, in_radius)
        dst = ball_index(nu, out_radius)
        out_pos, first, second = [], [], []
        for o, n in enumerate(dst.keys):
            for i1, m1 in enumerate(src.keys):
                m2 = tuple(a - b for a, b in zip(n, m1))
                i2 = src.position.get(m2)
                if i2 is not None:
                    out_pos.append(o)
                    first.append(i1)
                    second.append(i2)
        self.nu = nu
        self.in_radius = in_radius
        self.out_radius = out_radius
        self.out_size = len(dst)
        self.out_pos = np.array(out_pos, dtype=np.intp)
        self.first = np.array(first, dtype=np.intp)
        self.second = np.array(second, dtype=np.intp)

    def __len__(self) -> int:
        return len(self.out_pos)

    def apply(self, values: np.ndarray, left_weight: np.ndarray | None = None) -> np.ndarray:
        """sum over pairs of w(m1) c(m1) c(m2); ``values`` may carry leading batch axes."""
        left = values[..., self.first]
        if left_weight is not None:
            left = left * left_weight[self.first]
        prod = left * values[..., self.second]
        out = np.zeros(values.shape[:-1] + (self.out_size,), dtype=complex)
        # np.add.at accumulates unbuffered in index order: deterministic.
        np.add.at(out, (..., self.out_pos), prod)
        return out


@lru_cache(maxsize=64)
def convolution_plan(nu: int, in_radius: int, out_radius: int) -> ConvolutionPlan:
    return ConvolutionPlan(nu, in_radius, out_radius)


def self_convolution(c: CoefficientField, out_radius: int | None = None) -> CoefficientField:
    """Q(n) = sum_{m1 + m2 = n} c(m1) c(m2), truncated to |n| <= out_radius."""
    r = c.radius if out_radius is None else out_radius
    plan = convolution_plan(c.nu, c.radius, r)
    return CoefficientField(c.nu, r, plan.apply(c.values))


def weighted_self_convolution(
    c: CoefficientField, fs: FrequencySystem, out_radius: int | None = None
) -> CoefficientField:
    """Fourier coefficients of (u^2)_xx:

        A(n) = -2 (n.omega) sum_{m1 + m2 = n} (m1.omega) c(m1) c(m2),

    for |n| <= fs.N (or ``out_radius``); contributions outside are dropped.
    """
    if c.radius > fs.N:
        raise ValueError(f"field radius {c.radius} exceeds truncation radius {fs.N}")
    if c.nu != fs.nu:
        raise ValueError("field and frequency system disagree on nu")
    r = fs.N if out_radius is None else out_radius
    plan = convolution_plan(c.nu, c.radius, r)
    inner = plan.apply(c.values, left_weight=fs.dots(c.radius))
    return CoefficientField(c.nu, r, -2.0 * fs.dots(r) * inner)


def weighted_self_convolution_batch(values: np.ndarray, fs: FrequencySystem, radius: int) -> np.ndarray:
    """Array form of :func:`weighted_self_convolution` over leading batch axes."""
    plan = convolution_plan(fs.nu, radius, radius)
    return -2.0 * fs.dots(radius) * plan.apply(values, left_weight=fs.dots(radius))


def self_convolution_batch(values: np.ndarray, nu: int, radius: int) -> np.ndarray:
    return convolution_plan(nu, radius, radius).apply(values)

