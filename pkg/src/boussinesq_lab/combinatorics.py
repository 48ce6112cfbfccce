"""Tree-label calculus for the explicit expansion of Picard iterates.

A label is a nested tuple: a leaf is the int 0 (initial position factor)
or 1 (initial velocity factor), an internal node is a pair ``(left, right)``.
Leaves are always read in left-to-right depth-first order; that order is
how leaf assignments and compositions attach to a label.

Everything used to verify inequalities is exact (int / Fraction).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np

from .evolution import SYMMETRIZED, duhamel_factor
from .lattice import CoefficientField, FrequencySystem, ball_index, l1_norm

TreeLabel = Union[int, tuple]
MultiIndex = tuple[int, ...]
LeafAssignment = tuple[MultiIndex, ...]

MAX_ENUMERATION_LEVEL = 4
MAX_ALPHA_SIGMA = 12
MAX_MAJORANT_SIGMA = 6
MAX_WEIGHTED_SUM_LEVEL = 3
MAX_COMPOSITION_N = 8
MAX_EXPANSION_TERMS = 10**6


class GuardExceeded(ValueError):
    """A combinatorial size guard was hit."""


@dataclass(frozen=True)
class WeightRecord:
    sigma: int  # leaf count
    ell: int  # internal nodes = nested integrals
    hbar: int  # velocity (tag 1) leaves
    frak_f: int  # iterated-integral denominator


def is_leaf(gamma: TreeLabel) -> bool:
    return isinstance(gamma, int)


def leaves(gamma: TreeLabel) -> tuple[int, ...]:
    if is_leaf(gamma):
        return (gamma,)
    return leaves(gamma[0]) + leaves(gamma[1])


def level(gamma: TreeLabel) -> int:
    """Smallest k with gamma in D^(k)."""
    if is_leaf(gamma):
        return 1
    return 1 + max(level(gamma[0]), level(gamma[1]))


def enumerate_labels(k: int) -> list[TreeLabel]:
    """D^(k) = {0, 1} u D^(k-1) x D^(k-1), each label once."""
    if not 1 <= k <= MAX_ENUMERATION_LEVEL:
        raise GuardExceeded(f"k must lie in 1..{MAX_ENUMERATION_LEVEL}, got {k}")
    return list(_labels(k))


@lru_cache(maxsize=None)
def _labels(k: int) -> tuple[TreeLabel, ...]:
    if k == 1:
        return (0, 1)
    prev = _labels(k - 1)
    out = [0, 1]
    seen = {0, 1}
    for pair in itertools.product(prev, repeat=2):
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return tuple(out)


@lru_cache(maxsize=None)
def weights(gamma: TreeLabel) -> WeightRecord:
    if is_leaf(gamma):
        if gamma not in (0, 1):
            raise ValueError(f"leaf tags are 0 or 1, got {gamma!r}")
        return WeightRecord(sigma=1, ell=0, hbar=gamma, frak_f=1)
    a, b = weights(gamma[0]), weights(gamma[1])
    ell = a.ell + b.ell + 1
    return WeightRecord(
        sigma=a.sigma + b.sigma,
        ell=ell,
        hbar=a.hbar + b.hbar,
        frak_f=ell * a.frak_f * b.frak_f,
    )


def alpha_set(gamma: TreeLabel) -> frozenset[tuple[int, ...]]:
    """A^(k, gamma): concatenated child compositions plus one unit vector."""
    if weights(gamma).sigma > MAX_ALPHA_SIGMA:
        raise GuardExceeded(f"sigma(gamma) exceeds {MAX_ALPHA_SIGMA}")
    return _alpha_set(gamma)


@lru_cache(maxsize=None)
def _alpha_set(gamma: TreeLabel) -> frozenset[tuple[int, ...]]:
    if is_leaf(gamma):
        return frozenset({(0,)})
    sigma = weights(gamma).sigma
    out = set()
    for a1 in _alpha_set(gamma[0]):
        for a2 in _alpha_set(gamma[1]):
            base = a1 + a2
            for i in range(sigma):
                out.add(base[:i] + (base[i] + 1,) + base[i + 1:])
    return frozenset(out)


@lru_cache(maxsize=None)
def alpha_multiset(gamma: TreeLabel) -> Counter:
    """The same construction keeping multiplicities (the full expansion of P)."""
    if weights(gamma).sigma > MAX_ALPHA_SIGMA:
        raise GuardExceeded(f"sigma(gamma) exceeds {MAX_ALPHA_SIGMA}")
    if is_leaf(gamma):
        return Counter({(0,): 1})
    sigma = weights(gamma).sigma
    out: Counter = Counter()
    for a1, k1 in alpha_multiset(gamma[0]).items():
        for a2, k2 in alpha_multiset(gamma[1]).items():
            base = a1 + a2
            for i in range(sigma):
                out[base[:i] + (base[i] + 1,) + base[i + 1:]] += k1 * k2
    return out


def _split(gamma: TreeLabel, assignment: Sequence) -> tuple[Sequence, Sequence]:
    s1 = weights(gamma[0]).sigma
    return assignment[:s1], assignment[s1:]


def _vsum(vectors: Sequence[Sequence[int]]) -> tuple[int, ...]:
    return tuple(int(sum(c)) for c in zip(*vectors))


def majorant_P(assignment: LeafAssignment, gamma: TreeLabel) -> int:
    """Product over internal nodes of |mu| (l1 norm of the subtree's index sum)."""
    _check_assignment(gamma, assignment)
    return _majorant(gamma, tuple(tuple(m) for m in assignment))


def _majorant(gamma: TreeLabel, assignment: LeafAssignment) -> int:
    if is_leaf(gamma):
        return 1
    left, right = _split(gamma, assignment)
    return l1_norm(_vsum(assignment)) * _majorant(gamma[0], left) * _majorant(gamma[1], right)


def majorant_sides(gamma: TreeLabel, assignment: LeafAssignment, *, multiplicity: bool = False) -> tuple[int, int]:
    """(P(m), sum_{alpha in A} prod_i |m_i|^alpha_i) as exact integers.

    ``multiplicity=True`` sums over :func:`alpha_multiset` instead of the set.
    """
    if weights(gamma).sigma > MAX_MAJORANT_SIGMA:
        raise GuardExceeded(f"sigma(gamma) exceeds {MAX_MAJORANT_SIGMA}")
    lhs = majorant_P(assignment, gamma)
    norms = [l1_norm(m) for m in assignment]
    terms = alpha_multiset(gamma).items() if multiplicity else ((a, 1) for a in alpha_set(gamma))
    rhs = sum(k * math.prod(v**a for v, a in zip(norms, alpha)) for alpha, k in terms)
    return lhs, rhs


def check_majorant(gamma: TreeLabel, assignment: LeafAssignment) -> bool:
    lhs, rhs = majorant_sides(gamma, assignment)
    return lhs <= rhs


def lattice_exp_sum(kappa: float, nu: int) -> float:
    """(1 + 2 e^{-kappa/4} / (1 - e^{-kappa/4}))^nu, i.e. sum over Z^nu of exp(-kappa |m| / 4)."""
    if not 0 < kappa <= 1:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    q = math.exp(-kappa / 4)
    value = (1 + 2 * q / (1 - q)) ** nu
    if value > (24 / kappa) ** nu:
        raise ArithmeticError(f"geometric lattice sum {value} exceeds (24/kappa)^nu")
    return value


def factorial_product(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def weighted_label_sum(k: int, t, *, tagged: bool = True) -> Fraction:
    """sum_{gamma in D^(k)} (2t)^ell / F(gamma) * sum_{alpha in A^(k,gamma)} prod alpha_i!

    Exact for rational t.  ``tagged=False`` sums over tree shapes only, i.e.
    each pattern of internal nodes once regardless of its 0/1 leaf tags.
    """
    if not 1 <= k <= MAX_WEIGHTED_SUM_LEVEL:
        raise GuardExceeded(f"k must lie in 1..{MAX_WEIGHTED_SUM_LEVEL}, got {k}")
    t = Fraction(t)
    if not 0 < t <= Fraction(1, 16):
        raise ValueError(f"t must lie in (0, 1/16], got {t}")
    labels = enumerate_labels(k) if tagged else _shapes(k)
    total = Fraction(0)
    for gamma in labels:
        w = weights(gamma)
        inner = sum(factorial_product(a) for a in alpha_set(gamma))
        total += (2 * t) ** w.ell / w.frak_f * inner
    return total


def _shapes(k: int) -> list[TreeLabel]:
    return [g for g in enumerate_labels(k) if set(leaves(g)) == {0}]


def compositions(N: int, l: int) -> Iterator[tuple[int, ...]]:
    """All length-N tuples of nonnegative ints summing to l (stars and bars)."""
    for bars in itertools.combinations(range(l + N - 1), N - 1):
        prev = -1
        parts = []
        for b in bars + (l + N - 1,):
            parts.append(b - prev - 1)
            prev = b
        yield tuple(parts)


def factorial_comp_sum(N: int, l: int) -> int:
    """sum over compositions alpha of l into N parts of prod alpha_i!; checked < (2N)^l."""
    if not 1 <= l <= N <= MAX_COMPOSITION_N:
        raise GuardExceeded(f"need 1 <= l <= N <= {MAX_COMPOSITION_N}, got N={N}, l={l}")
    value = sum(factorial_product(a) for a in compositions(N, l))
    if not value < (2 * N) ** l:
        raise ArithmeticError(f"factorial composition sum {value} >= (2N)^l = {(2 * N) ** l}")
    return value


# ---------------------------------------------------------------------------
# explicit tree expansion of the Picard iterates


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class _Expansion:
    """Evaluates sum over labels and leaf assignments of C * f * I at one time."""

    def __init__(self, c0, c0p, fs: FrequencySystem, convention: str, quad_depth: int, quad_tol: float):
        self.c0, self.c0p, self.fs = c0, c0p, fs
        self.radius = c0.radius
        self.index = ball_index(fs.nu, self.radius)
        self.dots = fs.dots(self.radius)
        self.lam = np.abs(self.dots) * np.sqrt(1.0 + self.dots**2)
        # f factor -i s / (2 sqrt(1 + s^2)); duhamel_factor is the same thing
        # multiplied by the -2i that K contributes.
        self.node_factor = 0.5j * duhamel_factor(fs, self.radius, convention)
        self.quad_depth = quad_depth
        self.quad_tol = quad_tol
        self._assign_cache: dict = {}
        self._I_cache: dict = {}

    def assignments(self, gamma: TreeLabel, target: MultiIndex) -> list[LeafAssignment]:
        """Leaf tuples in the ball summing to target, every subtree sum inside the ball."""
        key = (gamma, target)
        hit = self._assign_cache.get(key)
        if hit is not None:
            return hit
        if target not in self.index.position:
            out = []
        elif is_leaf(gamma):
            out = [(target,)]
        else:
            out = []
            for m1 in self.index.keys:
                m2 = tuple(a - b for a, b in zip(target, m1))
                if m2 not in self.index.position:
                    continue
                right = self.assignments(gamma[1], m2)
                if not right:
                    continue
                for a1 in self.assignments(gamma[0], m1):
                    for a2 in right:
                        out.append(a1 + a2)
        self._assign_cache[key] = out
        return out

    def coefficient(self, gamma: TreeLabel, assignment: LeafAssignment) -> complex:
        value = 1 + 0j
        for tag, m in zip(leaves(gamma), assignment):
            value *= self.c0[m] if tag == 0 else self.c0p[m]
        return value

    def f(self, gamma: TreeLabel, assignment: LeafAssignment) -> complex:
        if is_leaf(gamma):
            return 1 + 0j
        left, right = _split(gamma, assignment)
        mu = _vsum(assignment)
        return self.node_factor[self.index.position[mu]] * self.f(gamma[0], left) * self.f(gamma[1], right)

    def I(self, gamma: TreeLabel, assignment: LeafAssignment, times: np.ndarray) -> np.ndarray:
        key = (gamma, assignment, times.tobytes())
        hit = self._I_cache.get(key)
        if hit is not None:
            return hit
        mu = _vsum(assignment)
        lam = self.lam[self.index.position[mu]]
        if is_leaf(gamma):
            if gamma == 0:
                out = np.cos(lam * times) + 0j
            elif lam == 0:
                out = times + 0j
            else:
                out = np.sin(lam * times) / lam + 0j
        else:
            left, right = _split(gamma, assignment)

            def integrand(tau: np.ndarray, t: np.ndarray) -> np.ndarray:
                # K(tau, t) = exp(i lam (tau - t)) - exp(i lam (t - tau))
                K = -2j * np.sin(lam * (t - tau))
                flat = tau.reshape(-1)
                prod = self.I(gamma[0], left, flat) * self.I(gamma[1], right, flat)
                return K * prod.reshape(tau.shape)

            out = self._integrate(integrand, times)
        self._I_cache[key] = out
        return out

    def _integrate(self, integrand, times: np.ndarray) -> np.ndarray:
        """int_0^t integrand(tau, t) dtau for every t, bisecting panels until stable."""
        def composite(panels: int) -> np.ndarray:
            edges = np.arange(panels) / panels
            nodes = (edges[:, None] + _GL_X[None, :] / panels).reshape(-1)
            w = np.tile(_GL_W / panels, panels)
            tau = times[:, None] * nodes[None, :]
            return (integrand(tau, times[:, None]) * w).sum(axis=1) * times

        panels = 1
        coarse = composite(panels)
        for _ in range(self.quad_depth):
            fine = composite(2 * panels)
            if np.max(np.abs(fine - coarse), initial=0.0) <= self.quad_tol:
                return fine
            coarse, panels = fine, 2 * panels
        return coarse


def tree_expand_evaluate(
    k: int,
    n: Sequence[int],
    t: float,
    c0: CoefficientField,
    c0p: CoefficientField,
    fs: FrequencySystem,
    quad_depth: int = 6,
    *,
    convention: str = SYMMETRIZED,
    quad_tol: float = 1e-9,
) -> complex:
    """d_k(t, n) from the explicit label expansion; equals the Picard iterate c_{k-1}(t, n).

    Every leaf index and every subtree sum stays inside the truncation ball,
    matching the Galerkin-truncated iteration.
    """
    if not 1 <= k <= 3:
        raise GuardExceeded(f"k must lie in 1..3, got {k}")
    if fs.nu != 1 or fs.N > 3:
        raise GuardExceeded("tree expansion is limited to nu = 1 and N <= 3")
    ex = _Expansion(c0, c0p, fs, convention, quad_depth, quad_tol)
    target = tuple(int(v) for v in n)
    work = []
    total_terms = 0
    for gamma in enumerate_labels(k):
        assigns = ex.assignments(gamma, target)
        total_terms += len(assigns)
        work.append((gamma, assigns))
    if total_terms > MAX_EXPANSION_TERMS:
        raise GuardExceeded(f"{total_terms} expansion terms exceed {MAX_EXPANSION_TERMS}")
    times = np.array([float(t)])
    total = 0j
    for gamma, assigns in work:
        for a in assigns:
            coef = ex.coefficient(gamma, a)
            if coef == 0:
                continue
            total += coef * ex.f(gamma, a) * ex.I(gamma, a, times)[0]
    return complex(total)


def _check_assignment(gamma: TreeLabel, assignment: Sequence) -> None:
    if len(assignment) != weights(gamma).sigma:
        raise ValueError(f"label has {weights(gamma).sigma} leaves, assignment has {len(assignment)}")
