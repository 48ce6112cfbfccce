import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from boussinesq_lab.bounds import existence_time
from boussinesq_lab.evolution import (
    SIGNED,
    SYMMETRIZED,
    BeyondExistenceTime,
    NotConverged,
    ResolutionError,
    TimeGrid,
    dispersion,
    dispersion_lambda,
    duhamel_factor,
    linear_flow,
    linear_trajectory,
    ode_reference_solve,
    picard_iterates,
    picard_solve,
    quadrature_weights,
    time_derivative_at_zero,
)
from boussinesq_lab.lattice import CoefficientField, DecayEnvelope, FrequencySystem

from conftest import decaying_field

FS1 = FrequencySystem((1.0,), 6)
ENV = DecayEnvelope(1.0, 1.0)


def test_dispersion_values():
    assert dispersion_lambda((0,), FS1) == 0
    assert dispersion_lambda((1,), FS1) == pytest.approx(math.sqrt(2))
    assert dispersion_lambda((-3,), FS1) == pytest.approx(3 * math.sqrt(10))
    lam = dispersion(FS1)
    x = FS1.dots()
    np.testing.assert_allclose(lam**2, x**2 + x**4)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 3)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    g = TimeGrid(1.0, 8)
    assert g.h == 0.125
    assert g.refined().J == 16


@pytest.mark.parametrize("J", [2, 4, 8, 10])
def test_quadrature_exact_on_cubics(J):
    # every row integrates 1, t, t^2, t^3 exactly (h = 1 units)
    W = quadrature_weights(J)
    t = np.arange(J + 1, dtype=float)
    for p in range(4):
        got = W @ t**p
        want = t ** (p + 1) / (p + 1)
        want[0] = 0
        tol = 1e-12 * (1 + want.max())
        if p == 3:
            # the one-interval start row is exact to degree 2 only
            got, want = got[2:], want[2:]
        np.testing.assert_allclose(got, want, atol=tol)


def test_linear_flow_single_mode():
    c0 = CoefficientField.from_dict(1, 6, {(2,): 1.0})
    c0p = CoefficientField.from_dict(1, 6, {(2,): 3.0})
    lam = dispersion_lambda((2,), FS1)
    t = 0.3
    got = linear_flow(c0, c0p, t, FS1)[(2,)]
    assert got == pytest.approx(math.cos(lam * t) + 3 * math.sin(lam * t) / lam)


def test_linear_flow_zero_mode_is_affine():
    c0 = CoefficientField.from_dict(1, 6, {(0,): 2.0})
    c0p = CoefficientField.from_dict(1, 6, {(0,): -1.5})
    assert linear_flow(c0, c0p, 0.7, FS1)[(0,)] == pytest.approx(2.0 - 1.5 * 0.7)


def test_duhamel_factor_conventions():
    g_sym = duhamel_factor(FS1, 6, SYMMETRIZED)
    g_pr = duhamel_factor(FS1, 6, SIGNED)
    x = FS1.dots()
    np.testing.assert_allclose(g_sym, -np.abs(x) / np.sqrt(1 + x * x))
    np.testing.assert_allclose(g_pr[x > 0], g_sym[x > 0])
    np.testing.assert_allclose(g_pr[x < 0], -g_sym[x < 0])
    with pytest.raises(ValueError):
        duhamel_factor(FS1, 6, "other")


def test_duhamel_factor_times_kernel_solves_forced_oscillator():
    # g * int_0^t sin(lam (t - s)) Q ds with g = -|x|/sqrt(1+x^2) solves c'' + lam^2 c = -x^2 Q
    x = 2.0
    lam = abs(x) * math.sqrt(1 + x * x)
    g = -abs(x) / math.sqrt(1 + x * x)
    t = 0.9
    # constant Q = 1: int_0^t sin(lam (t - s)) ds = (1 - cos(lam t)) / lam
    c = g * (1 - math.cos(lam * t)) / lam
    # particular solution of c'' + lam^2 c = -x^2 with c(0) = c'(0) = 0
    assert c == pytest.approx(-(x * x) / lam**2 * (1 - math.cos(lam * t)))


def test_zero_data_is_fixed_point():
    z = CoefficientField.zeros(1, 6)
    traj, diag = picard_solve(z, z, TimeGrid(1e-3, 16), FS1)
    assert diag.converged and diag.deltas == [0.0]
    assert not np.any(traj.values)


def test_picard_matches_rk4_desk(rng):
    c0 = decaying_field(rng, 1, 6)
    c0p = decaying_field(rng, 1, 6)
    grid = TimeGrid(existence_time(ENV, FS1), 128)
    traj, diag = picard_solve(c0, c0p, grid, FS1, env=ENV)
    ref = ode_reference_solve(c0, c0p, grid, FS1)
    assert diag.converged
    assert traj.sup_distance(ref) < 1e-12


def test_linear_trajectory_matches_rk4_without_nonlinearity(rng):
    c0, c0p = decaying_field(rng, 1, 3), decaying_field(rng, 1, 3)
    fs = FrequencySystem((1.0,), 3)
    grid = TimeGrid(0.05, 64)
    lin = linear_trajectory(c0, c0p, grid, fs)
    ref = ode_reference_solve(c0, c0p, grid, fs, substeps=4, nonlinear=False)
    assert lin.sup_distance(ref) < 1e-9


def test_rk4_is_fourth_order(rng):
    fs = FrequencySystem((1.0,), 3)
    c0, c0p = decaying_field(rng, 1, 3), decaying_field(rng, 1, 3)
    exact = ode_reference_solve(c0, c0p, TimeGrid(0.2, 8), fs, substeps=64).values[-1]
    e1 = np.abs(ode_reference_solve(c0, c0p, TimeGrid(0.2, 8), fs).values[-1] - exact).max()
    e2 = np.abs(ode_reference_solve(c0, c0p, TimeGrid(0.2, 8), fs, substeps=2).values[-1] - exact).max()
    assert 12 < e1 / e2 < 20


def test_picard_longer_horizon_converges_to_rk4(rng):
    # outside the guaranteed window but still contracting for small data
    fs = FrequencySystem((1.0,), 3)
    c0 = decaying_field(rng, 1, 3, scale=0.2)
    c0p = decaying_field(rng, 1, 3, scale=0.2)
    grid = TimeGrid(0.2, 64)
    traj, diag = picard_solve(c0, c0p, grid, fs, tol=1e-12, kmax=40)
    ref = ode_reference_solve(c0, c0p, grid, fs, substeps=8)
    assert diag.converged
    assert traj.sup_distance(ref) < 1e-7


def test_deltas_decrease_geometrically(rng):
    fs = FrequencySystem((1.0,), 3)
    c0 = decaying_field(rng, 1, 3, scale=0.5)
    c0p = decaying_field(rng, 1, 3, scale=0.5)
    _, diag = picard_solve(c0, c0p, TimeGrid(0.1, 32), fs, tol=1e-13, kmax=40)
    big = [d for d in diag.deltas if d > 1e-12]
    assert all(b < a for a, b in zip(big, big[1:]))


def test_not_converged_carries_trajectory(rng):
    c0, c0p = decaying_field(rng, 1, 6), decaying_field(rng, 1, 6)
    grid = TimeGrid(existence_time(ENV, FS1), 32)
    with pytest.raises(NotConverged) as info:
        picard_solve(c0, c0p, grid, FS1, tol=1e-30, kmax=2)
    assert info.value.trajectory is not None
    assert info.value.diagnostics.iterations == 2
    traj, diag = picard_solve(c0, c0p, grid, FS1, kmax=1, strict=False)
    assert not diag.converged
    assert traj.sup_distance(linear_trajectory(c0, c0p, grid, FS1)) == 0


def test_existence_time_guard(rng):
    c0, c0p = decaying_field(rng, 1, 6), decaying_field(rng, 1, 6)
    t0 = existence_time(ENV, FS1)
    with pytest.raises(BeyondExistenceTime):
        picard_solve(c0, c0p, TimeGrid(2 * t0, 32), FS1, env=ENV)
    picard_solve(c0, c0p, TimeGrid(2 * t0, 32), FS1, env=ENV, allow_beyond=True)


def test_resolution_guard():
    c = CoefficientField.from_dict(1, 6, {(6,): 0.1})
    with pytest.raises(ResolutionError):
        picard_solve(c, c, TimeGrid(1.0, 8), FS1)


def test_on_iterate_sees_every_iterate(rng):
    c0, c0p = decaying_field(rng, 1, 6), decaying_field(rng, 1, 6)
    seen = []
    _, diag = picard_solve(c0, c0p, TimeGrid(existence_time(ENV, FS1), 16), FS1, on_iterate=lambda k, tr: seen.append(k))
    assert seen == list(range(diag.iterations + 1))


def test_iterates_start_from_linear_flow(rng):
    c0, c0p = decaying_field(rng, 1, 4), decaying_field(rng, 1, 4)
    fs = FrequencySystem((1.0,), 4)
    grid = TimeGrid(1e-3, 8)
    it = picard_iterates(c0, c0p, grid, fs)
    first = next(it)
    assert first.sup_distance(linear_trajectory(c0, c0p, grid, fs)) == 0
    assert np.all(next(it).values[0] == c0.values)


def test_time_derivative_at_zero(rng):
    c0, c0p = decaying_field(rng, 1, 6), decaying_field(rng, 1, 6)
    traj, _ = picard_solve(c0, c0p, TimeGrid(existence_time(ENV, FS1), 128), FS1)
    d = time_derivative_at_zero(traj)
    np.testing.assert_allclose(d.values, c0p.values, atol=1e-6)


def test_signed_convention_breaks_reality(rng):
    # with the sign-carrying factor, conjugate-symmetric data does not stay conjugate-symmetric
    fs = FrequencySystem((1.0,), 3)
    c0 = decaying_field(rng, 1, 3, real=True)
    c0p = decaying_field(rng, 1, 3, real=True)
    grid = TimeGrid(0.05, 32)
    sym, _ = picard_solve(c0, c0p, grid, fs, convention=SYMMETRIZED)
    pr, _ = picard_solve(c0, c0p, grid, fs, convention=SIGNED)
    mirror = list(range(7))[::-1]  # position of -n in ball order
    assert np.abs(sym.values[:, mirror] - np.conj(sym.values)).max() < 1e-14
    assert np.abs(pr.values[:, mirror] - np.conj(pr.values)).max() > 1e-8


@given(st.integers(0, 2**32 - 1), st.sampled_from([SYMMETRIZED, SIGNED]))
def test_picard_converges_under_both_conventions(seed, convention):
    rng = np.random.default_rng(seed)
    fs = FrequencySystem((1.0,), 3)
    c0 = decaying_field(rng, 1, 3, scale=0.3)
    c0p = decaying_field(rng, 1, 3, scale=0.3)
    grid = TimeGrid(0.02, 32)
    traj, diag = picard_solve(c0, c0p, grid, fs, convention=convention)
    assert diag.converged
    if convention == SYMMETRIZED:
        assert traj.sup_distance(ode_reference_solve(c0, c0p, grid, fs)) < 1e-8
