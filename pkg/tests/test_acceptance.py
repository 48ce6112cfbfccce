"""The twelve acceptance criteria, one test each, at their stated tolerances.

Each test appends a single PASS/FAIL line (shown in the terminal summary and
printed immediately) before asserting, so a failing criterion still reports
what it measured.
"""
import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from boussinesq_lab import combinatorics as comb
from boussinesq_lab.bounds import (
    NOISE_FLOOR_ULPS,
    check_contraction,
    check_envelope_many,
    contraction_bound,
    contraction_rate,
    existence_time,
)
from boussinesq_lab.config import RunConfig
from boussinesq_lab.evolution import TimeGrid, picard_iterates, picard_solve
from boussinesq_lab.lattice import FrequencySystem
from boussinesq_lab.pipeline import check_all, gen_init, run, solve
from boussinesq_lab.synthesis import iteration_floor, spectral_residual

from conftest import ACCEPTANCE_LINES

SQRT2 = math.sqrt(2.0)


def record(num, passed, detail, elapsed, limit):
    ok = bool(passed) and elapsed < limit
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {detail} ({elapsed:.2f}s, limit {limit:g}s)"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_criterion_01_label_counts():
    t = time.perf_counter()
    counts = [len(comb.enumerate_labels(k)) for k in range(1, 5)]
    ok = counts == [2, 6, 38, 1446]
    assert record(1, ok, f"label counts {counts}", time.perf_counter() - t, 1)


def test_criterion_02_weight_identity():
    t = time.perf_counter()
    bad = 0
    labels = comb.enumerate_labels(4)
    for gamma in labels:
        w = comb.weights(gamma)
        bad += not (w.sigma == w.ell + 1 and w.hbar <= w.sigma and w.frak_f >= 1)
    assert record(2, bad == 0, f"{len(labels)} labels, {bad} violations", time.perf_counter() - t, 1)


def test_criterion_03_weighted_double_sum():
    t0 = time.perf_counter()
    ts = [Fraction(j, 256) for j in range(1, 17)]
    worst = Fraction(0)
    over, k1_bad, k2_bad = 0, 0, 0
    for t in ts:
        for k in (1, 2, 3):
            v = comb.weighted_label_sum(k, t)
            worst = max(worst, v)
            over += v > 2
        k1_bad += comb.weighted_label_sum(1, t) != 1
        k2_bad += comb.weighted_label_sum(2, t) != 1 + 2 * t
    ok = over == 0 and k1_bad == 0 and k2_bad == 0
    detail = (
        f"max {float(worst):.4f}, {over}/48 above 2, k=1 value {comb.weighted_label_sum(1, ts[-1])} "
        f"(want 1), k=2 at t=1/16 {comb.weighted_label_sum(2, ts[-1])} (want 9/8)"
    )
    assert record(3, ok, detail, time.perf_counter() - t0, 30)


def test_criterion_04_factorial_compositions():
    t = time.perf_counter()
    bad = []
    for N in range(1, 9):
        for l in range(1, N + 1):
            v = sum(comb.factorial_product(a) for a in comb.compositions(N, l))
            if not v < (2 * N) ** l:
                bad.append((N, l))
            else:
                assert comb.factorial_comp_sum(N, l) == v
    assert record(4, not bad, f"36 (N, l) pairs, failures {bad}", time.perf_counter() - t, 30)


def test_criterion_05_majorant():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    checked, bad, example = 0, 0, None
    for nu in (1, 2):
        for gamma in comb.enumerate_labels(3):
            sigma = comb.weights(gamma).sigma
            for _ in range(200):
                m = tuple(tuple(int(v) for v in rng.integers(-5, 6, nu)) for _ in range(sigma))
                lhs, rhs = comb.majorant_sides(gamma, m)
                checked += 1
                if lhs > rhs:
                    bad += 1
                    example = example or (gamma, m, lhs, rhs)
    detail = f"{bad}/{checked} assignments with LHS > RHS"
    if example:
        detail += f", e.g. gamma={example[0]} m={example[1]}: {example[2]} > {example[3]}"
    assert record(5, bad == 0, detail, time.perf_counter() - t, 60)


def test_criterion_06_geometric_sum():
    t = time.perf_counter()
    kappas = np.linspace(1 / 50, 1, 50)
    worst = -math.inf
    for kappa in kappas:
        q = math.exp(-kappa / 4)
        lhs = 1 + 2 * q / (1 - q)
        worst = max(worst, lhs - 24 / kappa)
        assert comb.lattice_exp_sum(float(kappa), 1) == lhs
    ok = worst <= -1e-12
    assert record(6, ok, f"max lhs - 24/kappa = {worst:.3f}", time.perf_counter() - t, 1)


def test_criterion_07_tree_expansion_oracle():
    t = time.perf_counter()
    cfg = RunConfig(N=2)
    fs = cfg.frequency_system()
    c0, c0p = gen_init(cfg)
    tt = existence_time(cfg.envelope(), fs) / 2
    grid = TimeGrid(tt, 64)
    errs = {}
    for k, traj in zip((1, 2, 3), picard_iterates(c0, c0p, grid, fs)):
        snap = traj.snapshot(grid.J)
        errs[k] = max(abs(comb.tree_expand_evaluate(k, n, tt, c0, c0p, fs) - snap[n]) for n in snap.keys())
    ok = errs[1] <= 1e-12 and errs[2] <= 1e-6 and errs[3] <= 1e-6
    detail = ", ".join(f"k={k} err {e:.1e}" for k, e in errs.items())
    assert record(7, ok, detail, time.perf_counter() - t, 300)


def test_criterion_08_iterate_envelope():
    t = time.perf_counter()
    cfg = RunConfig().resolved()
    fs, env = cfg.frequency_system(), cfg.envelope()
    c0, c0p = gen_init(cfg)
    grid = TimeGrid(cfg.t_end, cfg.J)
    worst = math.inf
    for k, traj in zip(range(20), picard_iterates(c0, c0p, grid, fs)):
        rep = check_envelope_many(traj, env, 2.0, 4.0, abs_tol=1e-12)
        worst = min(worst, rep.margin)
    ok = worst >= -1e-12
    assert record(8, ok, f"20 iterates, min margin {worst:.3e}", time.perf_counter() - t, 30)


def test_criterion_09_contraction():
    t = time.perf_counter()
    cfg = RunConfig(tol=1e-15, kmax=20).resolved()
    fs, env = cfg.frequency_system(), cfg.envelope()
    c0, c0p = gen_init(cfg)
    grid = TimeGrid(cfg.t_end, cfg.J)
    traj, diag = picard_solve(c0, c0p, grid, fs, cfg.tol, cfg.kmax, strict=False, env=env)
    r = contraction_rate(env, fs, cfg.t_end)
    floor = NOISE_FLOOR_ULPS * np.finfo(float).eps * float(np.abs(traj.values).max())
    d = diag.deltas
    above = [k for k in range(len(d)) if d[k] > floor]
    ratios = [d[k + 1] / d[k] for k in above if k + 1 < len(d)]
    below_bound = all(d[k] <= contraction_bound(k + 1, env, fs, cfg.t_end) for k in range(len(d)))
    rep = check_contraction(diag, env, fs, grid)
    ok = r < 1 and below_bound and all(q <= r for q in ratios) and rep.passed
    detail = f"r={r:.4f}, max ratio {max(ratios, default=0):.2e} over {len(ratios)} steps, deltas under bound: {below_bound}"
    assert record(9, ok, detail, time.perf_counter() - t, 30)


@pytest.mark.parametrize(
    "cfg",
    [RunConfig(), RunConfig(nu=2, omega=(1.0, SQRT2), N=4)],
    ids=["nu1", "nu2"],
)
def test_criterion_10_existence_uniqueness(cfg):
    t = time.perf_counter()
    reports, _, _ = check_all(solve(cfg))
    by = {r.name: r for r in reports}
    uniq, zero = by["uniqueness"], by["zero_mode"]
    ok = uniq.details["sup_distance"] <= 1e-6 and zero.passed
    detail = (
        f"nu={cfg.nu} N={cfg.N}: sup|picard - rk4| = {uniq.details['sup_distance']:.1e}, "
        f"zero mode err {zero.details['max_error']:.1e}"
    )
    assert record(10, ok, detail, time.perf_counter() - t, 150)


def test_criterion_11_residual_second_order():
    t = time.perf_counter()
    res = {}
    for J in (256, 512):
        sol = solve(RunConfig(J=J))
        rep = spectral_residual(sol.picard, floor=iteration_floor(sol.picard, sol.diag.deltas[-1]))
        res[J] = rep.details["max_residual"]
    ratio = res[256] / res[512]
    ok = 3.5 <= ratio <= 4.5 and res[512] <= 1e-5
    detail = f"residual J=256 {res[256]:.3e}, J=512 {res[512]:.3e}, ratio {ratio:.3f}"
    assert record(11, ok, detail, time.perf_counter() - t, 120)


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "timings.json"
    }


def test_criterion_12_determinism(tmp_path):
    t = time.perf_counter()
    run(RunConfig(), tmp_path / "a")
    run(RunConfig(), tmp_path / "b")
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = a.keys() == b.keys() and not differing and "manifest.json" in a
    assert record(12, ok, f"{len(a)} files compared, {len(differing)} differ", time.perf_counter() - t, 30)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
