"""Initial data generation and the full solve -> check -> export run."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bounds import (
    BoundReport,
    check_contraction,
    check_envelope,
    check_envelope_many,
    contraction_rate,
    uniqueness_compare,
)
from .config import RunConfig
from .evolution import (
    PicardDiagnostics,
    TimeGrid,
    TrajectoryField,
    ode_reference_solve,
    picard_solve,
)
from .io import write_field, write_json, write_rows, write_trajectory
from .lattice import CoefficientField, ball_index
from .synthesis import iteration_floor, residual_values, spectral_residual

ZERO_MODE_TOL = 1e-12


class PhaseError(RuntimeError):
    def __init__(self, phase: str, exc: Exception):
        super().__init__(f"[{phase}] {type(exc).__name__}: {exc}")
        self.phase = phase
        self.__cause__ = exc


def _zigzag(k: int) -> int:
    return 2 * k if k >= 0 else -2 * k - 1


def mode_uniforms(seed: int, n: Sequence[int], count: int = 4) -> np.ndarray:
    """``count`` uniforms on [0, 1) from a Philox stream keyed by (seed, n).

    Each mode owns its stream, so enlarging the ball adds modes without
    changing the ones already there.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_zigzag(int(k)) for k in n))
    return np.random.Generator(np.random.Philox(ss)).random(count)


def _is_positive(n: Sequence[int]) -> bool:
    for k in n:
        if k:
            return k > 0
    return False


def gen_init(cfg: RunConfig) -> tuple[CoefficientField, CoefficientField]:
    """c(n) = B e^{-kappa|n|/2} rho e^{i theta}; c'(n) the same with an extra |omega|.

    With ``real_data`` only lexicographically positive n are drawn, c(-n) is
    the conjugate of c(n) and c(0) = B rho cos(theta) is real.
    """
    idx = ball_index(cfg.nu, cfg.N)
    omega_l1 = float(sum(abs(w) for w in cfg.omega))
    c = np.zeros(len(idx), dtype=complex)
    cp = np.zeros(len(idx), dtype=complex)
    if cfg.B == 0:
        return CoefficientField(cfg.nu, cfg.N, c), CoefficientField(cfg.nu, cfg.N, cp)
    for i, n in enumerate(idx.keys):
        if cfg.real_data and not _is_positive(n) and any(n):
            continue
        rho, theta, rho_p, theta_p = mode_uniforms(cfg.seed, n)
        amp = cfg.B * math.exp(-cfg.kappa * idx.norms[i] / 2)
        theta, theta_p = 2 * math.pi * theta, 2 * math.pi * theta_p
        if cfg.real_data and not any(n):
            c[i] = amp * rho * math.cos(theta)
            cp[i] = amp * omega_l1 * rho_p * math.cos(theta_p)
        else:
            c[i] = amp * rho * complex(math.cos(theta), math.sin(theta))
            cp[i] = amp * omega_l1 * rho_p * complex(math.cos(theta_p), math.sin(theta_p))
    if cfg.real_data:
        for i, n in enumerate(idx.keys):
            if _is_positive(n):
                j = idx.position[tuple(-k for k in n)]
                c[j] = c[i].conjugate()
                cp[j] = cp[i].conjugate()
    return CoefficientField(cfg.nu, cfg.N, c), CoefficientField(cfg.nu, cfg.N, cp)


@dataclass
class Solution:
    cfg: RunConfig
    c0: CoefficientField
    c0p: CoefficientField
    picard: TrajectoryField
    diag: PicardDiagnostics
    iterate_envelope: BoundReport
    timings: dict[str, float] = field(default_factory=dict)


def solve(cfg: RunConfig) -> Solution:
    cfg = cfg.resolved()
    fs, env = cfg.frequency_system(), cfg.envelope()
    timings: dict[str, float] = {}
    t = time.perf_counter()
    try:
        c0, c0p = gen_init(cfg)
    except Exception as exc:
        raise PhaseError("gen-init", exc) from exc
    timings["gen_init"] = time.perf_counter() - t

    worst: list[BoundReport] = []

    def watch(k: int, traj: TrajectoryField) -> None:
        rep = check_envelope_iterate(traj, env)
        rep.worst = dict(rep.worst or {}, iterate=k)
        if not worst or rep.margin < worst[0].margin:
            worst[:] = [rep]

    t = time.perf_counter()
    try:
        traj, diag = picard_solve(
            c0, c0p, TimeGrid(cfg.t_end, cfg.J), fs, cfg.tol, cfg.kmax,
            convention=cfg.convention, strict=False, env=env,
            divisor=cfg.threshold_divisor, allow_beyond=cfg.allow_beyond_existence,
            on_iterate=watch,
        )
    except Exception as exc:
        raise PhaseError("picard", exc) from exc
    timings["picard"] = time.perf_counter() - t
    return Solution(cfg, c0, c0p, traj, diag, worst[0], timings)


def check_envelope_iterate(traj: TrajectoryField, env) -> BoundReport:
    return check_envelope_many(traj, env, 2.0, 4.0, name="iterate_envelope")


def zero_mode_report(traj: TrajectoryField, tol: float = ZERO_MODE_TOL) -> BoundReport:
    """c(t, 0) against c(0) + t c'(0) on every node."""
    pos = ball_index(traj.fs.nu, traj.radius).position[(0,) * traj.fs.nu]
    exact = traj.c0.values[pos] + traj.grid.nodes * traj.c0p.values[pos]
    scale = 1.0 + abs(traj.c0.values[pos]) + traj.grid.t_end * abs(traj.c0p.values[pos])
    err = float(np.abs(traj.values[:, pos] - exact).max())
    return BoundReport("zero_mode", tol * scale, tol * scale - err, err <= tol * scale, None, {"max_error": err})


def convergence_report(diag: PicardDiagnostics, tol: float) -> BoundReport:
    last = diag.deltas[-1] if diag.deltas else 0.0
    return BoundReport(
        "picard_convergence", tol, tol - last, diag.converged, None,
        {"iterations": diag.iterations, "deltas": list(diag.deltas)},
    )


def check_all(sol: Solution) -> tuple[list[BoundReport], TrajectoryField, dict[str, float]]:
    cfg, fs, env = sol.cfg, sol.cfg.frequency_system(), sol.cfg.envelope()
    timings: dict[str, float] = {}
    t = time.perf_counter()
    try:
        rk4 = ode_reference_solve(sol.c0, sol.c0p, sol.picard.grid, fs, cfg.rk4_substeps)
    except Exception as exc:
        raise PhaseError("rk4", exc) from exc
    timings["rk4"] = time.perf_counter() - t

    t = time.perf_counter()
    try:
        reports = [
            check_envelope(sol.c0, env, 1.0, 2.0, name="initial_envelope_c0"),
            check_envelope(sol.c0p, env, fs.omega_l1, 2.0, name="initial_envelope_c0p"),
            sol.iterate_envelope,
            convergence_report(sol.diag, cfg.tol),
            check_contraction(sol.diag, env, fs, sol.picard.grid, scale=float(np.abs(sol.picard.values).max())),
            uniqueness_compare(sol.picard, rk4, cfg.t_end, cfg.uniqueness_tol),
            zero_mode_report(sol.picard),
        ]
    except Exception as exc:
        raise PhaseError("bounds", exc) from exc
    timings["bounds"] = time.perf_counter() - t

    t = time.perf_counter()
    try:
        last = sol.diag.deltas[-1] if sol.diag.deltas else 0.0
        reports.append(spectral_residual(sol.picard, fs, floor=iteration_floor(sol.picard, last)))
    except Exception as exc:
        raise PhaseError("residual", exc) from exc
    timings["residual"] = time.perf_counter() - t
    return reports, rk4, timings


@dataclass
class RunManifest:
    config: dict[str, Any]
    version: str
    config_hash: str
    t_end: float
    resonance_floor: float
    contraction_rate: float
    converged: bool
    deltas: list[float]
    reports: list[dict[str, Any]]
    outputs: list[str]
    passed: bool
    timings: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        """Everything except wall-clock timings, which live in timings.json."""
        d = dict(self.__dict__)
        d.pop("timings")
        return d


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> RunManifest:
    """gen_init -> picard_solve -> RK4 reference -> bound checks -> residual, then export."""
    sol = solve(cfg)
    reports, _, check_timings = check_all(sol)
    rcfg = sol.cfg
    fs, env = rcfg.frequency_system(), rcfg.envelope()
    timings = {**sol.timings, **check_timings}
    outputs: list[str] = []
    if out_dir is not None:
        out = Path(out_dir)
        t = time.perf_counter()
        write_field(out / "c0.csv", sol.c0, fs)
        write_field(out / "c0p.csv", sol.c0p, fs)
        outputs += ["c0.csv", "c0.json", "c0p.csv", "c0p.json"]
        names = write_trajectory(out / "trajectory", sol.picard, {
            "tol": rcfg.tol, "kmax": rcfg.kmax, "converged": sol.diag.converged, "deltas": list(sol.diag.deltas),
        })
        outputs += [f"trajectory/{n}" for n in names]
        times, r = residual_values(sol.picard)
        write_rows(out / "residual.csv", ["t", "max_residual"], zip(times.tolist(), np.abs(r).max(axis=1).tolist()))
        outputs += ["residual.csv", "manifest.json", "timings.json"]
        timings["export"] = time.perf_counter() - t
    manifest = RunManifest(
        config=rcfg.to_json(),
        version=__version__,
        config_hash=rcfg.digest(),
        t_end=rcfg.t_end,
        resonance_floor=fs.resonance_floor,
        contraction_rate=contraction_rate(env, fs, rcfg.t_end),
        converged=sol.diag.converged,
        deltas=list(sol.diag.deltas),
        reports=[r.to_json() for r in reports],
        outputs=outputs,
        passed=all(r.passed for r in reports),
        timings=timings,
    )
    if out_dir is not None:
        write_json(Path(out_dir) / "manifest.json", manifest.to_json())
        write_json(Path(out_dir) / "timings.json", timings)
    return manifest
