#!/usr/bin/env python3
"""Seed sweep of the full run at desk scale; one summary row per (config, seed)."""

import argparse
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from boussinesq_lab.config import RunConfig
from boussinesq_lab.io import write_rows
from boussinesq_lab.pipeline import run


@dataclass
class SweepConfig:
    seeds: list[int] = field(default_factory=lambda: list(range(8)))
    bases: dict[str, RunConfig] = field(default_factory=lambda: {
        "nu1": RunConfig(),
        "nu2": RunConfig(nu=2, omega=(1.0, math.sqrt(2.0)), N=4),
        "nu1_div24": RunConfig(threshold_divisor=24),
    })
    out: Path = Path("out/desk_run")


def main(sc: SweepConfig) -> None:
    rows = []
    for name, base in sc.bases.items():
        for seed in sc.seeds:
            m = run(replace(base, seed=seed))
            margins = {r["name"]: r["margin"] for r in m.reports}
            failed = [r["name"] for r in m.reports if not r["passed"]]
            rows.append([
                name, seed, m.t_end, m.contraction_rate, len(m.deltas), m.passed,
                margins["uniqueness"], margins["spectral_residual"], ";".join(failed),
            ])
            print(f"{name:<10} seed={seed:<3} t_end={m.t_end:.3e} r={m.contraction_rate:.3f} "
                  f"iters={len(m.deltas)} {'PASS' if m.passed else 'FAIL ' + ','.join(failed)}")
    path = write_rows(sc.out / "summary.csv", [
        "config", "seed", "t_end", "rate", "iterations", "passed",
        "uniqueness_margin", "residual_margin", "failed",
    ], rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--out", type=Path, default=Path("out/desk_run"))
    a = ap.parse_args()
    main(SweepConfig(seeds=list(range(a.seeds)), out=a.out))
