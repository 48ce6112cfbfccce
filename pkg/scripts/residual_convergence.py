#!/usr/bin/env python3
"""Residual against grid size J: the ratio between successive J should sit near 4."""

import argparse
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from boussinesq_lab.config import RunConfig
from boussinesq_lab.io import write_rows
from boussinesq_lab.pipeline import solve
from boussinesq_lab.synthesis import iteration_floor, spectral_residual


@dataclass
class ConvergenceConfig:
    grids: tuple[int, ...] = (32, 64, 128, 256, 512, 1024)
    base: RunConfig = field(default_factory=RunConfig)
    out: Path = Path("out/residual_convergence")


def main(cc: ConvergenceConfig) -> None:
    rows, prev = [], None
    for J in cc.grids:
        sol = solve(replace(cc.base, J=J))
        floor = iteration_floor(sol.picard, sol.diag.deltas[-1] if sol.diag.deltas else 0.0)
        rep = spectral_residual(sol.picard, floor=floor)
        res = rep.details["max_residual"]
        ratio = prev / res if prev and res else math.nan
        rows.append([J, res, ratio, floor, rep.passed])
        print(f"J={J:<5} residual={res:.3e} ratio={ratio:.4f} floor={floor:.1e}")
        prev = res
    print(f"wrote {write_rows(cc.out / 'residual_vs_J.csv', ['J', 'residual', 'ratio', 'floor', 'passed'], rows)}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--nu2", action="store_true", help="use omega = (1, sqrt 2), N = 4")
    ap.add_argument("--out", type=Path, default=Path("out/residual_convergence"))
    a = ap.parse_args()
    base = RunConfig(nu=2, omega=(1.0, math.sqrt(2.0)), N=4) if a.nu2 else RunConfig()
    main(ConvergenceConfig(base=base, out=a.out))
