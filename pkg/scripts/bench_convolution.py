#!/usr/bin/env python3
"""Time the weighted self-convolution for nu = 1, 2, 3 across radii."""

import argparse
import math
from dataclasses import dataclass
from pathlib import Path

from boussinesq_lab.cli import BENCH_RADII, bench_convolution
from boussinesq_lab.io import write_rows


@dataclass
class BenchConfig:
    radii: tuple[int, ...] = BENCH_RADII
    max_nu: int = 3
    repeats: int = 5
    out: Path = Path("out/bench")


OMEGAS = {1: (1.0,), 2: (1.0, math.sqrt(2.0)), 3: (1.0, math.sqrt(2.0), math.sqrt(3.0))}


def main(bc: BenchConfig) -> None:
    rows = []
    for nu in range(1, bc.max_nu + 1):
        # the nu = 3 ball at N = 12 has 2,625 modes; cap the radius so the plan stays small
        radii = tuple(N for N in bc.radii if nu < 3 or N <= 8)
        for N, modes, ns in bench_convolution(nu, OMEGAS[nu], radii, bc.repeats):
            rows.append([nu, N, modes, ns])
            print(f"nu={nu} N={N:>2} modes={modes:>5} {ns:>12} ns/op")
    print(f"wrote {write_rows(bc.out / 'bench_all.csv', ['nu', 'N', 'modes', 'ns_per_op'], rows)}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-nu", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("out/bench"))
    a = ap.parse_args()
    main(BenchConfig(max_nu=a.max_nu, out=a.out))
