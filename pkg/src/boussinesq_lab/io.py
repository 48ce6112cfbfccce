"""CSV/JSON serialization of fields and trajectories.

Floats are written with repr (shortest round-trip form, '.' decimal point,
locale independent) so identical inputs give identical bytes.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

from .evolution import TrajectoryField
from .lattice import CoefficientField, FrequencySystem


def _fmt(x: float) -> str:
    return repr(float(x))


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
        fh.write("\n")
    return path


def read_json(path: Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def sidecar_path(csv_path: Path) -> Path:
    return Path(csv_path).with_suffix(".json")


def write_field(path: Path, field_: CoefficientField, fs: FrequencySystem) -> Path:
    """Nonzero modes in ball order, header n1..nV,re,im, plus a {nu, omega, radius} sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [f"n{i + 1}" for i in range(field_.nu)] + ["re", "im"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n, v in zip(field_.keys(), field_.values):
            if v != 0:
                w.writerow([str(c) for c in n] + [_fmt(v.real), _fmt(v.imag)])
    write_json(sidecar_path(path), {"nu": field_.nu, "omega": list(fs.omega), "radius": field_.radius})
    return path


def read_field(path: Path) -> tuple[CoefficientField, dict]:
    path = Path(path)
    meta = read_json(sidecar_path(path))
    nu, radius = int(meta["nu"]), int(meta["radius"])
    entries = {}
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != [f"n{i + 1}" for i in range(nu)] + ["re", "im"]:
            raise ValueError(f"unexpected header {header} in {path}")
        for row in r:
            n = tuple(int(c) for c in row[:nu])
            entries[n] = complex(float(row[nu]), float(row[nu + 1]))
    return CoefficientField.from_dict(nu, radius, entries), meta


def write_trajectory(directory: Path, traj: TrajectoryField, meta: dict) -> list[str]:
    """One field CSV per node (node_0000.csv, ...) and manifest.json; returns relative paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(traj.grid.J)))
    names = []
    for j, snap in enumerate(traj):
        name = f"node_{j:0{width}d}.csv"
        write_field(directory / name, snap, traj.fs)
        names.append(name)
    manifest = {
        "t_end": traj.grid.t_end,
        "J": traj.grid.J,
        "nodes": [float(t) for t in traj.grid.nodes],
        "files": names,
        **meta,
    }
    write_json(directory / "manifest.json", manifest)
    return names + ["manifest.json"]


def write_rows(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else str(v) for v in row])
    return path
