"""Run configuration: defaults, JSON loading, KEY=VAL overrides and resolution of t_end."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .bounds import THRESHOLD_DIVISORS, existence_time
from .evolution import CONVENTIONS, SYMMETRIZED
from .lattice import DecayEnvelope, FrequencySystem

U64 = 2**64


@dataclass(frozen=True)
class RunConfig:
    nu: int = 1
    omega: tuple[float, ...] = (1.0,)
    N: int = 6
    B: float = 1.0
    kappa: float = 1.0
    seed: int = 0
    t_end: float | str = "auto"
    J: int = 128
    tol: float = 1e-10
    kmax: int = 20
    threshold_divisor: int = 192
    real_data: bool = True
    convention: str = SYMMETRIZED
    allow_beyond_existence: bool = False
    rk4_substeps: int = 1
    uniqueness_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if self.nu != len(self.omega):
            raise ValueError(f"omega has {len(self.omega)} components but nu={self.nu}")
        if not 0 <= int(self.seed) < U64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.threshold_divisor not in THRESHOLD_DIVISORS:
            raise ValueError(f"threshold_divisor must be one of {THRESHOLD_DIVISORS}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        if not (isinstance(self.t_end, str) and self.t_end == "auto") and not float(self.t_end) > 0:
            raise ValueError("t_end must be positive or 'auto'")
        if self.J < 4 or self.J % 2:
            raise ValueError("J must be even and >= 4")
        if not self.tol > 0 or self.kmax < 1 or self.rk4_substeps < 1:
            raise ValueError("need tol > 0, kmax >= 1, rk4_substeps >= 1")
        if self.B < 0:
            raise ValueError("B must be nonnegative")
        # kappa range and resonance are checked by the domain types
        self.frequency_system()
        self.envelope()

    def frequency_system(self) -> FrequencySystem:
        return FrequencySystem(self.omega, self.N)

    def envelope(self) -> DecayEnvelope:
        # B = 0 means zero data, which sits under every envelope; use B = 1 for
        # the horizon and the checks.
        return DecayEnvelope(self.B if self.B > 0 else 1.0, self.kappa)

    def resolved_t_end(self) -> float:
        if self.t_end == "auto":
            return existence_time(self.envelope(), self.frequency_system(), self.threshold_divisor)
        return float(self.t_end)

    def resolved(self) -> "RunConfig":
        return replace(self, t_end=self.resolved_t_end())

    def to_json(self) -> dict[str, Any]:
        d = asdict(self)
        d["omega"] = list(self.omega)
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def config_from_dict(data: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    merged = (base or RunConfig()).to_json()
    merged.update(data)
    if "omega" in data and "nu" not in data:
        merged["nu"] = len(data["omega"])
    merged["omega"] = tuple(merged["omega"])
    return RunConfig(**merged)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def parse_override(item: str) -> tuple[str, Any]:
    """KEY=VAL with VAL read as JSON when possible (numbers, lists, true/false), else a string."""
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ValueError(f"override must look like KEY=VAL, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(cfg: RunConfig, items: list[str]) -> RunConfig:
    return config_from_dict(dict(parse_override(i) for i in items), base=cfg)
