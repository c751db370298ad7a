"""Run configuration in a flat ``key = value`` text format.

Grammar, one entry per line::

    # comment
    grid.n = 2000
    potential.kind = soliton

Keys are dotted names from :data:`SCHEMA`; unknown keys are rejected.
Values are parsed by the type of the schema default (int, float, bool
or str). Blank lines and text after ``#`` are ignored.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError

__all__ = ["SCHEMA", "RunConfig", "parse_config", "load_config"]

# key -> (default, help)
SCHEMA: dict[str, tuple[object, str]] = {
    "grid.n": (1000, "number of radial nodes"),
    "grid.rmax": (100.0, "outer radius"),
    "grid.spacing": ("uniform", "uniform or graded:<ratio>"),
    "mu": (1.0, "threshold, alpha^2 for soliton potentials"),
    "potential.kind": ("soliton", "soliton, gaussian, two-bump or zero"),
    "potential.alpha": (1.0, "soliton frequency"),
    "potential.p": (1.0, "soliton nonlinearity power"),
    "potential.amp1": (2.0, "gaussian V1 amplitude"),
    "potential.amp2": (1.0, "gaussian V2 amplitude"),
    "potential.width": (1.0, "gaussian width"),
    "potential.coupling": (1.0, "overall coupling s multiplying V"),
    "potential.s2": (0.0, "second two-bump coupling"),
    "potential.tune": ("none", "none, resonance or eigenvalue"),
    "potential.bracket_lo": (0.1, "lower end of the tuning bracket (coupling s; ray slope t for eigenvalue tuning)"),
    "potential.bracket_hi": (50.0, "upper end of the tuning bracket (coupling s; ray slope t for eigenvalue tuning)"),
    "tolerance.rank": (1e-7, "relative rank tolerance for the A0 kernel"),
    "tolerance.m0": (1e-5, "relative tolerance for vanishing monopole moments"),
    "tolerance.eig": (1e-6, "eigenvalue tolerance relative to ||H||"),
    "tolerance.projection": (1e-7, "idempotence/orthogonality tolerance"),
    "projection.mode": ("basis", "threshold projection construction: basis or kernel"),
    "time.t_min": (1.0, "first sample time"),
    "time.t_max": (0.0, "last sample time, 0 for the reflection time"),
    "time.samples": (12, "number of geometrically spaced sample times"),
    "time.window_lo": (0.0, "fit window start, 0 for t_min"),
    "time.window_hi": (0.0, "fit window end, 0 for the last sample"),
    "cutoff.lambda0": (0.0, "energy cutoff half-width, 0 for 0.4 sqrt(mu)"),
    "output.dir": ("runs", "output root"),
    "seed": (0, "seed for randomized checks"),
}


def _coerce(key: str, raw: object) -> object:
    default = SCHEMA[key][0]
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("true", "yes", "1"):
                return True
            if text in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(str(raw).strip())
        if isinstance(default, float):
            val = float(str(raw).strip())
            if not math.isfinite(val):
                raise ValueError(raw)
            return val
        return str(raw).strip()
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; every key of :data:`SCHEMA` is present."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        full = {k: v[0] for k, v in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise ConfigurationError(f"unknown config key {k!r}")
            full[k] = _coerce(k, v)
        object.__setattr__(self, "values", full)
        self._validate()

    def _validate(self) -> None:
        v = self.values
        if v["grid.n"] < 10:
            raise ConfigurationError("grid.n must be at least 10")
        if not v["grid.rmax"] > 0:
            raise ConfigurationError("grid.rmax must be positive")
        if not v["mu"] > 0:
            raise ConfigurationError("mu must be positive")
        if v["potential.kind"] not in ("soliton", "gaussian", "two-bump", "zero"):
            raise ConfigurationError(f"unknown potential.kind {v['potential.kind']!r}")
        if v["potential.tune"] not in ("none", "resonance", "eigenvalue"):
            raise ConfigurationError(f"unknown potential.tune {v['potential.tune']!r}")
        if v["projection.mode"] not in ("basis", "kernel"):
            raise ConfigurationError("projection.mode must be basis or kernel")
        if v["time.samples"] < 2 or not v["time.t_min"] > 0:
            raise ConfigurationError("time.samples >= 2 and time.t_min > 0 required")

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, pairs) -> "RunConfig":
        new = dict(self.values)
        for item in pairs:
            if "=" not in item:
                raise ConfigurationError(f"override {item!r} is not key=value")
            k, raw = item.split("=", 1)
            k = k.strip()
            if k not in SCHEMA:
                raise ConfigurationError(f"unknown config key {k!r}")
            new[k] = _coerce(k, raw)
        return RunConfig(new)

    def to_text(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    def canonical_json(self, exclude=("output.dir",)) -> str:
        return json.dumps({k: v for k, v in self.values.items() if k not in exclude},
                          sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        """Content hash; the output location does not change the run."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        k, raw = (part.strip() for part in line.split("=", 1))
        if k not in SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown config key {k!r}")
        if k in values:
            raise ConfigurationError(f"line {lineno}: duplicate key {k!r}")
        values[k] = _coerce(k, raw)
    return RunConfig(values)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
