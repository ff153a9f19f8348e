"""Run configuration: a JSON document with a fixed key set.

Unknown keys are rejected with the list of valid keys, at every nesting level.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

PROBLEMS = ("helmholtz", "navier_stokes")
BC_MODES = ("exact", "soft")
PRECISION_CHOICES = ("float64", "float32", "float16")


class ConfigError(ValueError):
    pass


@dataclass
class PhysicsConfig:
    # Helmholtz
    k: float = 1.0
    dims: int = 2
    # Navier-Stokes (defaults are the fixed point of a non-parameterized run)
    nu: float = 0.05
    rho: float = 1.0
    v_in: float = 1.0
    channel: list[float] = field(default_factory=lambda: [0.0, 1.0, -0.25, 0.25])
    a: float = 0.4
    b: float = 0.0
    r: float = 0.05
    h: float = 0.1
    kappa: float = 3.141592653589793


@dataclass
class NetworkConfig:
    layers: int = 4
    width: int = 64
    seed: int = 0


@dataclass
class CountsConfig:
    interior: int = 4096
    boundary: int = 1024


@dataclass
class SamplerConfig:
    counts: CountsConfig = field(default_factory=CountsConfig)
    ranges: dict[str, list[float]] = field(default_factory=dict)
    seed: int = 0


@dataclass
class LossScaleConfig:
    init: float = 2.0**15
    growth_interval: int = 2000
    inject_overflow_at: list[int] = field(default_factory=list)


@dataclass
class WeightsConfig:
    pde: float = 1.0
    compat: float = 1.0
    bc: float = 1.0


@dataclass
class TrainerConfig:
    iters: int = 5000
    lr: float = 1e-3
    lr_decay: float = 0.97
    decay_steps: int = 1000
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    precision: str = "float64"
    validate_every: int = 200
    loss_scale: LossScaleConfig = field(default_factory=LossScaleConfig)
    log_wall_time: bool = True


@dataclass
class RunConfig:
    problem: str = "helmholtz"
    formulation: str = "first_order"
    bc_mode: str = "exact"
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.formulation not in ("first_order", "second_order"):
            raise ConfigError(f"formulation must be first_order or second_order, got {self.formulation!r}")
        if self.bc_mode not in BC_MODES:
            raise ConfigError(f"bc_mode must be one of {BC_MODES}, got {self.bc_mode!r}")
        if self.trainer.precision not in PRECISION_CHOICES:
            raise ConfigError(f"trainer.precision must be one of {PRECISION_CHOICES}")
        if self.problem == "navier_stokes" and self.bc_mode == "exact":
            raise ConfigError("exact boundary conditions are only implemented for helmholtz")
        if self.trainer.iters < 0:
            raise ConfigError("trainer.iters must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"trainer.iters": 10})``."""
        d = self.to_dict()
        for path, value in changes.items():
            node = d
            *head, last = path.split(".")
            for key in head:
                node = node[key]
            if last not in node:
                raise ConfigError(f"unknown key {path!r}")
            node[last] = value
        return from_dict(d)


def _build(cls, data: Any, where: str):
    if not dataclasses.is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(
            f"{where or 'config'}: unknown key(s) {unknown}; valid keys are {sorted(fields)}"
        )
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        sub = _NESTED.get(ftype)
        kwargs[name] = _build(sub, value, f"{where}.{name}" if where else name) if sub else value
    return cls(**kwargs)


_NESTED = {
    "PhysicsConfig": PhysicsConfig,
    "NetworkConfig": NetworkConfig,
    "CountsConfig": CountsConfig,
    "SamplerConfig": SamplerConfig,
    "LossScaleConfig": LossScaleConfig,
    "WeightsConfig": WeightsConfig,
    "TrainerConfig": TrainerConfig,
}


def from_dict(data: dict) -> RunConfig:
    try:
        return _build(RunConfig, data, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
