"""Fully connected Swish network recorded on a tape.

The output layer is split into named slots: *primary* fields (``u``, or
``u, v, p``) and *auxiliary* fields holding first derivatives of a primary
field (``u_x`` = du/dx). Inputs are coordinates followed by any system
parameters; each input dimension is mapped affinely to [-1, 1] before the
first layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ShapeError, Tape

COORD_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class OutputSchema:
    primary_fields: tuple[str, ...]
    auxiliary_fields: tuple[str, ...] = ()

    def __post_init__(self):
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError(f"output names must be unique: {names}")
        for aux in self.auxiliary_fields:
            base, _, coord = aux.rpartition("_")
            if base not in self.primary_fields or coord not in COORD_NAMES:
                raise ValueError(f"auxiliary field {aux!r} must be <primary>_<x|y|z>")

    @property
    def names(self) -> tuple[str, ...]:
        return self.primary_fields + self.auxiliary_fields

    def index(self, name: str) -> int:
        return self.names.index(name)

    def derivative_of(self, aux: str) -> tuple[str, int]:
        """(primary field, coordinate index) that ``aux`` is a derivative of."""
        base, _, coord = aux.rpartition("_")
        return base, COORD_NAMES.index(coord)

    @classmethod
    def helmholtz(cls, dims: int, first_order: bool) -> "OutputSchema":
        aux = tuple(f"u_{c}" for c in COORD_NAMES[:dims]) if first_order else ()
        return cls(("u",), aux)

    @classmethod
    def navier_stokes(cls, first_order: bool) -> "OutputSchema":
        aux = ("u_x", "u_y", "v_x", "v_y") if first_order else ()
        return cls(("u", "v", "p"), aux)


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_layers: int = 4
    hidden_width: int = 64
    output_schema: OutputSchema = field(default_factory=lambda: OutputSchema(("u",)))
    seed: int = 0
    input_lower: tuple[float, ...] | None = None
    input_upper: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1:
            raise ValueError("hidden_layers and hidden_width must be >= 1")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        for bounds in (self.input_lower, self.input_upper):
            if bounds is not None and len(bounds) != self.input_dim:
                raise ValueError("input bounds must have input_dim entries")

    @property
    def output_dim(self) -> int:
        return len(self.output_schema.names)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) for each weight matrix."""
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    def input_affine(self) -> tuple[np.ndarray, np.ndarray] | None:
        if self.input_lower is None or self.input_upper is None:
            return None
        lo = np.asarray(self.input_lower, dtype=np.float64)
        hi = np.asarray(self.input_upper, dtype=np.float64)
        width = np.where(hi > lo, hi - lo, 2.0)
        scale = 2.0 / width
        return scale, -1.0 - lo * scale

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
            "primary_fields": list(self.output_schema.primary_fields),
            "auxiliary_fields": list(self.output_schema.auxiliary_fields),
            "seed": self.seed,
            "input_lower": None if self.input_lower is None else list(self.input_lower),
            "input_upper": None if self.input_upper is None else list(self.input_upper),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        return cls(
            input_dim=d["input_dim"],
            hidden_layers=d["hidden_layers"],
            hidden_width=d["hidden_width"],
            output_schema=OutputSchema(tuple(d["primary_fields"]), tuple(d["auxiliary_fields"])),
            seed=d["seed"],
            input_lower=None if d["input_lower"] is None else tuple(d["input_lower"]),
            input_upper=None if d["input_upper"] is None else tuple(d["input_upper"]),
        )


@dataclass
class ParamVector:
    """Flat parameter storage; layer ``i`` is ``W_i`` (row-major) then ``b_i``."""

    data: np.ndarray
    shapes: list[tuple[int, int]]

    def __post_init__(self):
        expected = sum(o * i + o for o, i in self.shapes)
        if self.data.shape != (expected,):
            raise ValueError(f"parameter vector has length {self.data.size}, layout needs {expected}")

    def __len__(self) -> int:
        return self.data.size

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        out, pos = [], 0
        for o, i in self.shapes:
            w = self.data[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = self.data[pos:pos + o]
            pos += o
            out.append((w, b))
        return out

    def copy(self) -> "ParamVector":
        return ParamVector(self.data.copy(), list(self.shapes))

    def flatten_grads(self, grads: list[np.ndarray]) -> np.ndarray:
        """Pack per-tensor gradients (W_0, b_0, W_1, ...) into layout order."""
        return np.concatenate([np.asarray(g).reshape(-1) for g in grads])


def init_params(config: MlpConfig) -> ParamVector:
    """Glorot-uniform weights, zero biases, deterministic in ``config.seed``."""
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    chunks = []
    for fan_out, fan_in in config.layer_shapes():
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-bound, bound, size=fan_out * fan_in))
        chunks.append(np.zeros(fan_out))
    return ParamVector(np.concatenate(chunks), config.layer_shapes())


def bind_params(tape: Tape, params: ParamVector) -> list[int]:
    """Record each weight/bias as a parameter leaf once per tape."""
    key = id(params)
    if key not in tape.param_cache:
        ids = []
        for w, b in params.layers():
            ids.append(tape.parameter(w))
            ids.append(tape.parameter(b))
        tape.param_cache[key] = ids
    return tape.param_cache[key]


def forward_on_tape(tape: Tape, params: ParamVector, config: MlpConfig, x: int) -> dict[str, int]:
    """Record the network on ``tape`` for input node ``x``; one node per slot."""
    xv = tape[x].value
    if xv.shape[-1] != config.input_dim:
        raise ShapeError(f"network expects input_dim {config.input_dim}, got points of shape {xv.shape}")
    ids = bind_params(tape, params)
    h = x
    affine = config.input_affine()
    if affine is not None:
        scale, shift = affine
        h = tape.add(tape.mul(h, tape.constant(scale)), tape.constant(shift))
    n_layers = len(params.shapes)
    for layer in range(n_layers):
        w, b = ids[2 * layer], ids[2 * layer + 1]
        h = tape.add(tape.matvec(w, h), b)
        if layer < n_layers - 1:
            h = tape.swish(h)
    if tape[h].value.ndim == 1:
        raise ShapeError("forward_on_tape expects a batch of points (2-D input)")
    return {name: tape.column(h, i) for i, name in enumerate(config.output_schema.names)}


def evaluate(params: ParamVector, config: MlpConfig, points: np.ndarray) -> dict[str, np.ndarray]:
    """Plain forward evaluation (no gradients needed)."""
    tape = Tape()
    x = tape.input(np.atleast_2d(points))
    out = forward_on_tape(tape, params, config, x)
    return {k: tape.value(v) for k, v in out.items()}


# -- checkpoint file ------------------------------------------------------
# Layout: magic line "FOPINN-CKPT 1\n", one line of UTF-8 JSON holding the
# MlpConfig plus "n_params", then n_params little-endian float64 values.

_MAGIC = b"FOPINN-CKPT 1\n"


def save_checkpoint(path, config: MlpConfig, params: ParamVector) -> None:
    header = dict(config.to_dict(), n_params=len(params))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(params.data.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[MlpConfig, ParamVector]:
    raw = Path(path).read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    rest = raw[len(_MAGIC):]
    line, _, blob = rest.partition(b"\n")
    header = json.loads(line)
    config = MlpConfig.from_dict(header)
    data = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    if data.size != header["n_params"]:
        raise ValueError(f"{path}: truncated parameter block")
    return config, ParamVector(data, config.layer_shapes())
