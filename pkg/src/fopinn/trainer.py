"""Loss assembly, Adam, dynamic loss scaling and the instrumented training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import kernels
from .autodiff import Tape, reverse_sweep
from .config import RunConfig
from .network import MlpConfig, ParamVector, bind_params, init_params, save_checkpoint
from .physics import ResidualSet
from .problems import Problem, build_problem
from .sampler import sample_batch
from .verify import assert_oracle

log = logging.getLogger(__name__)

LOG_COLUMNS = (
    "iteration",
    "loss_total",
    "loss_pde",
    "loss_compat",
    "loss_bc",
    "val_rel_l2",
    "sec_per_iter",
    "tape_nodes",
    "sweeps",
    "max_deriv_depth",
)
GROUPS = ("pde", "compat", "bc")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class LossWeights:
    pde: float = 1.0
    compat: float = 1.0
    bc: float = 1.0

    def __post_init__(self):
        vals = (self.pde, self.compat, self.bc)
        if any(w < 0 for w in vals):
            raise ValueError("loss weights must be nonnegative")

    def get(self, group: str) -> float:
        return getattr(self, group)


@dataclass
class AssembledLoss:
    total: int
    groups: dict[str, int]
    per_residual: dict[str, int]


def assemble_loss(tape: Tape, residual_set: ResidualSet, weights: LossWeights, exact_bc: bool = False) -> AssembledLoss:
    """sum_g w_g * sum_{r in g} mean(r^2); the bc group is dropped under exact BCs."""
    groups = {g: m for g, m in residual_set.groups.items() if m}
    if exact_bc and "bc" in groups:
        log.warning("exact-BC mode: ignoring %d boundary residual(s)", len(groups["bc"]))
        groups.pop("bc")
    if not groups:
        raise ValueError("no residuals to assemble")
    if all(weights.get(g) == 0 for g in groups):
        raise ValueError("all loss weights are zero")
    per_residual, group_nodes = {}, {}
    total = None
    for g, members in groups.items():
        acc = None
        for name, node in members.items():
            ms = tape.mean(tape.square(node))
            per_residual[name] = ms
            acc = ms if acc is None else tape.add(acc, ms)
        group_nodes[g] = acc
        w = weights.get(g)
        if w == 0:
            continue
        term = acc if w == 1.0 else tape.scale(acc, w)
        total = term if total is None else tape.add(total, term)
    return AssembledLoss(total, group_nodes, per_residual)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.97
    decay_steps: int = 1000

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)

    def current_lr(self) -> float:
        return self.lr * self.decay ** (self.t // self.decay_steps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, allow_nonfinite: bool = False) -> None:
    """Bias-corrected Adam update of ``params`` in place."""
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    if not allow_nonfinite and not np.all(np.isfinite(grads)):
        raise TrainingDiverged("non-finite gradient in full-precision mode")
    lr = state.current_lr()
    state.t += 1
    kernels.adam_update(params, grads, state.m, state.v, lr, state.beta1, state.beta2, state.eps, state.t)


@dataclass
class LossScaleState:
    scale: float = 2.0**15
    growth_interval: int = 2000
    backoff_factor: float = 0.5
    growth_factor: float = 2.0
    steps_since_overflow: int = 0
    min_scale: float = 2.0**-20
    overflows: int = 0
    growths: int = 0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("loss scale must be positive")


def scaled_backward(tape: Tape, loss_node: int, state: LossScaleState, inject_overflow: bool = False):
    """Reverse sweep of ``scale * loss``.

    Returns ``(grads, overflow)``; ``grads`` is None on overflow, in which case
    the scale has been backed off and the caller must skip the update.
    """
    grads = reverse_sweep(tape, loss_node, seed=state.scale)
    finite = all(np.all(np.isfinite(g)) for g in grads.values())
    if inject_overflow or not finite:
        state.scale *= state.backoff_factor
        state.steps_since_overflow = 0
        state.overflows += 1
        if state.scale < state.min_scale:
            raise TrainingDiverged(f"loss scale underflowed to {state.scale:g}")
        return None, True
    inv = 1.0 / state.scale
    grads = {k: g * inv for k, g in grads.items()}
    state.steps_since_overflow += 1
    if state.steps_since_overflow >= state.growth_interval:
        state.scale *= state.growth_factor
        state.steps_since_overflow = 0
        state.growths += 1
    return grads, False


@dataclass
class TrainRecord:
    iteration: int
    loss_total: float
    loss_pde: float
    loss_compat: float
    loss_bc: float
    val_rel_l2: float | None
    sec_per_iter: float
    tape_nodes: int
    sweeps: int
    max_deriv_depth: int
    residuals: dict[str, float] = field(default_factory=dict)
    overflow: bool = False
    loss_scale: float | None = None


@dataclass
class TrainResult:
    config: RunConfig
    mlp: MlpConfig
    params: ParamVector
    records: list[TrainRecord]
    problem: Problem
    loss_scale: LossScaleState | None = None

    @property
    def final_validation(self) -> float:
        vals = [r.val_rel_l2 for r in self.records if r.val_rel_l2 is not None]
        return vals[-1] if vals else float("nan")


def training_step(problem: Problem, params: ParamVector, mlp: MlpConfig, batch, weights: LossWeights):
    """Build one tape and its loss; returns ``(tape, AssembledLoss)``."""
    tape = problem.new_tape()
    rs = problem.residuals(tape, params, mlp, batch)
    return tape, assemble_loss(tape, rs, weights, exact_bc=problem.exact_bc)


def _grad_vector(tape: Tape, params: ParamVector, grads: dict[int, np.ndarray]) -> np.ndarray:
    ids = bind_params(tape, params)
    return params.flatten_grads([grads[i] for i in ids])


def iterate_training(config: RunConfig, params: ParamVector | None = None) -> Iterator[tuple[TrainRecord, ParamVector]]:
    """Yield one record per iteration; ``params`` is updated in place."""
    problem = build_problem(config)
    assert_oracle(problem)
    mlp = problem.mlp_config()
    params = init_params(mlp) if params is None else params
    tc = config.trainer
    weights = LossWeights(tc.weights.pde, tc.weights.compat, tc.weights.bc)
    adam = AdamState.zeros(len(params), lr=tc.lr, decay=tc.lr_decay, decay_steps=tc.decay_steps)
    reduced = tc.precision != "float64"
    scaler = LossScaleState(tc.loss_scale.init, tc.loss_scale.growth_interval) if reduced else None
    inject = set(tc.loss_scale.inject_overflow_at)
    counts = config.sampler.counts
    grid = problem.grid()
    for it in range(tc.iters):
        t0 = time.perf_counter()
        batch = sample_batch(counts.interior, counts.boundary, problem.domain, problem.ranges, config.sampler.seed, it)
        tape, loss = training_step(problem, params, mlp, batch, weights)
        total = float(tape.value(loss.total))
        overflow = False
        if scaler is not None:
            grads, overflow = scaled_backward(tape, loss.total, scaler, inject_overflow=it in inject)
        else:
            if not np.isfinite(total):
                raise TrainingDiverged(f"non-finite loss at iteration {it}")
            grads = reverse_sweep(tape, loss.total)
        if not overflow:
            adam_step(adam, params.data, _grad_vector(tape, params, grads))
        elapsed = time.perf_counter() - t0
        val = None
        if tc.validate_every and ((it + 1) % tc.validate_every == 0 or it + 1 == tc.iters):
            val = problem.validate(params, mlp, grid)["mean"]
        grp = {g: float(tape.value(n)) for g, n in loss.groups.items()}
        rec = TrainRecord(
            iteration=it + 1,
            loss_total=total,
            loss_pde=grp.get("pde", 0.0),
            loss_compat=grp.get("compat", 0.0),
            loss_bc=grp.get("bc", 0.0),
            val_rel_l2=val,
            sec_per_iter=elapsed,
            tape_nodes=len(tape),
            sweeps=tape.sweep_count,
            max_deriv_depth=tape.max_derivative_depth,
            residuals={k: float(tape.value(n)) for k, n in loss.per_residual.items()},
            overflow=overflow,
            loss_scale=None if scaler is None else scaler.scale,
        )
        if problem.first_order and rec.max_deriv_depth != 1:
            raise AssertionError(f"first-order tape reached derivative depth {rec.max_deriv_depth}")
        yield rec, params


def train(config: RunConfig, params: ParamVector | None = None, write: bool = True) -> TrainResult:
    problem = build_problem(config)
    mlp = problem.mlp_config()
    params = init_params(mlp) if params is None else params
    records = []
    writer = None
    out = Path(config.output_dir)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        writer = TrainingLog(out / "train_log.csv", config.trainer.log_wall_time)
    try:
        for rec, _ in iterate_training(config, params):
            records.append(rec)
            if writer:
                writer.write(rec)
    finally:
        if writer:
            writer.close()
    if write:
        save_checkpoint(out / "checkpoint.ckpt", mlp, params)
    return TrainResult(config, mlp, params, records, problem)


class TrainingLog:
    """CSV writer: fixed columns, then one mean-square column per residual name."""

    def __init__(self, path, log_wall_time: bool = True):
        self.path = Path(path)
        self.log_wall_time = log_wall_time
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._extra = None

    def write(self, rec: TrainRecord) -> None:
        if self._extra is None:
            self._extra = list(rec.residuals)
            self._writer.writerow(list(LOG_COLUMNS) + self._extra)
        row = [
            rec.iteration,
            repr(rec.loss_total),
            repr(rec.loss_pde),
            repr(rec.loss_compat),
            repr(rec.loss_bc),
            "" if rec.val_rel_l2 is None else repr(rec.val_rel_l2),
            f"{rec.sec_per_iter:.6f}" if self.log_wall_time else "",
            rec.tape_nodes,
            rec.sweeps,
            rec.max_deriv_depth,
        ]
        row += [repr(rec.residuals.get(k, float("nan"))) for k in self._extra]
        self._writer.writerow(row)

    def close(self) -> None:
        self._fh.close()
