import csv
import logging

import numpy as np
import pytest

from fopinn.autodiff import Tape
from fopinn.config import RunConfig
from fopinn.network import init_params, load_checkpoint
from fopinn.physics import ResidualSet
from fopinn.problems import build_problem
from fopinn.trainer import (
    LOG_COLUMNS,
    AdamState,
    LossScaleState,
    LossWeights,
    TrainingDiverged,
    adam_step,
    assemble_loss,
    iterate_training,
    scaled_backward,
    train,
)


def small(**kw):
    base = {
        "trainer.iters": 10,
        "trainer.validate_every": 5,
        "sampler.counts.interior": 64,
        "sampler.counts.boundary": 16,
        "network.width": 16,
        "network.layers": 2,
    }
    base.update(kw)
    return RunConfig().replace(**base)


def _rs(t, groups):
    rs = ResidualSet()
    for g, members in groups.items():
        for name, vals in members.items():
            rs.add(g, name, t.constant(np.asarray(vals, dtype=float)))
    return rs


def test_assemble_zero_and_weighted():
    t = Tape()
    loss = assemble_loss(t, _rs(t, {"pde": {"r": [0.0, 0.0]}}), LossWeights())
    assert t.value(loss.total) == 0.0
    t = Tape()
    loss = assemble_loss(t, _rs(t, {"pde": {"r": [1.0, -1.0]}}), LossWeights(pde=2.0))
    assert t.value(loss.total) == 2.0


def test_assemble_drops_bc_under_exact_bc(caplog):
    t = Tape()
    rs = _rs(t, {"pde": {"r": [1.0]}, "bc": {"b": [5.0]}})
    with caplog.at_level(logging.WARNING):
        loss = assemble_loss(t, rs, LossWeights(), exact_bc=True)
    assert t.value(loss.total) == 1.0
    assert "bc" not in loss.groups
    assert "exact-BC" in caplog.text


def test_assemble_rejects_all_zero_weights():
    t = Tape()
    with pytest.raises(ValueError):
        assemble_loss(t, _rs(t, {"pde": {"r": [1.0]}}), LossWeights(0, 0, 0))
    with pytest.raises(ValueError):
        LossWeights(pde=-1)


def test_adam_zero_grad_and_first_step():
    st = AdamState.zeros(3)
    p = np.array([1.0, 2.0, 3.0])
    adam_step(st, p, np.zeros(3))
    assert np.array_equal(p, [1.0, 2.0, 3.0]) and st.t == 1
    st = AdamState.zeros(1)
    p = np.array([0.0])
    adam_step(st, p, np.array([1.0]))
    assert p[0] == pytest.approx(-0.001, rel=1e-7)


def test_adam_deterministic_and_rejects_nan():
    def run():
        st = AdamState.zeros(4)
        p = np.ones(4)
        rng = np.random.default_rng(0)
        for _ in range(50):
            adam_step(st, p, rng.normal(size=4))
        return p.tobytes()

    assert run() == run()
    with pytest.raises(TrainingDiverged):
        adam_step(AdamState.zeros(1), np.zeros(1), np.array([np.nan]))


def test_lr_schedule():
    st = AdamState.zeros(1, lr=1e-3, decay=0.97, decay_steps=1000)
    st.t = 2500
    assert st.current_lr() == pytest.approx(1e-3 * 0.97**2)


def test_scaled_backward_exact_power_of_two():
    t = Tape()
    p = t.parameter(np.array([0.3, -1.7]))
    loss = t.sum(t.square(p))
    st = LossScaleState()
    grads, overflow = scaled_backward(t, loss, st)
    assert not overflow
    assert np.array_equal(grads[p], 2 * np.array([0.3, -1.7]))


def test_scaled_backward_overflow_backs_off():
    t = Tape()
    p = t.parameter(1.0)
    loss = t.mul(p, t.constant(np.inf))
    st = LossScaleState()
    grads, overflow = scaled_backward(t, loss, st)
    assert overflow and grads is None and st.scale == 2.0**14


def test_scale_growth_after_interval():
    st = LossScaleState(growth_interval=2000)
    t = Tape()
    p = t.parameter(1.0)
    loss = t.square(p)
    for _ in range(2000):
        scaled_backward(t, loss, st)
    assert st.scale == 2.0**16 and st.growths == 1


def test_zero_iterations_checkpoint_equals_init(tmp_path):
    cfg = small(**{"trainer.iters": 0, "output_dir": str(tmp_path)})
    res = train(cfg)
    _, params = load_checkpoint(tmp_path / "checkpoint.ckpt")
    assert params.data.tobytes() == init_params(res.mlp).data.tobytes()


def test_log_columns_and_structural_invariants(tmp_path):
    cfg = small(**{"output_dir": str(tmp_path)})
    res = train(cfg)
    with open(tmp_path / "train_log.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0][: len(LOG_COLUMNS)]) == LOG_COLUMNS
    assert rows[0][len(LOG_COLUMNS):] == ["helmholtz", "compat_u_x", "compat_u_y"]
    assert len(rows) == 11
    assert len({r.tape_nodes for r in res.records}) == 1
    assert all(r.max_deriv_depth == 1 and r.sweeps == 1 for r in res.records)
    assert [r.val_rel_l2 is not None for r in res.records] == [i % 5 == 4 for i in range(10)]


@pytest.mark.parametrize("problem,form,bc,depth", [
    ("helmholtz", "second_order", "soft", 2),
    ("navier_stokes", "first_order", "soft", 1),
    ("navier_stokes", "second_order", "soft", 2),
])
def test_depth_per_formulation(problem, form, bc, depth):
    cfg = small(**{"problem": problem, "formulation": form, "bc_mode": bc, "trainer.iters": 3})
    for rec, _ in iterate_training(cfg):
        assert rec.max_deriv_depth == depth


def test_log_is_bitwise_reproducible(tmp_path):
    cfg = small(**{"trainer.log_wall_time": False, "problem": "navier_stokes", "bc_mode": "soft",
                   "sampler.ranges": {"nu": [0.02, 0.1]}})
    train(cfg.replace(output_dir=str(tmp_path / "a")))
    train(cfg.replace(output_dir=str(tmp_path / "b")))
    assert (tmp_path / "a/train_log.csv").read_bytes() == (tmp_path / "b/train_log.csv").read_bytes()
    assert (tmp_path / "a/checkpoint.ckpt").read_bytes() == (tmp_path / "b/checkpoint.ckpt").read_bytes()


def test_reduced_precision_with_injected_overflow():
    cfg = small(**{"trainer.precision": "float16", "trainer.iters": 6,
                   "trainer.loss_scale.inject_overflow_at": [2]})
    recs = [r for r, _ in iterate_training(cfg)]
    assert [r.overflow for r in recs] == [False, False, True, False, False, False]
    assert recs[2].loss_scale == 2.0**14
    assert all(np.isfinite(r.loss_total) for r in recs)


@pytest.mark.slow
def test_fo_helmholtz_validation_improves():
    cfg = RunConfig().replace(**{
        "trainer.iters": 5000,
        "trainer.validate_every": 100,
        "sampler.counts.interior": 128,
        "sampler.counts.boundary": 32,
        "network.width": 32,
    })
    vals = {r.iteration: r.val_rel_l2 for r, _ in iterate_training(cfg) if r.val_rel_l2 is not None}
    assert vals[5000] < vals[100]


def test_problem_grid_sizes():
    assert build_problem(RunConfig()).grid().shape == (101 * 101, 2)
    ns = build_problem(RunConfig(problem="navier_stokes", bc_mode="soft"))
    assert len(ns.validation_params()) == 1
    ns3 = build_problem(RunConfig(problem="navier_stokes", bc_mode="soft").replace(
        **{"sampler.ranges": {"nu": [0.02, 0.1], "rho": [0.5, 2], "v_in": [0.5, 1.5]}}))
    vp = ns3.validation_params()
    assert vp.shape == (9, 3) and len({tuple(r) for r in vp}) == 9
