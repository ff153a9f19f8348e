import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fopinn.autodiff import (
    DepthError,
    ShapeError,
    Tape,
    TapeError,
    dump_tape,
    fd_gradient_oracle,
    input_jacobian,
    record,
    reverse_sweep,
)


def sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_record_add():
    t = Tape()
    x, y = t.input(2.0), t.input(3.0)
    assert t.value(record(t, "add", [x, y])) == 5.0


def test_record_swish_zero():
    t = Tape()
    assert t.value(record(t, "swish", [t.input(0.0)])) == 0.0


def test_record_matvec_shape_error_names_op():
    t = Tape()
    w = t.parameter(np.ones((2, 3)))
    v = t.input(np.ones(2))
    with pytest.raises(ShapeError, match="matvec.*\\(2, 3\\).*\\(2,\\)"):
        record(t, "matvec", [w, v])


def test_record_rejects_unknown_ids_and_kinds():
    t = Tape()
    with pytest.raises(TapeError):
        t.record("add", [0, 1])
    x = t.input(1.0)
    with pytest.raises(TapeError):
        t.record("cosh", [x])


def test_inputs_reference_earlier_nodes():
    t = Tape()
    x = t.input(np.ones((3, 2)))
    w = t.parameter(np.ones((4, 2)))
    y = t.swish(t.matvec(w, x))
    input_jacobian(t, [t.column(y, 0)], x)
    for nid, node in enumerate(t.nodes):
        assert all(i < nid for i in node.input_ids)
        assert node.adjoint.shape == node.value.shape


def test_jacobian_of_linear_layer_is_its_matrix():
    t = Tape()
    x = t.input(np.array([[0.3, -0.7]]))
    w = t.parameter(np.array([[1.0, 2.0], [3.0, 4.0]]))
    y = t.matvec(w, x)
    outs = [t.column(y, 0), t.column(y, 1)]
    jac = input_jacobian(t, outs, x)
    vals = [[t.value(j).item() for j in row] for row in jac]
    assert vals == [[1.0, 2.0], [3.0, 4.0]]


def test_jacobian_of_swish_at_one():
    t = Tape()
    x = t.input(np.array([[1.0]]))
    y = t.column(t.swish(x), 0)
    (row,) = input_jacobian(t, [y], x)
    assert t.value(row[0]).item() == pytest.approx(0.927671, abs=1e-6)
    assert t.value(row[0]).item() == pytest.approx(sig(1) + sig(1) * (1 - sig(1)), rel=1e-14)


def test_jacobian_of_constant_is_zero():
    t = Tape()
    x = t.input(np.ones((4, 2)))
    c = t.constant(np.full(4, 3.0))
    (row,) = input_jacobian(t, [c], x)
    assert all(np.all(t.value(j) == 0) for j in row)


def test_jacobian_requires_input_leaf():
    t = Tape()
    x = t.input(np.ones((2, 2)))
    y = t.swish(x)
    with pytest.raises(TapeError):
        input_jacobian(t, [t.column(y, 0)], y)


def test_reverse_square():
    t = Tape()
    th = t.parameter(3.0)
    g = reverse_sweep(t, t.square(th))
    assert g[th] == 6.0
    assert t.sweep_count == 1


def test_reverse_swish_chain():
    t = Tape()
    w = t.parameter(1.0)
    x = t.input(2.0)
    g = reverse_sweep(t, t.swish(t.mul(w, x)))
    assert g[w] == pytest.approx(2.181568, abs=1e-6)


def test_reverse_unreachable_parameter_is_zero():
    t = Tape()
    a, b = t.parameter(2.0), t.parameter(5.0)
    g = reverse_sweep(t, t.square(a))
    assert g[b] == 0.0


def test_reverse_needs_scalar_root():
    t = Tape()
    a = t.parameter(np.ones(3))
    with pytest.raises(TapeError):
        reverse_sweep(t, t.square(a))


def test_fd_oracle_quadratic_and_sine():
    assert fd_gradient_oracle(lambda p: float(p[0] ** 2), np.array([3.0]), 1e-4)[0] == pytest.approx(6.0, abs=1e-7)
    step = 1e-3
    assert fd_gradient_oracle(lambda p: math.sin(p[0]), np.array([0.0]), step)[0] == pytest.approx(1.0, abs=step**2)


def _random_mlp_loss(rng, depth_two=False):
    """Loss built from first-order input derivatives of a small swish MLP."""
    pts = rng.uniform(-1, 1, size=(5, 2))
    shapes = [(3, 2), (3,), (3, 3), (3,), (2, 3), (2,)]
    theta = np.concatenate([rng.normal(size=int(np.prod(s))) for s in shapes])

    def build(vec):
        t = Tape()
        x = t.input(pts)
        pos, ids = 0, []
        for s in shapes:
            n = int(np.prod(s))
            ids.append(t.parameter(vec[pos:pos + n].reshape(s)))
            pos += n
        h = x
        for layer in range(3):
            h = t.add(t.matvec(ids[2 * layer], h), ids[2 * layer + 1])
            if layer < 2:
                h = t.swish(h)
        u, ux = t.column(h, 0), t.column(h, 1)
        (du,) = input_jacobian(t, [u], x, [0, 1])
        (dux,) = input_jacobian(t, [ux], x, [0])
        terms = [t.sub(ux, du[0]), t.add(dux[0], t.mul(u, du[1]))]
        if depth_two:
            (d2,) = input_jacobian(t, [du[0]], x, [0])
            terms.append(d2[0])
        loss = None
        for r in terms:
            m = t.mean(t.square(r))
            loss = m if loss is None else t.add(loss, m)
        return t, loss, ids

    return theta, build


@pytest.mark.parametrize("depth_two", [False, True])
def test_reverse_matches_finite_differences(depth_two):
    rng = np.random.default_rng(11)
    for _ in range(5):
        theta, build = _random_mlp_loss(rng, depth_two)
        t, loss, ids = build(theta)
        g = reverse_sweep(t, loss)
        ad = np.concatenate([g[i].reshape(-1) for i in ids])
        fd = fd_gradient_oracle(lambda v: float(build(v)[0].value(build(v)[1])), theta, 1e-5)
        assert np.max(np.abs(ad - fd) / np.maximum(np.abs(fd), 1e-3)) < 1e-5
        assert t.max_derivative_depth == (2 if depth_two else 1)


def test_depth_limit_enforced():
    t = Tape(max_depth=1)
    x = t.input(np.ones((3, 1)))
    w = t.parameter(np.ones((1, 1)))
    u = t.column(t.swish(t.matvec(w, x)), 0)
    (du,) = input_jacobian(t, [u], x)
    with pytest.raises(DepthError):
        input_jacobian(t, [du[0]], x)


def test_node_count_deterministic():
    def count():
        t = Tape()
        x = t.input(np.ones((4, 2)))
        w = t.parameter(np.ones((3, 2)))
        y = t.column(t.swish(t.matvec(w, x)), 1)
        input_jacobian(t, [y], x)
        return len(t)

    assert count() == count()


def test_reduced_precision_rounds_values():
    t = Tape("float16")
    w = t.parameter(np.array([1.0 + 2.0**-12]))
    assert t.value(w)[0] == 1.0
    x = t.input(np.array([[1.0 + 2.0**-12]]))
    assert t.value(x)[0, 0] == 1.0 + 2.0**-12
    mv = t.matvec(t.parameter(np.eye(1)), x)
    assert t.value(mv)[0, 0] == 1.0
    sq = t.square(t.scale(x, 300.0))
    assert t[sq].dtype is np.float32 and np.isfinite(t.value(sq)).all()
    assert t[t.add(mv, w)].dtype is np.float16
    with pytest.raises(ValueError):
        Tape("bfloat16")


def test_dump_tape(tmp_path):
    t = Tape()
    x = t.input(np.ones((2, 2)))
    t.sum(t.square(x))
    dump_tape(t, tmp_path / "tape.txt")
    lines = (tmp_path / "tape.txt").read_text().splitlines()
    assert lines[0] == "0 input - 2x2 0"
    assert lines[2] == "2 sum 1 scalar 0"


@settings(max_examples=30, deadline=None)
@given(st.floats(-30, 30), st.floats(-3, 3))
def test_sqrt_div_sigmoid_tangents_match_fd(z, w):
    # d/dz of w * sigmoid(z) / sqrt(1 + z^2)
    def f(zz):
        return w * sig(zz) / math.sqrt(1 + zz * zz)

    t = Tape()
    x = t.input(np.array([[z]]))
    c = t.column(x, 0)
    y = t.div(t.scale(t.sigmoid(c), w), t.sqrt(t.add(t.constant(1.0), t.square(c))))
    (row,) = input_jacobian(t, [y], x)
    h = 1e-6
    fd = (f(z + h) - f(z - h)) / (2 * h)
    assert t.value(row[0]).item() == pytest.approx(fd, rel=1e-5, abs=1e-9)
