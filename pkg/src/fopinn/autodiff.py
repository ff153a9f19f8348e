"""Tape-based reverse-mode automatic differentiation over batched arrays.

Every node stores a dense ``numpy`` value; batches of collocation points
travel through the graph as a leading axis. Input derivatives are obtained
by forward (tangent) propagation that is itself *recorded on the tape*, so a
single reverse sweep from a scalar loss differentiates through them with
respect to the parameters.

Each node carries a ``derivative_depth``: the number of nested input
differentiations needed to construct it. Plain forward nodes have depth 0,
tangents of depth-0 nodes have depth 1, and tangents of tangents depth 2.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels

LEAF_KINDS = ("parameter", "input", "broadcast-constant")
OP_KINDS = LEAF_KINDS + (
    "add",
    "sub",
    "mul",
    "div",
    "matvec",
    "swish",
    "sigmoid",
    "square",
    "sqrt",
    "sum",
    "scale",
    "column",
)

PRECISIONS = {"float64": None, "float32": np.float32, "float16": np.float16}
# Under reduced precision these ops run in float32 (range-sensitive: roots,
# quotients, squares and reductions); matvec runs in the low type and every
# other op in the widest type among its operands.
WIDE_OPS = frozenset({"sqrt", "div", "square", "sum"})
_RANK = {np.float16: 0, np.float32: 1}


class ShapeError(ValueError):
    """Operands of a recorded op have incompatible shapes."""


class TapeError(RuntimeError):
    """Misuse of the tape (bad node id, non-scalar root, ...)."""


class DepthError(TapeError):
    """A node would exceed the tape's permitted derivative depth."""


@dataclass(eq=False)
class GraphNode:
    op_kind: str
    input_ids: tuple[int, ...]
    value: np.ndarray
    derivative_depth: int = 0
    attr: float | int | None = None
    requires_grad: bool = False
    dtype: type | None = None
    _adjoint: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def adjoint(self) -> np.ndarray:
        if self._adjoint is None:
            return np.zeros_like(self.value)
        return self._adjoint


def _broadcast_ok(a: tuple, b: tuple) -> bool:
    # Equal shapes, a scalar operand, or one shape a trailing suffix of the other
    # (bias rows onto a batch, per-point columns are *not* broadcast onto matrices).
    if a == b or a == () or b == ():
        return True
    if len(a) < len(b):
        a, b = b, a
    return a[len(a) - len(b):] == b


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


class Tape:
    """Append-only computation graph.

    Parameters
    ----------
    precision : {"float64", "float32", "float16"}
        Emulated arithmetic type. Values, and adjoints during a sweep, are
        rounded at every op boundary to the node's type: parameters and
        matvec results use ``precision``; inputs, constants and ``WIDE_OPS``
        use float32; the rest inherit the widest operand type. Storage stays
        64-bit.
    max_depth : int
        Largest derivative depth the tape accepts. First-order training uses
        1, which makes any nested input differentiation an error.
    """

    def __init__(self, precision: str = "float64", max_depth: int = 2):
        if precision not in PRECISIONS:
            raise ValueError(f"unknown precision {precision!r}; expected one of {sorted(PRECISIONS)}")
        self.precision = precision
        self.max_depth = max_depth
        self._dtype = PRECISIONS[precision]
        self.nodes: list[GraphNode] = []
        self.parameter_node_ids: list[int] = []
        self.input_node_ids: list[int] = []
        self.sweep_count = 0
        self._level = 0
        self._tangents: dict[tuple[int, int, int], int | None] = {}
        self._swish_prime: dict[int, int] = {}
        self._consts: dict[float, int] = {}
        self.param_cache: dict[int, list[int]] = {}

    # -- bookkeeping -----------------------------------------------------

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> GraphNode:
        return self.nodes[node_id]

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value

    @property
    def max_derivative_depth(self) -> int:
        return max((n.derivative_depth for n in self.nodes), default=0)

    @staticmethod
    def _round(x: np.ndarray, dtype) -> np.ndarray:
        if dtype is None:
            return x
        with np.errstate(over="ignore"):
            return x.astype(dtype).astype(np.float64)

    def _op_dtype(self, op_kind: str, inputs: Sequence[int]):
        if self._dtype is None:
            return None
        if op_kind == "matvec":
            return self._dtype
        if op_kind in WIDE_OPS:
            return np.float32
        return max((self.nodes[i].dtype for i in inputs), key=_RANK.__getitem__)

    @contextmanager
    def _at_level(self, level: int):
        saved = self._level
        self._level = max(saved, level)
        try:
            yield
        finally:
            self._level = saved

    def _append(self, op_kind, input_ids, value, attr=None, requires_grad=False, dtype=None) -> int:
        depth = self._level
        for i in input_ids:
            depth = max(depth, self.nodes[i].derivative_depth)
        if depth > self.max_depth:
            raise DepthError(
                f"{op_kind}: derivative depth {depth} exceeds this tape's limit of {self.max_depth}"
            )
        self.nodes.append(
            GraphNode(op_kind, tuple(input_ids), value, depth, attr, requires_grad, dtype)
        )
        return len(self.nodes) - 1

    # -- leaves ----------------------------------------------------------

    def parameter(self, value) -> int:
        # reduced precision works on a rounded copy; the caller keeps the 64-bit master
        value = self._round(np.array(value, dtype=np.float64), self._dtype)
        nid = self._append("parameter", (), value, requires_grad=True, dtype=self._dtype)
        self.parameter_node_ids.append(nid)
        return nid

    def input(self, value) -> int:
        wide = None if self._dtype is None else np.float32
        nid = self._append("input", (), self._round(np.array(value, dtype=np.float64), wide), dtype=wide)
        self.input_node_ids.append(nid)
        return nid

    def constant(self, value) -> int:
        wide = None if self._dtype is None else np.float32
        value = self._round(np.asarray(value, dtype=np.float64), wide)
        if value.ndim == 0:
            key = float(value)
            if key in self._consts:
                return self._consts[key]
            # shared scalar constants stay at depth 0 whatever pass created them
            saved, self._level = self._level, 0
            nid = self._append("broadcast-constant", (), value, dtype=wide)
            self._level = saved
            self._consts[key] = nid
            return nid
        return self._append("broadcast-constant", (), value.copy(), dtype=wide)

    def is_leaf(self, node_id: int) -> bool:
        return self.nodes[node_id].op_kind in LEAF_KINDS

    # -- recording -------------------------------------------------------

    def record(self, op_kind: str, inputs: Sequence[int], attr=None) -> int:
        """Append an op node, evaluating its value eagerly."""
        if op_kind in LEAF_KINDS or op_kind not in OP_KINDS:
            raise TapeError(f"cannot record op_kind {op_kind!r}")
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise TapeError(f"{op_kind}: node id {i} is not on the tape")
        vals = [self.nodes[i].value for i in inputs]
        shapes = [v.shape for v in vals]

        if op_kind in ("add", "sub", "mul", "div"):
            if len(inputs) != 2 or not _broadcast_ok(*shapes):
                raise ShapeError(f"{op_kind}: incompatible operand shapes {shapes}")
            a, b = vals
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                out = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[op_kind](a, b)
        elif op_kind == "matvec":
            if len(inputs) != 2:
                raise ShapeError(f"matvec: expected 2 operands, got {len(inputs)}")
            w, v = vals
            if w.ndim != 2 or v.ndim not in (1, 2) or v.shape[-1] != w.shape[1]:
                raise ShapeError(f"matvec: matrix {w.shape} incompatible with vector {v.shape}")
            out = v @ w.T
        elif op_kind in ("swish", "sigmoid", "square", "sqrt", "sum", "scale", "column"):
            if len(inputs) != 1:
                raise ShapeError(f"{op_kind}: expected 1 operand, got {len(inputs)}")
            (z,) = vals
            if op_kind == "swish":
                out = kernels.swish(z)
            elif op_kind == "sigmoid":
                out = kernels.sigmoid(z)
            elif op_kind == "square":
                out = z * z
            elif op_kind == "sqrt":
                out = np.sqrt(z)
            elif op_kind == "sum":
                out = np.asarray(z.sum())
            elif op_kind == "scale":
                out = z * float(attr)
            else:
                if z.ndim != 2 or not 0 <= int(attr) < z.shape[1]:
                    raise ShapeError(f"column: cannot take column {attr} of shape {z.shape}")
                out = np.ascontiguousarray(z[:, int(attr)])
        dtype = self._op_dtype(op_kind, inputs)
        out = self._round(np.asarray(out, dtype=np.float64), dtype)
        rg = any(self.nodes[i].requires_grad for i in inputs)
        return self._append(op_kind, inputs, out, attr, rg, dtype)

    # Convenience wrappers keep call sites readable.
    def add(self, a, b): return self.record("add", (a, b))
    def sub(self, a, b): return self.record("sub", (a, b))
    def mul(self, a, b): return self.record("mul", (a, b))
    def div(self, a, b): return self.record("div", (a, b))
    def matvec(self, w, v): return self.record("matvec", (w, v))
    def swish(self, z): return self.record("swish", (z,))
    def sigmoid(self, z): return self.record("sigmoid", (z,))
    def square(self, z): return self.record("square", (z,))
    def sqrt(self, z): return self.record("sqrt", (z,))
    def sum(self, z): return self.record("sum", (z,))
    def scale(self, z, c): return self.record("scale", (z,), float(c))
    def column(self, z, j): return self.record("column", (z,), int(j))

    def mean(self, z: int) -> int:
        return self.scale(self.sum(z), 1.0 / max(self.nodes[z].value.size, 1))

    # -- forward-mode tangents recorded as nodes --------------------------

    def _swish_derivative(self, z: int) -> int:
        # swish'(z) = s + z*s*(1 - s), s = sigmoid(z); cached per z node
        if z not in self._swish_prime:
            s = self.sigmoid(z)
            one_minus = self.sub(self.constant(1.0), s)
            zs = self.mul(z, s)
            self._swish_prime[z] = self.add(s, self.mul(zs, one_minus))
        return self._swish_prime[z]

    def _tangent_rule(self, nid: int, t: list[int | None]) -> int | None:
        node = self.nodes[nid]
        op = node.op_kind
        if op in ("add", "sub"):
            ta, tb = t
            if ta is None and tb is None:
                return None
            if tb is None:
                return ta
            if ta is None:
                return tb if op == "add" else self.scale(tb, -1.0)
            return self.record(op, (ta, tb))
        if op == "mul":
            a, b = node.input_ids
            ta, tb = t
            parts = []
            if ta is not None:
                parts.append(self.mul(ta, b))
            if tb is not None:
                parts.append(self.mul(a, tb))
            if not parts:
                return None
            return parts[0] if len(parts) == 1 else self.add(parts[0], parts[1])
        if op == "div":
            _, b = node.input_ids
            ta, tb = t
            if ta is None and tb is None:
                return None
            if tb is None:
                return self.div(ta, b)
            num = self.mul(nid, tb)
            num = self.scale(num, -1.0) if ta is None else self.sub(ta, num)
            return self.div(num, b)
        if op == "matvec":
            w, v = node.input_ids
            tw, tv = t
            parts = []
            if tw is not None:
                parts.append(self.matvec(tw, v))
            if tv is not None:
                parts.append(self.matvec(w, tv))
            if not parts:
                return None
            return parts[0] if len(parts) == 1 else self.add(parts[0], parts[1])
        (tz,) = t
        if tz is None:
            return None
        (z,) = node.input_ids
        if op == "swish":
            return self.mul(self._swish_derivative(z), tz)
        if op == "sigmoid":
            one_minus = self.sub(self.constant(1.0), nid)
            return self.mul(self.mul(nid, one_minus), tz)
        if op == "square":
            return self.scale(self.mul(z, tz), 2.0)
        if op == "sqrt":
            return self.div(tz, self.scale(nid, 2.0))
        if op == "sum":
            return self.sum(tz)
        if op == "scale":
            return self.scale(tz, node.attr)
        if op == "column":
            return self.column(tz, node.attr)
        raise TapeError(f"no tangent rule for {op!r}")

    def tangent(self, node_id: int, input_id: int, coord: int) -> int | None:
        """Node holding d(node)/d(input[:, coord]) pointwise, or None if zero."""
        key = (node_id, input_id, coord)
        if key in self._tangents:
            return self._tangents[key]
        # Ancestors of node_id that depend on input_id, visited in id order.
        needed = self._dependent_ancestors(node_id, input_id)
        for nid in sorted(needed):
            k = (nid, input_id, coord)
            if k in self._tangents:
                continue
            node = self.nodes[nid]
            with self._at_level(node.derivative_depth + 1):
                if nid == input_id:
                    seed = np.zeros_like(node.value)
                    seed[..., coord] = 1.0
                    res = self.constant(seed)
                else:
                    ts = [
                        self._tangents.get((i, input_id, coord)) if i in needed else None
                        for i in node.input_ids
                    ]
                    res = self._tangent_rule(nid, ts)
            self._tangents[k] = res
        return self._tangents.get(key)

    def _dependent_ancestors(self, node_id: int, input_id: int) -> set[int]:
        ancestors: set[int] = set()
        stack = [node_id]
        while stack:
            n = stack.pop()
            if n in ancestors or n < input_id:
                continue
            ancestors.add(n)
            stack.extend(self.nodes[n].input_ids)
        # Forward pass keeps only those reachable from input_id.
        dependent = {input_id} if input_id in ancestors else set()
        for n in sorted(ancestors):
            if n != input_id and any(i in dependent for i in self.nodes[n].input_ids):
                dependent.add(n)
        return dependent


def record(tape: Tape, op_kind: str, inputs: Sequence[int], attr=None) -> int:
    return tape.record(op_kind, inputs, attr)


def input_jacobian(
    tape: Tape,
    output_node_ids: Sequence[int],
    input_node_id: int,
    coords: Iterable[int] | None = None,
) -> list[list[int]]:
    """Record d(output_i)/d(input[:, j]) as differentiable nodes.

    Returns ``jac[i][j]`` node ids (``j`` indexing ``coords``). Rows of a batch
    are treated as independent points, so each entry has the shape of its
    output. Outputs that do not depend on the input get a zero-valued node.
    """
    node = tape[input_node_id]
    if node.op_kind != "input":
        raise TapeError(f"input_jacobian: node {input_node_id} ({node.op_kind}) is not an input leaf")
    if coords is None:
        coords = range(node.value.shape[-1] if node.value.ndim else 1)
    coords = list(coords)
    jac = []
    for out in output_node_ids:
        row = []
        for j in coords:
            t = tape.tangent(out, input_node_id, j)
            if t is None:
                t = tape.constant(np.zeros_like(tape[out].value))
            row.append(t)
        jac.append(row)
    return jac


def reverse_sweep(tape: Tape, root_node_id: int, seed: float = 1.0) -> dict[int, np.ndarray]:
    """Back-propagate from a scalar root; return adjoints of parameter nodes.

    ``seed`` is the adjoint placed on the root (a loss scale, for instance).
    Adjoints of all nodes are reset first. Nodes that cannot influence a
    parameter are skipped entirely.
    """
    root = tape[root_node_id]
    if root.value.size != 1 or root.value.ndim > 1:
        raise TapeError(f"reverse_sweep: root must be scalar, got shape {root.value.shape}")
    for n in tape.nodes:
        n._adjoint = None
    root._adjoint = np.full_like(root.value, seed)
    nodes = tape.nodes

    def acc(i: int, g: np.ndarray) -> None:
        target = nodes[i]
        if not target.requires_grad or target.op_kind == "input":
            return
        g = _unbroadcast(g, target.value.shape)
        if target._adjoint is None:
            # adjoints are never updated in place, so aliasing g is safe
            target._adjoint = g
        else:
            target._adjoint = target._adjoint + g

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for nid in range(root_node_id, -1, -1):
            node = nodes[nid]
            if node._adjoint is None or node.op_kind in LEAF_KINDS:
                continue
            g = tape._round(node._adjoint, node.dtype)
            node._adjoint = g
            op = node.op_kind
            ins = node.input_ids
            if op == "add":
                acc(ins[0], g)
                acc(ins[1], g)
            elif op == "sub":
                acc(ins[0], g)
                acc(ins[1], -g)
            elif op == "mul":
                a, b = nodes[ins[0]].value, nodes[ins[1]].value
                acc(ins[0], g * b)
                acc(ins[1], g * a)
            elif op == "div":
                b = nodes[ins[1]].value
                acc(ins[0], g / b)
                acc(ins[1], -g * node.value / b)
            elif op == "matvec":
                w, v = nodes[ins[0]].value, nodes[ins[1]].value
                if nodes[ins[0]].requires_grad:
                    acc(ins[0], np.outer(g, v) if v.ndim == 1 else g.T @ v)
                acc(ins[1], g @ w)
            elif op == "swish":
                acc(ins[0], g * kernels.swish_derivative(nodes[ins[0]].value))
            elif op == "sigmoid":
                s = node.value
                acc(ins[0], g * s * (1.0 - s))
            elif op == "square":
                acc(ins[0], 2.0 * g * nodes[ins[0]].value)
            elif op == "sqrt":
                acc(ins[0], g / (2.0 * node.value))
            elif op == "sum":
                acc(ins[0], np.broadcast_to(g, nodes[ins[0]].value.shape))
            elif op == "scale":
                acc(ins[0], g * node.attr)
            elif op == "column":
                src = nodes[ins[0]]
                if src.requires_grad:
                    full = np.zeros_like(src.value)
                    full[:, node.attr] = g
                    acc(ins[0], full)
            else:  # pragma: no cover - guarded by record()
                raise TapeError(f"no adjoint rule for {op!r}")
    tape.sweep_count += 1
    return {pid: nodes[pid].adjoint for pid in tape.parameter_node_ids}


def fd_gradient_oracle(
    loss_fn: Callable[[np.ndarray], float], params: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central finite differences of ``loss_fn`` at ``params`` (flat vector)."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.empty_like(params)
    work = params.copy()
    flat = work.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = loss_fn(work)
        flat[i] = orig - step
        down = loss_fn(work)
        flat[i] = orig
        grad.reshape(-1)[i] = (up - down) / (2.0 * step)
    return grad


def dump_tape(tape: Tape, path) -> None:
    """Write one line per node: ``id op_kind inputs value_shape derivative_depth``."""
    with open(path, "w") as fh:
        for nid, n in enumerate(tape.nodes):
            ins = ",".join(map(str, n.input_ids)) or "-"
            shape = "x".join(map(str, n.value.shape)) or "scalar"
            fh.write(f"{nid} {n.op_kind} {ins} {shape} {n.derivative_depth}\n")
