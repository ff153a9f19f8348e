"""Approximate distance functions built from R-functions, and the exact
Dirichlet ansatz ``u_sol = g + phi * u_net``.

Every domain exposes the same function twice: ``evaluate`` on plain arrays
and ``on_tape`` recorded from primitive ops, so that derivatives of ``phi``
with respect to the input points are available to the autodiff engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .autodiff import ShapeError, Tape


def r_conjunction(phi1, phi2):
    """R0 conjunction: zero wherever either argument is zero (for phi >= 0)."""
    phi1 = np.asarray(phi1, dtype=np.float64)
    phi2 = np.asarray(phi2, dtype=np.float64)
    return phi1 + phi2 - np.sqrt(phi1 * phi1 + phi2 * phi2)


def r_conjunction_on_tape(tape: Tape, a: int, b: int) -> int:
    norm = tape.sqrt(tape.add(tape.square(a), tape.square(b)))
    return tape.sub(tape.add(a, b), norm)


def _fold(values):
    # Left-associated: R0 is not associative, so the order is part of the contract.
    acc = values[0]
    for v in values[1:]:
        acc = r_conjunction(acc, v)
    return acc


@dataclass(frozen=True)
class BoundaryPiece:
    label: str
    axis: int          # coordinate held fixed on this piece
    value: float       # its value
    lower: np.ndarray  # bounds of the free coordinates (full-length vectors)
    upper: np.ndarray

    @property
    def measure(self) -> float:
        span = np.delete(self.upper - self.lower, self.axis)
        return float(np.prod(span))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        pts = rng.uniform(self.lower, self.upper, size=(n, self.lower.size))
        pts[:, self.axis] = self.value
        return pts


class AdfDomain:
    """Base class; subclasses fill in ``dim``, ``evaluate`` and ``on_tape``."""

    dim: int

    def _check(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if pts.shape[-1] != self.dim:
            raise ShapeError(f"{type(self).__name__} is {self.dim}-D, got points of shape {pts.shape}")
        return pts

    def evaluate(self, points) -> np.ndarray:
        raise NotImplementedError

    def on_tape(self, tape: Tape, x: int) -> int:
        raise NotImplementedError

    def boundary_pieces(self) -> list[BoundaryPiece]:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class HalfPlane(AdfDomain):
    """{x : (x - origin) . n >= 0} with unit inward normal n."""

    def __init__(self, origin, normal):
        self.origin = np.asarray(origin, dtype=np.float64)
        n = np.asarray(normal, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        self.dim = self.origin.size

    def evaluate(self, points):
        pts = self._check(points)
        return (pts - self.origin) @ self.normal

    def on_tape(self, tape, x):
        acc = None
        for j in range(self.dim):
            if self.normal[j] == 0.0:
                continue
            term = tape.scale(tape.sub(tape.column(x, j), tape.constant(self.origin[j])), self.normal[j])
            acc = term if acc is None else tape.add(acc, term)
        return acc


class Box(AdfDomain):
    """Axis-aligned rectangle (2-D) or box (3-D)."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ValueError(f"invalid box bounds {lower} .. {upper}")
        self.dim = self.lower.size

    def _distances(self, pts):
        out = []
        for j in range(self.dim):
            out.append(pts[:, j] - self.lower[j])
            out.append(self.upper[j] - pts[:, j])
        return out

    def evaluate(self, points):
        return _fold(self._distances(self._check(points)))

    def on_tape(self, tape, x):
        dists = []
        for j in range(self.dim):
            col = tape.column(x, j)
            dists.append(tape.sub(col, tape.constant(self.lower[j])))
            dists.append(tape.sub(tape.constant(self.upper[j]), col))
        acc = dists[0]
        for d in dists[1:]:
            acc = r_conjunction_on_tape(tape, acc, d)
        return acc

    def boundary_pieces(self, prefix: str = ""):
        names = {0: ("left", "right"), 1: ("bottom", "top"), 2: ("back", "front")}
        pieces = []
        for j in range(self.dim):
            for side, val in zip(names[j], (self.lower[j], self.upper[j])):
                pieces.append(BoundaryPiece(prefix + side, j, float(val), self.lower, self.upper))
        return pieces

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def corners(self) -> np.ndarray:
        grids = np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lower, self.upper)], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)


def Rectangle(x_min, x_max, y_min, y_max) -> Box:
    return Box((x_min, y_min), (x_max, y_max))


class ChannelWithSlice(AdfDomain):
    """2-D channel with a rectangular obstacle of width 2r, height h centred at (a, b).

    ``phi`` is the R0 conjunction of the channel ADF with the negated obstacle
    ADF, so it is negative inside the removed material. The obstacle may be
    given per point through ``geom`` (arrays for any of a, b, r, h), which is
    how geometry parameters enter a parameterized run.
    """

    GEOMETRY_KEYS = ("a", "b", "r", "h")

    def __init__(self, channel: Box, a: float, b: float, r: float, h: float):
        if channel.dim != 2:
            raise ValueError("channel must be 2-D")
        self.channel = channel
        self.a, self.b, self.r, self.h = float(a), float(b), float(r), float(h)
        lo, hi = self.obstacle_bounds()
        if not self.fits(lo, hi):
            raise ValueError("obstacle must lie strictly inside the channel")
        self.obstacle = Box(lo, hi)
        self.dim = 2

    def fits(self, lo, hi) -> bool:
        return bool(np.all(lo > self.channel.lower) and np.all(hi < self.channel.upper))

    def obstacle_bounds(self, geom=None):
        g = {k: getattr(self, k) for k in self.GEOMETRY_KEYS}
        if geom:
            g.update({k: np.asarray(v, dtype=np.float64) for k, v in geom.items() if k in g})
        lo = (g["a"] - g["r"], g["b"] - g["h"] / 2)
        hi = (g["a"] + g["r"], g["b"] + g["h"] / 2)
        return lo, hi

    def evaluate(self, points, geom=None):
        pts = self._check(points)
        lo, hi = self.obstacle_bounds(geom)
        inner = _fold([pts[:, 0] - lo[0], hi[0] - pts[:, 0], pts[:, 1] - lo[1], hi[1] - pts[:, 1]])
        return r_conjunction(self.channel.evaluate(pts), -inner)

    def on_tape(self, tape, x, geom=None):
        outer = self.channel.on_tape(tape, x)
        lo, hi = self.obstacle_bounds(geom)
        cx, cy = tape.column(x, 0), tape.column(x, 1)
        dists = [
            tape.sub(cx, tape.constant(lo[0])),
            tape.sub(tape.constant(hi[0]), cx),
            tape.sub(cy, tape.constant(lo[1])),
            tape.sub(tape.constant(hi[1]), cy),
        ]
        inner = dists[0]
        for d in dists[1:]:
            inner = r_conjunction_on_tape(tape, inner, d)
        return r_conjunction_on_tape(tape, outer, tape.scale(inner, -1.0))

    def boundary_pieces(self):
        outer = self.channel.boundary_pieces()
        rename = {"left": "inlet", "right": "outlet", "bottom": "wall_bottom", "top": "wall_top"}
        outer = [BoundaryPiece(rename[p.label], p.axis, p.value, p.lower, p.upper) for p in outer]
        return outer + self.obstacle.boundary_pieces(prefix="obstacle_")

    def bounding_box(self):
        return self.channel.bounding_box()


BoundaryValue = Union[float, Callable[[Tape, int], int]]


@dataclass
class DirichletAnsatz:
    """Composed solution ``g + phi * u_net``; ``g`` is a constant or a tape builder."""

    domain: AdfDomain
    g: BoundaryValue = 0.0

    def g_node(self, tape: Tape, x: int) -> int | None:
        if callable(self.g):
            return self.g(tape, x)
        if self.g == 0.0:
            return None
        return tape.constant(float(self.g))


def apply_ansatz(tape: Tape, ansatz: DirichletAnsatz, phi: int, u_net: int, x: int | None = None) -> int:
    """Record ``u_sol = g + phi * u_net`` and return its node id."""
    if callable(ansatz.g) and x is None:
        raise ValueError("a position-dependent boundary value needs the input node")
    g = ansatz.g_node(tape, x)
    prod = tape.mul(phi, u_net)
    return prod if g is None else tape.add(g, prod)


def grid_probe(domain: AdfDomain, n: int = 101) -> np.ndarray:
    """``phi`` on a regular n x n grid over the bounding box, rows (x, y, phi)."""
    lo, hi = domain.bounding_box()
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    return np.column_stack([pts, domain.evaluate(pts)])
