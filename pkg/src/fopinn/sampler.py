"""Reproducible collocation sampling.

Every random stream is a Philox (counter-based) generator keyed by
``(seed, iteration, stream_id)``, so a batch depends only on those numbers and
never on how many draws happened before it. Runs that share a seed therefore
see identical points, whatever formulation they train.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .geometry import AdfDomain, BoundaryPiece, ChannelWithSlice

PARAM_NAMES = ("a", "b", "r", "h", "nu", "rho", "v_in")

INTERIOR, BOUNDARY, PARAMS_INTERIOR, PARAMS_BOUNDARY = range(4)


class SamplingError(RuntimeError):
    pass


def stream(seed: int, iteration: int, stream_id: int) -> np.random.Generator:
    key = np.random.SeedSequence([seed, iteration, stream_id]).generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ParamRanges:
    """Closed intervals for a subset of the system parameters, in canonical order."""

    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, (lo, hi) in self.ranges.items():
            if name not in PARAM_NAMES:
                raise ValueError(f"unknown parameter {name!r}; expected a subset of {PARAM_NAMES}")
            if lo > hi:
                raise ValueError(f"range for {name!r} has lower > upper")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n in PARAM_NAMES if n in self.ranges)

    def __len__(self) -> int:
        return len(self.ranges)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.ranges[n][0] for n in self.names], dtype=np.float64)
        hi = np.array([self.ranges[n][1] for n in self.names], dtype=np.float64)
        return lo, hi

    def check_geometry(self, domain: AdfDomain) -> None:
        """Every corner of the geometric parameter box must keep the obstacle inside."""
        geo = [n for n in self.names if n in ChannelWithSlice.GEOMETRY_KEYS]
        if not geo:
            return
        if not isinstance(domain, ChannelWithSlice):
            raise ValueError("geometric parameter ranges need a channel_with_slice domain")
        for corner in product(*[self.ranges[n] for n in geo]):
            lo, hi = domain.obstacle_bounds(dict(zip(geo, corner)))
            if not domain.fits(np.array(lo), np.array(hi)):
                raise ValueError(f"obstacle leaves the channel at parameter corner {dict(zip(geo, corner))}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if not self.ranges:
            return np.empty((n, 0))
        lo, hi = self.bounds()
        return rng.uniform(lo, hi, size=(n, lo.size))

    def geometry(self, values: np.ndarray) -> dict[str, np.ndarray]:
        return {n: values[:, i] for i, n in enumerate(self.names) if n in ChannelWithSlice.GEOMETRY_KEYS}


@dataclass
class CollocationBatch:
    interior_points: np.ndarray
    boundary_points: np.ndarray
    boundary_labels: np.ndarray
    interior_params: np.ndarray
    boundary_params: np.ndarray
    param_names: tuple[str, ...] = ()

    @property
    def param_sample(self) -> np.ndarray:
        return self.interior_params

    def interior_inputs(self) -> np.ndarray:
        return np.hstack([self.interior_points, self.interior_params])

    def boundary_inputs(self) -> np.ndarray:
        return np.hstack([self.boundary_points, self.boundary_params])

    def param_columns(self, which: str = "interior") -> dict[str, np.ndarray]:
        vals = self.interior_params if which == "interior" else self.boundary_params
        return {n: vals[:, i] for i, n in enumerate(self.param_names)}


def _piece_sample(piece: BoundaryPiece, rng, n, geom_piece=None):
    if geom_piece is None:
        return piece.sample(rng, n)
    # Per-point obstacle: geom_piece = (axis value, lower, upper) arrays per point.
    value, lower, upper = geom_piece
    u = rng.uniform(size=(n, lower.shape[1]))
    pts = lower + u * (upper - lower)
    pts[:, piece.axis] = value
    return pts


def sample_batch(
    n_interior: int,
    n_boundary: int,
    domain: AdfDomain,
    ranges: ParamRanges | None,
    seed: int,
    iteration: int,
) -> CollocationBatch:
    """Uniform interior points (rejection on phi > 0), boundary points spread
    over the pieces in proportion to their measure, parameters uniform."""
    if n_interior <= 0 or n_boundary < 0:
        raise SamplingError("point counts must be positive")
    ranges = ranges or ParamRanges()
    ranges.check_geometry(domain)

    interior_params = ranges.sample(stream(seed, iteration, PARAMS_INTERIOR), n_interior)
    geom_in = ranges.geometry(interior_params)
    rng = stream(seed, iteration, INTERIOR)
    lo, hi = domain.bounding_box()
    phi_kwargs = {"geom": geom_in} if geom_in else {}
    pts = np.empty((n_interior, domain.dim))
    filled = np.zeros(n_interior, dtype=bool)
    first = True
    while not filled.all():
        todo = np.flatnonzero(~filled)
        cand = rng.uniform(lo, hi, size=(todo.size, domain.dim))
        kw = {"geom": {k: v[todo] for k, v in geom_in.items()}} if phi_kwargs else {}
        ok = domain.evaluate(cand, **kw) > 0
        if first and ok.mean() < 0.01:
            raise SamplingError(f"rejection acceptance rate {ok.mean():.4f} < 1%: degenerate geometry")
        first = False
        pts[todo[ok]] = cand[ok]
        filled[todo[ok]] = True

    boundary_params = ranges.sample(stream(seed, iteration, PARAMS_BOUNDARY), n_boundary)
    rng = stream(seed, iteration, BOUNDARY)
    pieces = domain.boundary_pieces()
    measures = np.array([p.measure for p in pieces])
    counts = rng.multinomial(n_boundary, measures / measures.sum())
    geom_b = ranges.geometry(boundary_params)
    bpts, labels = [], []
    start = 0
    for piece, count in zip(pieces, counts):
        sl = slice(start, start + count)
        start += count
        gp = None
        if geom_b and piece.label.startswith("obstacle_"):
            olo, ohi = domain.obstacle_bounds({k: v[sl] for k, v in geom_b.items()})
            olo = np.column_stack(np.broadcast_arrays(*olo))
            ohi = np.column_stack(np.broadcast_arrays(*ohi))
            side_hi = piece.label.endswith(("right", "top"))
            value = (ohi if side_hi else olo)[:, piece.axis]
            gp = (value, olo, ohi)
        bpts.append(_piece_sample(piece, rng, count, gp))
        labels.extend([piece.label] * count)
    bpts = np.vstack(bpts) if bpts else np.empty((0, domain.dim))
    return CollocationBatch(
        pts, bpts, np.array(labels, dtype=object), interior_params, boundary_params, ranges.names
    )
