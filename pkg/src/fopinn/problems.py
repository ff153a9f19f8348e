"""Problem builders: turn a run config into residuals on a tape and a
validation routine against the closed-form oracle."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape
from .config import RunConfig
from .geometry import Box, ChannelWithSlice, DirichletAnsatz, apply_ansatz
from .network import COORD_NAMES, MlpConfig, OutputSchema, ParamVector, evaluate, forward_on_tape
from .oracles import HelmholtzManufactured, TaylorGreenFamily, relative_l2
from .physics import (
    FIRST_ORDER,
    ResidualSet,
    compatibility_residuals,
    default_helmholtz_scales,
    default_ns_scales,
    helmholtz_residual_2nd,
    helmholtz_residual_fo,
    navier_stokes_residuals_2nd,
    navier_stokes_residuals_fo,
    normalize_losses,
)
from .sampler import CollocationBatch, ParamRanges


class Problem:
    name: str
    domain: object
    ranges: ParamRanges

    def __init__(self, config: RunConfig):
        self.config = config
        self.first_order = config.formulation == FIRST_ORDER
        self.exact_bc = config.bc_mode == "exact"

    @property
    def max_depth(self) -> int:
        return 1 if self.first_order else 2

    def mlp_config(self) -> MlpConfig:
        lo, hi = self.input_bounds()
        return MlpConfig(
            input_dim=len(lo),
            hidden_layers=self.config.network.layers,
            hidden_width=self.config.network.width,
            output_schema=self.schema(),
            seed=self.config.network.seed,
            input_lower=tuple(lo),
            input_upper=tuple(hi),
        )

    def input_bounds(self):
        lo, hi = self.domain.bounding_box()
        plo, phi = self.ranges.bounds()
        return np.concatenate([lo, plo]), np.concatenate([hi, phi])

    def new_tape(self) -> Tape:
        return Tape(self.config.trainer.precision, max_depth=self.max_depth)


class HelmholtzProblem(Problem):
    name = "helmholtz"

    def __init__(self, config: RunConfig):
        super().__init__(config)
        ph = config.physics
        self.dims = ph.dims
        self.k = ph.k
        self.oracle = HelmholtzManufactured(ph.k, ph.dims)
        self.domain = Box(np.zeros(self.dims), np.ones(self.dims))
        self.ansatz = DirichletAnsatz(self.domain, 0.0)
        self.ranges = ParamRanges()

    def schema(self) -> OutputSchema:
        return OutputSchema.helmholtz(self.dims, self.first_order)

    def solution(self, tape: Tape, x: int, out: dict[str, int]) -> int:
        if not self.exact_bc:
            return out["u"]
        phi = self.domain.on_tape(tape, x)
        return apply_ansatz(tape, self.ansatz, phi, out["u"], x)

    def residuals(self, tape: Tape, params: ParamVector, mlp: MlpConfig, batch: CollocationBatch) -> ResidualSet:
        rs = ResidualSet()
        pts = batch.interior_points
        x = tape.input(pts)
        out = forward_on_tape(tape, params, mlp, x)
        u = self.solution(tape, x, out)
        f = self.oracle.source(pts)
        if self.first_order:
            outputs = dict(out, u=u)
            rs.add("pde", "helmholtz", helmholtz_residual_fo(tape, outputs, x, self.k, f, self.dims),
                   default_helmholtz_scales(self.k))
            aux = {n: out[n] for n in self.schema().auxiliary_fields}
            coords = {n: COORD_NAMES.index(n[-1]) for n in aux}
            for name, node in compatibility_residuals(tape, u, aux, x, coords).items():
                rs.add("compat", f"compat_{name}", node, 1.0)
        else:
            rs.add("pde", "helmholtz", helmholtz_residual_2nd(tape, u, x, self.k, f, self.dims),
                   default_helmholtz_scales(self.k))
        if not self.exact_bc and batch.boundary_points.shape[0]:
            xb = tape.input(batch.boundary_points)
            outb = forward_on_tape(tape, params, mlp, xb)
            rs.add("bc", "bc_u", outb["u"], self.oracle.field_range())
        return normalize_losses(tape, rs)

    # -- evaluation ----------------------------------------------------------

    def grid(self, n: int = 101) -> np.ndarray:
        axes = [np.linspace(0.0, 1.0, n)] * self.dims
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def predict(self, params: ParamVector, mlp: MlpConfig, points: np.ndarray) -> np.ndarray:
        if not self.exact_bc:
            return evaluate(params, mlp, points)["u"]
        tape = Tape()
        x = tape.input(points)
        out = forward_on_tape(tape, params, mlp, x)
        return tape.value(self.solution(tape, x, out))

    def validate(self, params: ParamVector, mlp: MlpConfig, grid: np.ndarray | None = None) -> dict[str, float]:
        grid = self.grid() if grid is None else grid
        err = relative_l2(self.predict(params, mlp, grid), self.oracle.u(grid))
        return {"u": err, "mean": err}

    def boundary_values(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(points))


# L9 orthogonal array: 9 runs covering every pair of levels for 3 factors.
_L9 = [(0, 0, 0), (0, 1, 1), (0, 2, 2), (1, 0, 1), (1, 1, 2), (1, 2, 0), (2, 0, 2), (2, 1, 0), (2, 2, 1)]


class NavierStokesProblem(Problem):
    name = "navier_stokes"
    fields = ("u", "v", "p")

    def __init__(self, config: RunConfig):
        super().__init__(config)
        ph = config.physics
        x0, x1, y0, y1 = ph.channel
        self.length = x1 - x0
        self.domain = ChannelWithSlice(Box((x0, y0), (x1, y1)), ph.a, ph.b, ph.r, ph.h)
        self.oracle = TaylorGreenFamily(ph.kappa)
        self.ranges = ParamRanges({k: tuple(v) for k, v in config.sampler.ranges.items()})
        self.ranges.check_geometry(self.domain)

    def schema(self) -> OutputSchema:
        return OutputSchema.navier_stokes(self.first_order)

    def _physical(self, cols: dict[str, np.ndarray], n: int) -> tuple:
        ph = self.config.physics
        return tuple(cols.get(k, np.full(n, getattr(ph, k))) for k in ("nu", "rho", "v_in"))

    def residuals(self, tape: Tape, params: ParamVector, mlp: MlpConfig, batch: CollocationBatch) -> ResidualSet:
        rs = ResidualSet()
        pts = batch.interior_points
        n = len(pts)
        nu, rho, v_in = self._physical(batch.param_columns("interior"), n)
        forcing = self.oracle.forcing(pts, nu, rho, v_in)
        x = tape.input(batch.interior_inputs())
        out = forward_on_tape(tape, params, mlp, x)
        scales = default_ns_scales(rho, v_in, self.length)
        if self.first_order:
            res = navier_stokes_residuals_fo(tape, out, x, nu, rho, forcing)
        else:
            res = navier_stokes_residuals_2nd(tape, out, x, nu, rho, forcing)
        for name, node in res.items():
            rs.add("pde", name, node, scales[name])
        if self.first_order:
            for prim in ("u", "v"):
                aux = {f"{prim}_x": out[f"{prim}_x"], f"{prim}_y": out[f"{prim}_y"]}
                comp = compatibility_residuals(tape, out[prim], aux, x, {f"{prim}_x": 0, f"{prim}_y": 1})
                for name, node in comp.items():
                    rs.add("compat", f"compat_{name}", node, scales["compat"])

        bp = batch.boundary_points
        if len(bp):
            bnu, brho, bv = self._physical(batch.param_columns("boundary"), len(bp))
            exact = self.oracle.fields(bp, bnu, brho, bv)
            ranges = self.oracle.field_ranges(brho, bv)
            xb = tape.input(batch.boundary_inputs())
            outb = forward_on_tape(tape, params, mlp, xb)
            for f in ("u", "v"):
                rs.add("bc", f"bc_{f}", tape.sub(outb[f], tape.constant(exact[f])), ranges[f])
            outlet = batch.boundary_labels == "outlet"
            if outlet.any():
                # pressure is pinned on the outlet only; mask the other rows to zero
                mask = outlet.astype(np.float64)
                diff = tape.sub(outb["p"], tape.constant(exact["p"]))
                rs.add("bc", "bc_p", tape.mul(diff, tape.constant(mask)),
                       ranges["p"] * np.sqrt(max(mask.mean(), 1e-12)))
        return normalize_losses(tape, rs)

    # -- evaluation ----------------------------------------------------------

    def grid(self, nx: int = 101, ny: int = 51) -> np.ndarray:
        lo, hi = self.domain.bounding_box()
        gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], nx), np.linspace(lo[1], hi[1], ny), indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        return pts[self.domain.evaluate(pts) >= 0]

    def validation_params(self) -> np.ndarray:
        """Held-out parameter combinations (L9 array at 25/50/75 % of each range)."""
        if not len(self.ranges):
            return np.empty((1, 0))
        lo, hi = self.ranges.bounds()
        levels = np.array([0.25, 0.5, 0.75])
        if len(lo) <= 3:
            rows = sorted({tuple(r[: len(lo)]) for r in _L9}) if len(lo) < 3 else _L9
            return np.array([[lo[i] + levels[r[i]] * (hi[i] - lo[i]) for i in range(len(lo))] for r in rows])
        return np.array([lo + levels[(i % 3)] * (hi - lo) for i in range(9)])

    def validate(self, params: ParamVector, mlp: MlpConfig, grid: np.ndarray | None = None) -> dict[str, float]:
        grid = self.grid() if grid is None else grid
        preds = {f: [] for f in self.fields}
        exact = {f: [] for f in self.fields}
        for pv in self.validation_params():
            cols = dict(zip(self.ranges.names, pv))
            geom = {k: v for k, v in cols.items() if k in ChannelWithSlice.GEOMETRY_KEYS}
            pts = grid[self.domain.evaluate(grid, geom=geom) >= 0] if geom else grid
            n = len(pts)
            nu, rho, v_in = self._physical({k: np.full(n, v) for k, v in cols.items()}, n)
            inputs = np.hstack([pts, np.tile(pv, (n, 1))])
            out = evaluate(params, mlp, inputs)
            ex = self.oracle.fields(pts, nu, rho, v_in)
            for f in self.fields:
                preds[f].append(out[f])
                exact[f].append(ex[f])
        errs = {f: relative_l2(np.concatenate(preds[f]), np.concatenate(exact[f])) for f in self.fields}
        errs["mean"] = float(np.mean([errs[f] for f in self.fields]))
        return errs


def build_problem(config: RunConfig) -> Problem:
    if config.problem == "helmholtz":
        return HelmholtzProblem(config)
    return NavierStokesProblem(config)
