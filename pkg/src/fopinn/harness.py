"""Experiment drivers: error reports, paired comparisons, CSV/SVG artifacts."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .autodiff import Tape
from .config import RunConfig
from .geometry import AdfDomain
from .network import MlpConfig, ParamVector, forward_on_tape
from .oracles import relative_l2  # noqa: F401  (re-exported)
from .problems import HelmholtzProblem, NavierStokesProblem, Problem, build_problem
from .sampler import sample_batch
from .trainer import TrainResult, train
from .verify import oracle_self_check, wire_exact_taylor_green  # noqa: F401


class ComparisonError(ValueError):
    pass


@dataclass
class ErrorReport:
    relative_l2: dict[str, float]
    max_boundary_error: float
    mean_sec_per_iter: float | None
    tape_nodes: int
    fingerprint: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def boundary_probe(problem: Problem, params: ParamVector, mlp: MlpConfig, n_points: int = 10_000, seed: int = 12345) -> float:
    """max |u_sol - g| over freshly sampled boundary points."""
    batch = sample_batch(1, n_points, problem.domain, problem.ranges, seed, 0)
    pts = batch.boundary_points
    if isinstance(problem, HelmholtzProblem):
        pred = problem.predict(params, mlp, pts)
        return float(np.max(np.abs(pred - problem.boundary_values(pts))))
    tape = Tape()
    x = tape.input(batch.boundary_inputs())
    out = forward_on_tape(tape, params, mlp, x)
    nu, rho, v_in = problem._physical(batch.param_columns("boundary"), len(pts))
    exact = problem.oracle.fields(pts, nu, rho, v_in)
    return max(float(np.max(np.abs(tape.value(out[f]) - exact[f]))) for f in ("u", "v"))


def corner_probe(problem: HelmholtzProblem, params: ParamVector, mlp: MlpConfig, offsets=(1e-1, 1e-2, 1e-3)) -> dict[float, float]:
    """|Laplacian of u_sol| approaching the corner (0, 0) along the diagonal.

    Diagnostic only: exposes how second derivatives of the composed solution
    behave near a corner where the distance function is not smooth.
    """
    from .autodiff import input_jacobian

    out = {}
    for eps in offsets:
        pts = np.full((1, problem.dims), eps)
        tape = Tape()
        x = tape.input(pts)
        net = forward_on_tape(tape, params, mlp, x)
        u = problem.solution(tape, x, net)
        (grad,) = input_jacobian(tape, [u], x)
        lap = 0.0
        for j in range(problem.dims):
            (row,) = input_jacobian(tape, [grad[j]], x, [j])
            lap += float(tape.value(row[0])[0])
        out[eps] = abs(lap)
    return out


def make_report(result: TrainResult, n_boundary: int = 10_000) -> ErrorReport:
    problem = result.problem
    errs = problem.validate(result.params, result.mlp)
    times = [r.sec_per_iter for r in result.records] if result.config.trainer.log_wall_time else []
    return ErrorReport(
        relative_l2=errs,
        max_boundary_error=boundary_probe(problem, result.params, result.mlp, n_boundary),
        mean_sec_per_iter=float(np.mean(times)) if times else None,
        tape_nodes=result.records[-1].tape_nodes if result.records else 0,
        fingerprint=result.config.fingerprint(),
        extra={"final_loss": result.records[-1].loss_total if result.records else None},
    )


def _check_fair(a: RunConfig, b: RunConfig) -> None:
    if a.sampler.seed != b.sampler.seed or a.network.seed != b.network.seed:
        raise ComparisonError(
            f"unfair comparison: seeds differ (sampler {a.sampler.seed} vs {b.sampler.seed}, "
            f"network {a.network.seed} vs {b.network.seed})"
        )
    if (a.sampler.counts.interior, a.sampler.counts.boundary) != (b.sampler.counts.interior, b.sampler.counts.boundary):
        raise ComparisonError("unfair comparison: batch shapes differ")


def _ratio(a: float, b: float) -> float:
    if a == b:
        return 1.0
    if a == 0:
        return math.inf
    return b / a


@dataclass
class Comparison:
    rows: list[tuple[str, float, float, float]]
    result_a: TrainResult
    result_b: TrainResult
    report_a: ErrorReport
    report_b: ErrorReport

    def metric(self, name: str) -> tuple[float, float, float]:
        for row in self.rows:
            if row[0] == name:
                return row[1:]
        raise KeyError(name)


def compare_runs(config_a: RunConfig, config_b: RunConfig, output_dir=None, write: bool = False) -> Comparison:
    """Train both configs and tabulate metric, run_a, run_b, ratio = run_b / run_a."""
    _check_fair(config_a, config_b)
    ra = train(config_a, write=write)
    rb = train(config_b, write=write)
    rep_a, rep_b = make_report(ra), make_report(rb)
    rows = []

    def add(name, va, vb):
        rows.append((name, float(va), float(vb), _ratio(float(va), float(vb))))

    if rep_a.mean_sec_per_iter is not None and rep_b.mean_sec_per_iter is not None:
        add("mean_sec_per_iter", rep_a.mean_sec_per_iter, rep_b.mean_sec_per_iter)
    add("tape_nodes", rep_a.tape_nodes, rep_b.tape_nodes)
    add("final_loss", ra.records[-1].loss_total if ra.records else 0.0, rb.records[-1].loss_total if rb.records else 0.0)
    add("val_rel_l2", rep_a.relative_l2["mean"], rep_b.relative_l2["mean"])
    add("max_boundary_error", rep_a.max_boundary_error, rep_b.max_boundary_error)
    cmp = Comparison(rows, ra, rb, rep_a, rep_b)
    if output_dir is not None:
        emit_artifacts([cmp], output_dir)
    return cmp


# -- artifacts ---------------------------------------------------------------

def write_comparison_csv(cmp: Comparison, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "run_a", "run_b", "ratio"])
        for name, a, b, r in cmp.rows:
            w.writerow([name, repr(a), repr(b), repr(r)])


def write_records_csv(result: TrainResult, path) -> None:
    from .trainer import TrainingLog

    log = TrainingLog(path, result.config.trainer.log_wall_time)
    try:
        for rec in result.records:
            log.write(rec)
    finally:
        log.close()


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def line_plot_svg(series: dict[str, tuple[list[float], list[float]]], title: str, log_y: bool = True,
                  width: int = 640, height: int = 400) -> str:
    """Minimal SVG line chart; one polyline per named series."""
    pad = 60
    xs = [x for sx, _ in series.values() for x in sx]
    ys = [y for _, sy in series.values() for y in sy if y > 0 or not log_y]
    if not xs or not ys:
        xs, ys = [0.0, 1.0], [1.0, 10.0]
    tf = (lambda v: math.log10(v)) if log_y else (lambda v: v)
    x0, x1 = min(xs), max(xs) if max(xs) > min(xs) else min(xs) + 1
    y0, y1 = tf(min(ys)), tf(max(ys))
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (tf(y) - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 20}" font-size="11">{x0:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 20}" font-size="11" text-anchor="end">{x1:g}</text>',
        f'<text x="{pad - 5}" y="{height - pad}" font-size="11" text-anchor="end">{(10**y0 if log_y else y0):.3g}</text>',
        f'<text x="{pad - 5}" y="{pad + 10}" font-size="11" text-anchor="end">{(10**y1 if log_y else y1):.3g}</text>',
    ]
    for i, (name, (sx, sy)) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(sx, sy) if y > 0 or not log_y)
        parts.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 5}" y="{pad + 15 + 15 * i}" font-size="11" text-anchor="end" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def heatmap_svg(values: np.ndarray, title: str, cell: int = 4) -> str:
    """One ``<rect>`` per grid value, row 0 at the bottom; value kept in ``data-v``."""
    ny, nx = values.shape[1], values.shape[0]
    finite = values[np.isfinite(values)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{nx * cell}" height="{ny * cell + 24}">',
        f'<text x="2" y="14" font-size="12">{escape(title)} [{lo:.3g}, {hi:.3g}]</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            v = values[i, j]
            t = 0.0 if not np.isfinite(v) else (v - lo) / span
            r, b = int(255 * t), int(255 * (1 - t))
            y = 24 + (ny - 1 - j) * cell
            parts.append(f'<rect x="{i * cell}" y="{y}" width="{cell}" height="{cell}" fill="rgb({r},64,{b})" data-v="{float(v)!r}"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def field_grids(result: TrainResult, n: int = 100) -> dict[str, np.ndarray]:
    """Predicted field, exact field and |error| on an n x n grid (2-D problems)."""
    problem = result.problem
    lo, hi = problem.domain.bounding_box()
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n), indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    if isinstance(problem, HelmholtzProblem):
        pred = problem.predict(result.params, result.mlp, pts)
        exact = problem.oracle.u(pts)
        grids = {"u_pred": pred, "u_exact": exact, "u_error": np.abs(pred - exact)}
    else:
        from .network import evaluate

        pv = problem.validation_params()[len(problem.validation_params()) // 2]
        inputs = np.hstack([pts, np.tile(pv, (len(pts), 1))])
        out = evaluate(result.params, result.mlp, inputs)
        cols = dict(zip(problem.ranges.names, pv))
        nu, rho, v_in = problem._physical({k: np.full(len(pts), v) for k, v in cols.items()}, len(pts))
        ex = problem.oracle.fields(pts, nu, rho, v_in)
        outside = problem.domain.evaluate(pts) < 0
        grids = {}
        for f in ("u", "v", "p"):
            pred = np.where(outside, np.nan, out[f])
            grids[f"{f}_pred"] = pred
            grids[f"{f}_error"] = np.abs(pred - ex[f])
    return {k: v.reshape(n, n) for k, v in grids.items()} | {"_x": gx, "_y": gy}


def emit_artifacts(reports, output_dir, heatmap_n: int = 100) -> list[Path]:
    """Write CSV tables and SVG plots for runs (TrainResult) or comparisons."""
    if not reports:
        raise ValueError("nothing to emit")
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    written: list[Path] = []
    for idx, item in enumerate(reports):
        tag = f"{idx:02d}"
        if isinstance(item, Comparison):
            p = out / f"comparison_{tag}.csv"
            write_comparison_csv(item, p)
            written.append(p)
            series = {}
            for label, res in (("run_a", item.result_a), ("run_b", item.result_b)):
                series[f"{label} ({res.config.formulation}, {res.config.bc_mode})"] = _val_series(res)
            p = out / f"comparison_{tag}_error.svg"
            p.write_text(line_plot_svg(series, "validation relative L2 vs iteration"))
            written.append(p)
            for label, res in (("a", item.result_a), ("b", item.result_b)):
                written += _emit_run(res, out, f"comparison_{tag}_{label}", heatmap_n)
        else:
            written += _emit_run(item, out, f"run_{tag}", heatmap_n)
    return written


def _val_series(res: TrainResult):
    pts = [(r.iteration, r.val_rel_l2) for r in res.records if r.val_rel_l2 is not None]
    return [p[0] for p in pts], [p[1] for p in pts]


def _emit_run(res: TrainResult, out: Path, stem: str, heatmap_n: int) -> list[Path]:
    written = []
    p = out / f"{stem}_log.csv"
    write_records_csv(res, p)
    written.append(p)
    p = out / f"{stem}_error.svg"
    p.write_text(line_plot_svg({res.config.formulation: _val_series(res)}, "validation relative L2 vs iteration"))
    written.append(p)
    if heatmap_n and res.problem.domain.dim == 2:
        grids = field_grids(res, heatmap_n)
        gx, gy = grids.pop("_x"), grids.pop("_y")
        p = out / f"{stem}_fields.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y"] + list(grids))
            flat = [g.ravel() for g in grids.values()]
            for row in zip(gx.ravel(), gy.ravel(), *flat):
                w.writerow([repr(float(v)) for v in row])
        written.append(p)
        for name, g in grids.items():
            p = out / f"{stem}_{name}.svg"
            p.write_text(heatmap_svg(g, name))
            written.append(p)
    return written


def geometry_probe_csv(domain: AdfDomain, path, n: int = 101) -> None:
    from .geometry import grid_probe

    rows = grid_probe(domain, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "phi"])
        for x, y, phi in rows:
            w.writerow([repr(float(x)), repr(float(y)), repr(float(phi))])


def sample_dump_csv(problem: Problem, config: RunConfig, iteration: int, path) -> None:
    c = config.sampler
    batch = sample_batch(c.counts.interior, c.counts.boundary, problem.domain, problem.ranges, c.seed, iteration)
    dims = problem.domain.dim
    coord = ["x", "y", "z"][:dims]
    names = list(batch.param_names)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "label"] + coord + names)
        for pt, pv in zip(batch.interior_points, batch.interior_params):
            w.writerow(["interior", ""] + [repr(float(v)) for v in pt] + [repr(float(v)) for v in pv])
        for pt, lab, pv in zip(batch.boundary_points, batch.boundary_labels, batch.boundary_params):
            w.writerow(["boundary", lab] + [repr(float(v)) for v in pt] + [repr(float(v)) for v in pv])


__all__ = [
    "ErrorReport",
    "Comparison",
    "ComparisonError",
    "boundary_probe",
    "build_problem",
    "compare_runs",
    "corner_probe",
    "emit_artifacts",
    "make_report",
    "oracle_self_check",
    "relative_l2",
    "NavierStokesProblem",
]
