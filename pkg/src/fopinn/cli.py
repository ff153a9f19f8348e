"""Command-line entry point: ``fopinn <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config


def _cmd_train(args) -> int:
    from .harness import emit_artifacts
    from .trainer import train

    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    result = train(cfg)
    out = Path(cfg.output_dir)
    if args.plots:
        emit_artifacts([result], out / "artifacts", heatmap_n=args.heatmap_n)
    last = result.records[-1] if result.records else None
    msg = f"wrote {out / 'train_log.csv'} and {out / 'checkpoint.ckpt'}"
    if last is not None:
        msg += f" (final loss {last.loss_total:.4g}, val rel-L2 {result.final_validation:.4g})"
    print(msg)
    return 0


def _cmd_evaluate(args) -> int:
    from .harness import ErrorReport, boundary_probe
    from .network import load_checkpoint
    from .problems import build_problem

    cfg = load_config(args.config)
    ckpt = Path(args.checkpoint or Path(cfg.output_dir) / "checkpoint.ckpt")
    mlp, params = load_checkpoint(ckpt)
    problem = build_problem(cfg)
    if mlp.to_dict() != problem.mlp_config().to_dict():
        raise ValueError(f"checkpoint {ckpt} was written for a different network configuration")
    report = ErrorReport(
        relative_l2=problem.validate(params, mlp),
        max_boundary_error=boundary_probe(problem, params, mlp, args.boundary_points),
        mean_sec_per_iter=None,
        tape_nodes=0,
        fingerprint=cfg.fingerprint(),
    )
    text = report.to_json()
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0


def _cmd_compare(args) -> int:
    from .harness import compare_runs

    a, b = load_config(args.a), load_config(args.b)
    out = Path(args.output_dir)
    cmp = compare_runs(a, b, output_dir=out, write=False)
    print(f"{'metric':<20} {'run_a':>14} {'run_b':>14} {'ratio':>10}")
    for name, va, vb, r in cmp.rows:
        print(f"{name:<20} {va:>14.6g} {vb:>14.6g} {r:>10.4g}")
    print(f"artifacts in {out}")
    return 0


def _cmd_geom_probe(args) -> int:
    from .harness import geometry_probe_csv
    from .problems import build_problem

    problem = build_problem(load_config(args.config))
    geometry_probe_csv(problem.domain, args.output, args.n)
    print(f"wrote {args.output}")
    return 0


def _cmd_sample_dump(args) -> int:
    from .harness import sample_dump_csv
    from .problems import build_problem

    cfg = load_config(args.config)
    sample_dump_csv(build_problem(cfg), cfg, args.iteration, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_show_config(args) -> int:
    from .config import RunConfig

    cfg = load_config(args.config) if args.config else RunConfig()
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fopinn", description="First-order PINN training and comparison tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one config; writes train_log.csv and checkpoint.ckpt")
    t.add_argument("--config", required=True)
    t.add_argument("--output-dir", help="override output_dir from the config")
    t.add_argument("--plots", action="store_true", help="also write SVG plots and field CSVs")
    t.add_argument("--heatmap-n", type=int, default=100)
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("evaluate", help="score a checkpoint against the analytical solution")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--boundary-points", type=int, default=10_000)
    e.add_argument("--output", help="write the JSON report here")
    e.set_defaults(func=_cmd_evaluate)

    c = sub.add_parser("compare", help="train two configs and write a paired comparison")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--output-dir", default="runs/compare")
    c.set_defaults(func=_cmd_compare)

    g = sub.add_parser("geom", help="geometry tools")
    gs = g.add_subparsers(dest="geom_command", required=True)
    gp = gs.add_parser("probe", help="write x,y,phi on a grid over the domain bounding box")
    gp.add_argument("--config", required=True)
    gp.add_argument("--n", type=int, default=101)
    gp.add_argument("--output", default="geom_probe.csv")
    gp.set_defaults(func=_cmd_geom_probe)

    s = sub.add_parser("sample", help="sampler tools")
    ss = s.add_subparsers(dest="sample_command", required=True)
    sd = ss.add_parser("dump", help="write one collocation batch as CSV")
    sd.add_argument("--config", required=True)
    sd.add_argument("--iteration", type=int, default=0)
    sd.add_argument("--output", default="samples.csv")
    sd.set_defaults(func=_cmd_sample_dump)

    sc = sub.add_parser("config", help="print a config with all defaults filled in")
    sc.add_argument("--config")
    sc.set_defaults(func=_cmd_show_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError, KeyError, FloatingPointError, AssertionError) as exc:
        print(f"fopinn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
