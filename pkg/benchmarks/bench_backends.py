"""Compare the compiled kernels with the numpy fallback.

Each backend runs in its own interpreter (the backend is fixed at import), and
every timing is the minimum over repeats. Two levels are measured: the raw
kernels on a hidden-layer-sized array, and whole training iterations.

    python benchmarks/bench_backends.py [--repeats 7] [--iters 50]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, timeit
import numpy as np
import fopinn
from fopinn import kernels
from fopinn.config import RunConfig
from fopinn.trainer import iterate_training

repeats, iters, rows, width = map(int, sys.argv[1:5])
z = np.random.default_rng(0).normal(size=(rows, width))
n = z.size
p, g, m, v = (np.random.default_rng(i).normal(size=n) for i in range(4))
v = np.abs(v)
res = {"backend": fopinn.BACKEND}
for name, fn in [
    ("sigmoid", lambda: kernels.sigmoid(z)),
    ("swish", lambda: kernels.swish(z)),
    ("swish_derivative", lambda: kernels.swish_derivative(z)),
    ("adam_update", lambda: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 3)),
]:
    res[name] = min(timeit.repeat(fn, number=20, repeat=repeats)) / 20

for form, bc in (("first_order", "exact"), ("second_order", "soft")):
    cfg = RunConfig(formulation=form, bc_mode=bc).replace(**{
        "trainer.iters": iters, "trainer.validate_every": 0,
        "sampler.counts.interior": rows // 4 * 4, "sampler.counts.boundary": rows // 4,
    })
    best = float("inf")
    for _ in range(max(1, repeats // 2)):
        times = [r.sec_per_iter for r, _ in iterate_training(cfg)]
        best = min(best, float(np.median(times[2:] or times)))
    res[f"iter_{form}"] = best
print(json.dumps(res))
"""


def run(pure: bool, args) -> dict:
    env = dict(os.environ, FOPINN_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run(
        [sys.executable, "-c", CHILD, str(args.repeats), str(args.iters), str(args.rows), str(args.width)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--iters", type=int, default=50)
    ap.add_argument("--rows", type=int, default=1024)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    py = run(True, args)
    cy = run(False, args)
    if cy["backend"] != "cython":
        print("compiled extension not available; only the fallback was measured", file=sys.stderr)
    keys = [k for k in py if k != "backend"]
    print(f"{'benchmark':<24} {'python [s]':>12} {cy['backend'] + ' [s]':>12} {'speedup':>8}")
    for k in keys:
        print(f"{k:<24} {py[k]:>12.3e} {cy[k]:>12.3e} {py[k] / cy[k]:>8.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"python": py, "compiled": cy, "args": vars(args)}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
