"""Oracle self-check: exact fields wired into the first-order residual ops."""

from __future__ import annotations

import numpy as np

from .autodiff import Tape
from .problems import HelmholtzProblem, Problem
from .sampler import stream

SELF_CHECK_TOL = 1e-10


class OracleError(AssertionError):
    pass


def oracle_self_check(problem: Problem, n: int = 1000, seed: int = 0) -> float:
    """Largest |residual| when the exact fields are wired into the residual ops."""
    from .physics import helmholtz_residual_fo, navier_stokes_residuals_fo

    rng = stream(seed, 0, 99)
    if isinstance(problem, HelmholtzProblem):
        pts = rng.uniform(0, 1, size=(n, problem.dims))
        tape, x, fields = _wire_exact_helmholtz(problem, pts)
        res = helmholtz_residual_fo(tape, fields, x, problem.k, problem.oracle.source(pts), problem.dims)
        return float(np.max(np.abs(tape.value(res))))
    lo, hi = problem.domain.bounding_box()
    pts = rng.uniform(lo, hi, size=(n, 2))
    ph = problem.config.physics
    nu, rho, v_in = ph.nu, ph.rho, ph.v_in
    tape, x, fields = wire_exact_taylor_green(problem.oracle, pts, nu, rho, v_in)
    res = navier_stokes_residuals_fo(tape, fields, x, nu, rho, problem.oracle.forcing(pts, nu, rho, v_in))
    return max(float(np.max(np.abs(tape.value(r)))) for r in res.values())


def _wire_exact_helmholtz(problem: HelmholtzProblem, pts):
    """Exact fields as tape nodes whose input derivatives are also exact.

    The tape has no trig op, so each field is its first-order Taylor
    expansion about the sample points, evaluated at those same points.
    """
    tape = Tape()
    x = tape.input(pts)
    o = problem.oracle
    d = problem.dims
    grad = o.grad(pts)
    hess = _helmholtz_hessian(o, pts)
    fields = {"u": _linearised(tape, x, pts, o.u(pts), grad)}
    for j, c in enumerate("xyz"[:d]):
        fields[f"u_{c}"] = _linearised(tape, x, pts, grad[:, j], hess[:, j, :])
    return tape, x, fields


def _helmholtz_hessian(o, pts):
    d = o.dims
    p = pts[:, :d]
    s, c = np.sin(np.pi * p), np.cos(np.pi * p)
    n = len(p)
    hess = np.empty((n, d, d))
    for i in range(d):
        for j in range(d):
            fac = np.ones(n)
            for m in range(d):
                if m == i == j:
                    fac = fac * (-np.pi**2 * s[:, m])
                elif m in (i, j):
                    fac = fac * (np.pi * c[:, m])
                else:
                    fac = fac * s[:, m]
            hess[:, i, j] = fac
    return hess


def _linearised(tape: Tape, x: int, x0: np.ndarray, value: np.ndarray, grad: np.ndarray) -> int:
    """Node equal to ``value`` at x0 whose input derivative is ``grad`` (per point)."""
    acc = tape.constant(value)
    for j in range(grad.shape[1]):
        delta = tape.sub(tape.column(x, j), tape.constant(x0[:, j]))
        acc = tape.add(acc, tape.mul(tape.constant(grad[:, j]), delta))
    return acc


def wire_exact_taylor_green(oracle, pts, nu, rho, v_in):
    tape = Tape()
    x = tape.input(pts)
    f = oracle.fields(pts, nu, rho, v_in)
    k = oracle.kappa
    a = np.asarray(v_in, dtype=np.float64)
    kx, ky = k * pts[:, 0], k * pts[:, 1]
    sx, cx, sy, cy = np.sin(kx), np.cos(kx), np.sin(ky), np.cos(ky)
    grads = {
        "u": np.column_stack([f["u_x"], f["u_y"]]),
        "v": np.column_stack([f["v_x"], f["v_y"]]),
        "p": np.column_stack([-np.asarray(rho) * a**2 * k / 2 * np.sin(2 * kx),
                              -np.asarray(rho) * a**2 * k / 2 * np.sin(2 * ky)]),
        "u_x": np.column_stack([-a * k * k * sx * cy, -a * k * k * cx * sy]),
        "u_y": np.column_stack([-a * k * k * cx * sy, -a * k * k * sx * cy]),
        "v_x": np.column_stack([a * k * k * cx * sy, a * k * k * sx * cy]),
        "v_y": np.column_stack([a * k * k * sx * cy, a * k * k * cx * sy]),
    }
    nodes = {name: _linearised(tape, x, pts, f[name], g) for name, g in grads.items()}
    return tape, x, nodes


def assert_oracle(problem: Problem, n: int = 1000) -> float:
    worst = oracle_self_check(problem, n)
    if not worst <= SELF_CHECK_TOL:
        raise OracleError(f"oracle self-check failed: max |residual| = {worst:.3e} > {SELF_CHECK_TOL:g}")
    return worst
