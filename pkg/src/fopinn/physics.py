"""PDE residuals in first-order and second-order form.

First-order residuals only ever differentiate network outputs once with
respect to the input points; the second-order baseline differentiates the
result of a differentiation again. Residuals are tape nodes holding one
value per collocation point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tape, TapeError, input_jacobian
from .network import COORD_NAMES

FIRST_ORDER = "first_order"
SECOND_ORDER = "second_order"
FORMULATIONS = (FIRST_ORDER, SECOND_ORDER)


class ModeError(TapeError):
    """A residual was requested on a tape that does not allow it."""


class MissingOutputError(KeyError):
    pass


@dataclass(frozen=True)
class HelmholtzSystem:
    k: float
    source: Callable[[np.ndarray], np.ndarray]
    dims: int = 2
    formulation: str = FIRST_ORDER

    def __post_init__(self):
        if not np.isfinite(self.k):
            raise ValueError("wave number must be finite")
        if self.dims not in (2, 3):
            raise ValueError("Helmholtz supports 2 or 3 spatial dimensions")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


@dataclass(frozen=True)
class NavierStokesSystem:
    nu: float
    rho: float
    v_in: float
    a: float = 0.4
    b: float = 0.0
    r: float = 0.05
    h: float = 0.1
    formulation: str = FIRST_ORDER

    def __post_init__(self):
        if self.nu <= 0 or self.rho <= 0:
            raise ValueError("viscosity and density must be positive")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")


@dataclass
class ResidualSet:
    """Residual nodes grouped as pde / compat / bc, with a scale per residual."""

    groups: dict[str, dict[str, int]] = field(default_factory=lambda: {"pde": {}, "compat": {}, "bc": {}})
    scales: dict[str, float | np.ndarray] = field(default_factory=dict)

    def add(self, group: str, name: str, node: int, scale=1.0) -> None:
        self.groups.setdefault(group, {})[name] = node
        self.scales[name] = scale

    def names(self) -> list[str]:
        return [n for g in self.groups.values() for n in g]

    def items(self):
        for group, members in self.groups.items():
            for name, node in members.items():
                yield group, name, node


def _require(outputs: Mapping[str, int], *names: str) -> list[int]:
    missing = [n for n in names if n not in outputs]
    if missing:
        raise MissingOutputError(f"missing output slot(s): {', '.join(missing)}")
    return [outputs[n] for n in names]


def _as_node(tape: Tape, value) -> int:
    return tape.constant(value)


def helmholtz_residual_2nd(tape: Tape, u: int, x: int, k: float, f, dims: int = 2) -> int:
    """k^2 u + sum_i d2u/dx_i^2 - f, by nested input differentiation."""
    if tape.max_depth < 2:
        raise ModeError("second-order Helmholtz residual needs a tape that allows derivative depth 2")
    coords = list(range(dims))
    (grad,) = input_jacobian(tape, [u], x, coords)
    acc = tape.scale(u, k * k)
    for j in coords:
        (row,) = input_jacobian(tape, [grad[j]], x, [j])
        acc = tape.add(acc, row[0])
    return tape.sub(acc, _as_node(tape, f))


def helmholtz_residual_fo(tape: Tape, outputs: Mapping[str, int], x: int, k: float, f, dims: int = 2) -> int:
    """k^2 u + sum_i d(u_{x_i})/dx_i - f, differentiating the auxiliary outputs once."""
    aux_names = [f"u_{c}" for c in COORD_NAMES[:dims]]
    u, *aux = _require(outputs, "u", *aux_names)
    acc = tape.scale(u, k * k)
    for j, node in enumerate(aux):
        (row,) = input_jacobian(tape, [node], x, [j])
        acc = tape.add(acc, row[0])
    return tape.sub(acc, _as_node(tape, f))


def compatibility_residuals(tape: Tape, primary: int, aux: Mapping[str, int], x: int, coord_of: Mapping[str, int]) -> dict[str, int]:
    """``aux - d(primary)/dx_j`` for every auxiliary field, keyed by its name."""
    names = list(aux)
    coords = [coord_of[n] for n in names]
    (grad,) = input_jacobian(tape, [primary], x, coords)
    return {n: tape.sub(aux[n], g) for n, g in zip(names, grad)}


def navier_stokes_residuals_fo(tape: Tape, outputs: Mapping[str, int], x: int, nu, rho, forcing=None) -> dict[str, int]:
    """Steady incompressible residuals in convective form from a first-order schema.

    Continuity uses the auxiliary outputs directly; viscous terms differentiate
    the auxiliaries once. ``nu``/``rho`` may be scalars or per-point arrays;
    ``forcing`` is an optional pair of per-point body-force arrays.
    """
    u, v, p, ux, uy, vx, vy = _require(outputs, "u", "v", "p", "u_x", "u_y", "v_x", "v_y")
    (dp,) = input_jacobian(tape, [p], x, [0, 1])
    lap_u, lap_v = _divergence(tape, x, ux, uy), _divergence(tape, x, vx, vy)
    return _assemble_ns(tape, u, v, ux, uy, vx, vy, dp[0], dp[1], lap_u, lap_v, nu, rho, forcing)


def navier_stokes_residuals_2nd(tape: Tape, outputs: Mapping[str, int], x: int, nu, rho, forcing=None) -> dict[str, int]:
    """Baseline residuals; every derivative comes from input differentiation of u, v, p."""
    if tape.max_depth < 2:
        raise ModeError("second-order Navier-Stokes residuals need a tape that allows derivative depth 2")
    u, v, p = _require(outputs, "u", "v", "p")
    (du, dv, dp) = input_jacobian(tape, [u, v, p], x, [0, 1])
    ux, uy = du
    vx, vy = dv
    lap_u, lap_v = _divergence(tape, x, ux, uy), _divergence(tape, x, vx, vy)
    return _assemble_ns(tape, u, v, ux, uy, vx, vy, dp[0], dp[1], lap_u, lap_v, nu, rho, forcing)


def _divergence(tape, x, fx, fy):
    (dfx,) = input_jacobian(tape, [fx], x, [0])
    (dfy,) = input_jacobian(tape, [fy], x, [1])
    return tape.add(dfx[0], dfy[0])


def _assemble_ns(tape, u, v, ux, uy, vx, vy, px, py, lap_u, lap_v, nu, rho, forcing):
    inv_rho = _as_node(tape, 1.0 / np.asarray(rho, dtype=np.float64))
    nu_node = _as_node(tape, nu)
    cont = tape.add(ux, vy)
    mx = tape.add(tape.add(tape.mul(u, ux), tape.mul(v, uy)), tape.mul(inv_rho, px))
    mx = tape.sub(mx, tape.mul(nu_node, lap_u))
    my = tape.add(tape.add(tape.mul(u, vx), tape.mul(v, vy)), tape.mul(inv_rho, py))
    my = tape.sub(my, tape.mul(nu_node, lap_v))
    if forcing is not None:
        fx, fy = forcing
        mx = tape.sub(mx, _as_node(tape, fx))
        my = tape.sub(my, _as_node(tape, fy))
    return {"continuity": cont, "momentum_x": mx, "momentum_y": my}


def normalize_losses(tape: Tape, residual_set: ResidualSet, scales: Mapping[str, float | np.ndarray] | None = None) -> ResidualSet:
    """Divide every residual by its scale (``residual_set.scales`` unless overridden)."""
    scales = dict(residual_set.scales, **(scales or {}))
    out = ResidualSet(groups={g: {} for g in residual_set.groups})
    for group, name, node in residual_set.items():
        s = np.asarray(scales.get(name, 1.0), dtype=np.float64)
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise ValueError(f"scale for {name!r} must be positive and finite")
        if s.ndim == 0:
            scaled = node if s == 1.0 else tape.scale(node, 1.0 / float(s))
        else:
            scaled = tape.mul(node, tape.constant(1.0 / s))
        out.add(group, name, scaled, 1.0)
    return out


def default_helmholtz_scales(k: float) -> float:
    return max(k * k, 1.0)


def default_ns_scales(rho, v_in, length: float) -> dict[str, float | np.ndarray]:
    """Scales for momentum (dynamic pressure / length), continuity and
    compatibility (velocity-gradient scale)."""
    rho = np.asarray(rho, dtype=np.float64)
    v_in = np.asarray(v_in, dtype=np.float64)
    grad_scale = v_in / length
    return {
        "momentum_x": rho * v_in**2 / length,
        "momentum_y": rho * v_in**2 / length,
        "continuity": grad_scale,
        "compat": grad_scale,
    }
