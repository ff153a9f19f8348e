"""Closed-form reference fields used for validation.

``HelmholtzManufactured``: u = prod_i sin(pi x_i), which vanishes on the
boundary of the unit square/cube, with source f = (k^2 - dims pi^2) u.

``TaylorGreenFamily``: a steady Taylor-Green vortex scaled by the inlet
velocity, u = A sin(kx) cos(ky), v = -A cos(kx) sin(ky) with A = v_in and
p = rho A^2 / 4 (cos 2kx + cos 2ky). The convective term is balanced by the
pressure gradient exactly, so the body force is just the viscous part,
F = 2 nu k^2 (u, v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HelmholtzManufactured:
    k: float = 1.0
    dims: int = 2

    def u(self, points):
        pts = np.atleast_2d(points)
        return np.prod(np.sin(np.pi * pts[:, : self.dims]), axis=1)

    def grad(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)[:, : self.dims]
        s, c = np.sin(np.pi * pts), np.cos(np.pi * pts)
        out = np.empty_like(pts)
        for j in range(self.dims):
            others = np.prod(np.delete(s, j, axis=1), axis=1)
            out[:, j] = np.pi * c[:, j] * others
        return out

    def source(self, points):
        return (self.k**2 - self.dims * np.pi**2) * self.u(points)

    def fields(self, points) -> dict[str, np.ndarray]:
        g = self.grad(points)
        out = {"u": self.u(points)}
        for j, c in enumerate("xyz"[: self.dims]):
            out[f"u_{c}"] = g[:, j]
        return out

    def field_range(self) -> float:
        return 1.0


@dataclass(frozen=True)
class TaylorGreenFamily:
    kappa: float = np.pi

    def fields(self, points, nu, rho, v_in) -> dict[str, np.ndarray]:
        pts = np.atleast_2d(points)
        kx, ky = self.kappa * pts[:, 0], self.kappa * pts[:, 1]
        a = np.asarray(v_in, dtype=np.float64)
        rho = np.asarray(rho, dtype=np.float64)
        sx, cx, sy, cy = np.sin(kx), np.cos(kx), np.sin(ky), np.cos(ky)
        k = self.kappa
        return {
            "u": a * sx * cy,
            "v": -a * cx * sy,
            "p": rho * a**2 / 4.0 * (np.cos(2 * kx) + np.cos(2 * ky)),
            "u_x": a * k * cx * cy,
            "u_y": -a * k * sx * sy,
            "v_x": a * k * sx * sy,
            "v_y": -a * k * cx * cy,
        }

    def forcing(self, points, nu, rho, v_in) -> tuple[np.ndarray, np.ndarray]:
        f = self.fields(points, nu, rho, v_in)
        c = 2.0 * np.asarray(nu, dtype=np.float64) * self.kappa**2
        return c * f["u"], c * f["v"]

    def field_ranges(self, rho, v_in) -> dict[str, np.ndarray]:
        rho = np.asarray(rho, dtype=np.float64)
        v_in = np.asarray(v_in, dtype=np.float64)
        return {"u": 2.0 * v_in, "v": 2.0 * v_in, "p": rho * v_in**2}


def relative_l2(prediction, exact) -> float:
    """||prediction - exact||_2 / ||exact||_2."""
    pred = np.asarray(prediction, dtype=np.float64)
    ex = np.asarray(exact, dtype=np.float64)
    if pred.shape != ex.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ex.shape}")
    denom = np.linalg.norm(ex)
    if denom == 0.0:
        raise ValueError("reference field has zero norm")
    return float(np.linalg.norm(pred - ex) / denom)
