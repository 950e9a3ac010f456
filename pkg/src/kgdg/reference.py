"""Independent oracles for testing the stepper.

Two routes that must agree with ``scheme`` without sharing its code paths:

* a closed-form single-mode solution of the linear (lam = 0) equation matched
  to the standard cosine/sine initial data, and
* a brute-force per-step solver: damped fixed-point iteration on the full
  (phi+, psi+) pair, no elimination, no Jacobian, restricted to tiny grids.

The brute-force route recomputes the defect with its own numpy code so that a
bug in the production residual cannot hide here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import Field, GridSpec
from .scheme import FieldState, NonConvergence, PhysicsParams

__all__ = ["LinearModeSolution", "linear_exact", "brute_force_step"]

WAVENUMBER = 2.0 * np.pi  # fixed by the cosine/sine initial data on [-1/2, 1/2)


@dataclass(frozen=True)
class LinearModeSolution:
    """Closed-form solution of the lam = 0 equation with initial data
    phi = A cos(kx), psi = k A sin(kx) (k = 2 pi)."""

    amplitude: float
    params: PhysicsParams

    def __post_init__(self):
        if self.params.lam != 0.0:
            raise ValueError("the linear oracle requires lam = 0")

    @property
    def wavenumber(self) -> float:
        return WAVENUMBER

    @property
    def omega(self) -> float:
        p = self.params
        return p.c * np.sqrt(WAVENUMBER**2 + p.c**2 * p.mass**2 / p.hbar**2)


def linear_exact(x, t: float, sol: LinearModeSolution):
    """Evaluate (phi, psi) of the closed form at positions x and time t.

    For mass 0 the two standing-wave terms collapse to the traveling wave
    A cos(k (x - c t)) (with c = 1 units).
    """
    A = sol.amplitude
    k = sol.wavenumber
    w = sol.omega
    c, l0 = sol.params.c, sol.params.l0
    x = np.asarray(x, dtype=np.float64)
    phi = A * np.cos(k * x) * np.cos(w * t) + (c * k * A / w) * np.sin(k * x) * np.sin(w * t)
    dphi_dt = -A * w * np.cos(k * x) * np.sin(w * t) + c * k * A * np.sin(k * x) * np.cos(w * t)
    psi = l0 * dphi_dt / c
    return phi, psi


def _defect(phi_n, psi_n, phi, psi, grid: GridSpec, params: PhysicsParams):
    """Scheme defect computed independently of scheme.residual."""
    c, l0, dt, p = params.c, params.l0, grid.dt, params.p
    lap = np.zeros(phi.size)
    for arr in (phi_n, phi):  # apply the stencil per field, not to the sum
        shaped = arr.reshape(grid.points)
        for ax in range(grid.dim):
            fwd = np.roll(shaped, -2, axis=ax) - shaped
            bwd = shaped - np.roll(shaped, 2, axis=ax)
            lap += ((fwd - bwd) / (4.0 * grid.dx[ax] ** 2)).reshape(-1)

    num = np.abs(phi_n) ** (p + 1) - np.abs(phi) ** (p + 1)
    den = phi_n - phi
    mid = 0.5 * (phi_n + phi)
    limit = (p + 1) * np.abs(mid) ** (p - 1) * mid
    small = np.abs(den) <= 1e-12 * np.maximum(1.0, np.maximum(np.abs(phi_n), np.abs(phi)))
    g = np.where(small, limit, num / np.where(small, 1.0, den))

    d_phi = (phi_n - phi) / (c * dt) - (psi_n + psi) / (2.0 * l0)
    d_psi = (psi_n - psi) / (c * dt) - l0 * (
        -params.lam / (p + 1) * g
        + 0.5 * lap
        - params.c**2 * params.mass**2 / (2.0 * params.hbar**2) * (phi_n + phi)
    )
    return d_phi, d_psi


def brute_force_step(
    curr: FieldState, params: PhysicsParams, tol: float = 1e-12,
    damping: float = 0.5, max_iters: int = 200000,
) -> FieldState:
    """Solve one step of the scheme by damped fixed-point iteration on the
    full (phi+, psi+) pair.  Slow on purpose; grids above 64 points are
    rejected to keep it an oracle, not a solver."""
    grid = curr.grid
    if grid.total_points > 64:
        raise ValueError("brute_force_step is restricted to <= 64 grid points")
    c, l0, dt, p = params.c, params.l0, grid.dt, params.p
    phi, psi = curr.phi.values, curr.psi.values

    target = tol / 10.0
    phi_n = phi.copy()
    psi_n = psi.copy()
    for _ in range(max_iters):
        d_phi, d_psi = _defect(phi_n, psi_n, phi, psi, grid, params)
        if max(np.max(np.abs(d_phi)), np.max(np.abs(d_psi))) <= target:
            return FieldState(
                Field(grid, phi_n), Field(grid, psi_n), curr.time_index + 1
            )
        # fixed-point updates read straight off the two scheme equations
        phi_upd = phi + c * dt * (psi_n + psi) / (2.0 * l0)
        psi_upd = psi_n - c * dt * d_psi  # equivalent to psi + c dt * RHS
        phi_n = (1.0 - damping) * phi_n + damping * phi_upd
        psi_n = (1.0 - damping) * psi_n + damping * psi_upd
    raise NonConvergence(
        "brute-force fixed point failed to converge",
        time_index=curr.time_index + 1,
        time=(curr.time_index + 1) * dt,
    )
