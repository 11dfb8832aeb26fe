"""Continuity equation: conservative first-order upwind update and a characteristics oracle.

Face velocities are averages of the two adjacent cell values; with the velocity ghost
fill the normal velocity on every boundary face is exactly zero, so fluxes telescope
and total mass is conserved to round-off. The update stays nonnegative while
dt * sum_a max|u_a| / h_a <= 1; cfl_max (0.9 by default) is enforced below that.

The oracle integrates characteristics backward through bilinear interpolants of the
frozen velocity and its discrete divergence (solve_ivp, DOP853, rtol 1e-10), then
returns rho0(foot) * exp(-int div u ds).
"""
from __future__ import annotations
import logging
from typing import Optional
import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator
from mesh import Grid, ScalarField, VectorField, apply_scalar_bc, apply_velocity_bc, divergence, operators

log = logging.getLogger(__name__)

DEFAULT_CFL_MAX = 0.9


class TransportError(ValueError):
    pass


class CFLViolation(TransportError):
    def __init__(self, cfl: float, limit: float, dt: float):
        super().__init__(f'CFL number {cfl:.3f} exceeds {limit:.2f} at dt = {dt:.3e}')
        self.cfl, self.limit, self.dt = cfl, limit, dt


def cfl_number(u: VectorField, dt: float) -> float:
    g = u.grid
    return float(dt * sum(np.max(np.abs(u.values[a])) / g.h[a] for a in range(g.dim)))


def upwind_divergence(rho: ScalarField, u: VectorField) -> ScalarField:
    """Cell-wise div(rho u) with upwinded face densities."""
    g = rho.grid
    if not u.ghost_filled:
        u = apply_velocity_bc(u.copy())
    if not rho.ghost_filled:
        rho = apply_scalar_bc(rho.copy())
    ops = operators(g)
    r = rho.data.ravel()
    acc = np.zeros(g.size)
    for a in range(g.dim):
        uf = ops.face_avg[a] @ u.data[a].ravel()
        r_left, r_right = ops.face_left[a] @ r, ops.face_right[a] @ r
        flux = np.maximum(uf, 0.0) * r_left + np.minimum(uf, 0.0) * r_right
        acc += ops.face_div[a] @ flux
    return ScalarField(g, acc.reshape(g.shape))


def advance_density(rho_n: ScalarField, u_next: VectorField, dt: float, cfl_max: float = DEFAULT_CFL_MAX,
                    source: Optional[np.ndarray] = None) -> ScalarField:
    if np.any(rho_n.values < 0.0):
        raise TransportError(f'negative input density (min {rho_n.values.min():.3e})')
    cfl = cfl_number(u_next, dt)
    if cfl > cfl_max:
        raise CFLViolation(cfl, cfl_max, dt)
    new = rho_n.values - dt * upwind_divergence(rho_n, u_next).values
    if source is not None:
        new = new + dt * source
    return apply_scalar_bc(ScalarField(rho_n.grid, new))


def min_density(rho) -> float:
    return float(np.min(rho.values if isinstance(rho, ScalarField) else rho))


# --------------------------------------------------------------------------- oracle

class CharacteristicField:
    """Bilinear interpolants of a frozen velocity, its divergence and rho0 on padded centers."""

    def __init__(self, rho0: ScalarField, u_frozen: VectorField):
        g = rho0.grid
        self.grid = g
        u = apply_velocity_bc(u_frozen.copy())
        r = apply_scalar_bc(rho0.copy())
        div = apply_scalar_bc(divergence(u))
        pts = g.padded_centers()
        kw = dict(method='linear', bounds_error=False, fill_value=None)
        self._u = [RegularGridInterpolator(pts, u.data[a], **kw) for a in range(g.dim)]
        self._div = RegularGridInterpolator(pts, div.data, **kw)
        self._rho0 = RegularGridInterpolator(pts, r.data, **kw)
        self.lo = np.zeros(g.dim)
        self.hi = np.asarray(g.extents, dtype=float)

    def clamp(self, x: np.ndarray) -> np.ndarray:
        """x has shape (n_points, dim)."""
        return np.clip(x, self.lo, self.hi)

    def velocity(self, x: np.ndarray) -> np.ndarray:
        xc = self.clamp(x)
        return np.stack([f(xc) for f in self._u], axis=1)

    def divergence(self, x: np.ndarray) -> np.ndarray:
        return self._div(self.clamp(x))

    def rho0(self, x: np.ndarray) -> np.ndarray:
        return self._rho0(self.clamp(x))

    def backward_rhs(self, n_points: int):
        d = self.grid.dim

        def rhs(_, y):
            x = y[:n_points * d].reshape(n_points, d)
            return np.concatenate([-self.velocity(x).ravel(), self.divergence(x)])

        return rhs


def characteristics_oracle(rho0: ScalarField, u_frozen: VectorField, t: float, sample_points,
                           rtol: float = 1e-10, atol: float = 1e-12) -> np.ndarray:
    """rho(t, x) for a time-independent velocity, at sample points of shape (n, dim)."""
    field = CharacteristicField(rho0, u_frozen)
    x = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if x.shape[1] != rho0.grid.dim:
        x = x.reshape(-1, rho0.grid.dim)
    n = x.shape[0]
    if t == 0.0:
        return field.rho0(x)
    y0 = np.concatenate([x.ravel(), np.zeros(n)])
    sol = solve_ivp(field.backward_rhs(n), (0.0, float(t)), y0, method='DOP853', rtol=rtol, atol=atol)
    if not sol.success:
        raise TransportError(f'characteristic integration failed: {sol.message}')
    yT = sol.y[:, -1]
    foot = yT[:n * rho0.grid.dim].reshape(n, rho0.grid.dim)
    outside = np.any((foot < field.lo - 1e-9) | (foot > field.hi + 1e-9), axis=1)
    if np.any(outside):
        log.warning('characteristics: %d feet drifted outside the domain, clamped', int(outside.sum()))
    return field.rho0(foot) * np.exp(-yT[n * rho0.grid.dim:])


def cell_sample_points(grid: Grid) -> np.ndarray:
    return np.stack([x.ravel() for x in grid.cell_centers()], axis=1)
