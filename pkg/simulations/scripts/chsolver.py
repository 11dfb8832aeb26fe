"""Linearized Cahn-Hilliard block in mixed (c, mu) form with coefficients frozen at t_n.

    (eps0 rho0 / gamma0)(c - c_n)/dt - div(eps0 grad mu) = F2
                          -mu - div(eps0 grad c)       = Fmu

Homogeneous Neumann on c and mu through the scalar ghost extension. The remainders are
written so that a converged Picard fixed point satisfies the unsplit equations exactly
(up to solver round-off):

    (rho c - rho_n c_n)/dt + div(c rho u) - div(gamma grad mu) = 0
    mu = psibar_c + eps_c |grad c|^2 / 2 - div(eps rho grad c) / rho

The eps0^2/gamma0 grad(gamma0/eps0).grad(mu) term of F2 is realized as the discrete
commutator div(gamma0 grad mu) - (gamma0/eps0) div(eps0 grad mu), and the
eps grad(rho).grad(c)/rho term of Fmu as div(eps rho grad c)/rho - div(eps grad c).
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional
import numpy as np
import scipy.sparse as sp
from mesh import (ScalarField, VectorField, apply_scalar_bc, div_coeff, div_coeff_operator, divergence, gradient)
from material import MaterialLaws, State, capillary_coefficients, eps_rho_field
import linsys

log = logging.getLogger(__name__)


@dataclass
class FrozenCoefficients:
    material: MaterialLaws
    rho0: ScalarField
    c0: ScalarField
    u0: VectorField
    eps0: ScalarField
    gamma0: ScalarField
    eta0: ScalarField
    lambda0: ScalarField
    grad_c0: np.ndarray
    beta0: np.ndarray  # rho0^2 eps_rho0 + rho0 eps0, coefficient of the Hessian coupling
    _systems: Dict[tuple, linsys.SparseSystem] = field(default_factory=dict, repr=False)

    def system(self, key: tuple, build: Callable[[], linsys.SparseSystem]) -> linsys.SparseSystem:
        if key not in self._systems:
            self._systems[key] = build()
        return self._systems[key]


def _filled(grid, values) -> ScalarField:
    return apply_scalar_bc(ScalarField(grid, values))


def freeze_coefficients(material: MaterialLaws, state_n: State) -> FrozenCoefficients:
    g = state_n.grid
    r, c = state_n.rho.values, state_n.c.values
    eta, lam = material.viscosities(r, c)
    gc = gradient(state_n.c).values
    coeffs = capillary_coefficients(material, r, c, np.sum(gc * gc, axis=0))
    return FrozenCoefficients(
        material=material, rho0=state_n.rho, c0=state_n.c, u0=state_n.u,
        eps0=_filled(g, material.capillarity(r, c)), gamma0=_filled(g, material.mobility(r, c)),
        eta0=_filled(g, eta), lambda0=_filled(g, lam), grad_c0=gc, beta0=coeffs['beta'])


def mass_flux_divergence(c: ScalarField, rho: ScalarField, u: VectorField) -> ScalarField:
    """Centered div(c rho u); the product inherits the velocity ghost parity."""
    flux = VectorField(c.grid)
    flux.data[...] = c.data * rho.data * u.data
    flux.ghost_filled = c.ghost_filled and rho.ghost_filled and u.ghost_filled
    return divergence(flux)


def compute_F2(state_iter: State, rho_iter: ScalarField, frozen: FrozenCoefficients, c_n: ScalarField,
               dt: float, source: Optional[np.ndarray] = None) -> ScalarField:
    g = state_iter.grid
    c, mu, u = state_iter.c, state_iter.mu, state_iter.u
    r0, rk = frozen.rho0.values, rho_iter.values
    gamma_k = _filled(g, frozen.material.mobility(rk, c.values))
    # rho0 is the step-base density, so the c_n part of the backward difference is zero
    dt_term = ((r0 - rk) * c.values - (r0 - frozen.rho0.values) * c_n.values) / dt
    transport = mass_flux_divergence(c, rho_iter, u).values
    lap_gamma0 = div_coeff(frozen.gamma0, mu).values
    frozen_gap = lap_gamma0 - div_coeff(gamma_k, mu).values
    commutator = lap_gamma0 - frozen.gamma0.values / frozen.eps0.values * div_coeff(frozen.eps0, mu).values
    inner = dt_term - transport - frozen_gap + commutator
    if source is not None:
        inner = inner + source
    return ScalarField(g, frozen.eps0.values / frozen.gamma0.values * inner)


def compute_Fmu(state_iter: State, rho_iter: ScalarField, frozen: FrozenCoefficients,
                source: Optional[np.ndarray] = None) -> ScalarField:
    g = state_iter.grid
    laws = frozen.material
    c = state_iter.c
    rk = rho_iter.values
    if np.any(rk <= 0.0):
        raise ValueError(f'compute_Fmu: nonpositive density (min {rk.min():.3e})')
    eps_k = _filled(g, laws.capillarity(rk, c.values))
    lap_eps = div_coeff(eps_k, c).values
    eps_gap = lap_eps - div_coeff(frozen.eps0, c).values
    rho_grad = div_coeff(eps_rho_field(laws, rho_iter, c), c).values / rk - lap_eps
    gc = gradient(c).values
    dpsi_c = laws.psibar_c(rk, c.values) + 0.5 * laws.eps_c(rk, c.values) * np.sum(gc * gc, axis=0)
    out = eps_gap + rho_grad - dpsi_c
    if source is not None:
        out = out - source
    return ScalarField(g, out)


def ch_matrix(frozen: FrozenCoefficients, dt: float) -> sp.csr_matrix:
    n = frozen.rho0.grid.size
    m = (frozen.eps0.values * frozen.rho0.values / (frozen.gamma0.values * dt)).ravel()
    L = div_coeff_operator(frozen.eps0)
    return sp.bmat([[sp.diags(m), -L], [-L, -sp.identity(n)]], format='csr')


def assemble_ch_system(frozen: FrozenCoefficients, dt: float, F2: ScalarField, Fmu: ScalarField,
                       c_n: ScalarField) -> linsys.SparseSystem:
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    m = frozen.eps0.values * frozen.rho0.values / (frozen.gamma0.values * dt)
    rhs = np.concatenate([(F2.values + m * c_n.values).ravel(), Fmu.values.ravel()])
    template = frozen.system(('ch', dt), lambda: linsys.seal(ch_matrix(frozen, dt), np.zeros(rhs.size), symmetric=True))
    return template.with_rhs(rhs)


def solve_ch(frozen: FrozenCoefficients, dt: float, state_iter: State, rho_iter: ScalarField, c_n: ScalarField,
             tol: float = linsys.DEFAULT_TOL, sources: Optional[Dict[str, np.ndarray]] = None):
    sources = sources or {}
    F2 = compute_F2(state_iter, rho_iter, frozen, c_n, dt, source=sources.get('ch'))
    Fmu = compute_Fmu(state_iter, rho_iter, frozen, source=sources.get('mu'))
    sys = assemble_ch_system(frozen, dt, F2, Fmu, c_n)
    result = linsys.solve(sys, tol=tol)
    g = state_iter.grid
    n = g.size
    c_next = _filled(g, result.x[:n].reshape(g.shape))
    mu_next = _filled(g, result.x[n:].reshape(g.shape))
    return c_next, mu_next
