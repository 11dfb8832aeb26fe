"""Linearized momentum block with frozen coefficients.

    rho0 (u - u_n)/dt - V(eta0, lam0) u = F1 - B c_next - C mu_next

V(eta, lam) u = div(2 eta D(u) + lam div(u) I) is assembled in conservative face-flux
form (mesh.viscous_operator), coupling the velocity components. The capillary coupling
is B c = beta0 (H c).grad c0 with beta0 = rho0^2 eps_rho0 + rho0 eps0, and C mu = -rho0 grad(c0) mu.

F1 collects the five remainders evaluated at the current iterate (w^k, rho^k):
    B1 u  = (rho0 - rho)(u - u_n)/dt + V(eta - eta0, lam - lam0) u
    B2 c  = beta0 (H c).grad c0 - beta (H c).grad c
    B3 rho = -kappa grad rho,  kappa = 2 rho psi_rho + rho^2 psi_rhorho
    Bmu mu = -(rho0 grad c0 - rho grad c) mu
    B_low = -rho (grad u) u - chi grad c + rho f_ext,  chi = rho psi_c + rho^2 psi_rhoc
At a fixed point the block reduces to the advective momentum balance with the capillary
force rho grad(psi + rho psi_rho) - rho mu grad c.
"""
from __future__ import annotations
import logging
from typing import Dict, Optional
import numpy as np
import scipy.sparse as sp
from mesh import (ScalarField, VectorField, apply_scalar_bc, apply_velocity_bc, gradient, hessian_vec,
                  velocity_gradient, viscous_operator)
from material import State, capillary_coefficients
from chsolver import FrozenCoefficients
import linsys

log = logging.getLogger(__name__)

F1_TERMS = ('B1', 'B2', 'B3', 'Bmu', 'B_low')


def convective_term(u: VectorField) -> np.ndarray:
    """(grad u) u, i.e. sum_j u_j d_j u_i."""
    return np.einsum('ij...,j...->i...', velocity_gradient(u), u.values)


def coupling_terms(frozen: FrozenCoefficients, c_next: ScalarField, mu_next: ScalarField) -> VectorField:
    b = frozen.beta0 * hessian_vec(c_next, frozen.grad_c0).values
    cmu = -frozen.rho0.values * frozen.grad_c0 * mu_next.values
    return VectorField(c_next.grid, b + cmu)


def f1_terms(state_iter: State, rho_iter: ScalarField, frozen: FrozenCoefficients, u_n: VectorField, dt: float,
             f_ext: Optional[np.ndarray] = None, source: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    g = state_iter.grid
    laws = frozen.material
    u, c, mu = state_iter.u, state_iter.c, state_iter.mu
    r0, rk = frozen.rho0.values, rho_iter.values
    eta_k, lam_k = laws.viscosities(rk, c.values)
    d_eta = apply_scalar_bc(ScalarField(g, eta_k - frozen.eta0.values))
    d_lam = apply_scalar_bc(ScalarField(g, lam_k - frozen.lambda0.values))
    visc_gap = (viscous_operator(d_eta, d_lam) @ u.values.ravel()).reshape(u.values.shape)
    B1 = (r0 - rk) * (u.values - u_n.values) / dt + visc_gap

    gc = gradient(c).values
    k = capillary_coefficients(laws, rk, c.values, np.sum(gc * gc, axis=0))
    B2 = frozen.beta0 * hessian_vec(c, frozen.grad_c0).values - k['beta'] * hessian_vec(c, gc).values
    B3 = -k['kappa'] * gradient(rho_iter).values
    Bmu = -(r0 * frozen.grad_c0 - rk * gc) * mu.values
    B_low = -rk * convective_term(u) - k['chi'] * gc
    if f_ext is not None:
        B_low = B_low + rk * f_ext
    if source is not None:
        B_low = B_low + source
    return {'B1': B1, 'B2': B2, 'B3': B3, 'Bmu': Bmu, 'B_low': B_low}


def compute_F1(state_iter: State, rho_iter: ScalarField, frozen: FrozenCoefficients, u_n: VectorField, dt: float,
               f_ext: Optional[np.ndarray] = None, source: Optional[np.ndarray] = None) -> VectorField:
    terms = f1_terms(state_iter, rho_iter, frozen, u_n, dt, f_ext, source)
    return VectorField(state_iter.grid, sum(terms[t] for t in F1_TERMS))


def momentum_matrix(frozen: FrozenCoefficients, dt: float) -> sp.csr_matrix:
    g = frozen.rho0.grid
    mass = np.tile(frozen.rho0.values.ravel() / dt, g.dim)
    return (sp.diags(mass) - viscous_operator(frozen.eta0, frozen.lambda0)).tocsr()


def assemble_momentum(frozen: FrozenCoefficients, dt: float, rhs: VectorField, u_n: VectorField) -> linsys.SparseSystem:
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    b = (rhs.values + frozen.rho0.values * u_n.values / dt).ravel()
    template = frozen.system(('momentum', dt), lambda: linsys.seal(momentum_matrix(frozen, dt), np.zeros(b.size)))
    return template.with_rhs(b)


def solve_momentum(frozen: FrozenCoefficients, dt: float, state_iter: State, rho_iter: ScalarField, u_n: VectorField,
                   c_next: ScalarField, mu_next: ScalarField, f_ext: Optional[np.ndarray] = None,
                   tol: float = linsys.DEFAULT_TOL, source: Optional[np.ndarray] = None) -> VectorField:
    F1 = compute_F1(state_iter, rho_iter, frozen, u_n, dt, f_ext, source)
    rhs = VectorField(state_iter.grid, F1.values - coupling_terms(frozen, c_next, mu_next).values)
    sys = assemble_momentum(frozen, dt, rhs, u_n)
    result = linsys.solve(sys, tol=tol)
    return apply_velocity_bc(VectorField(state_iter.grid, result.x.reshape(u_n.values.shape)))
