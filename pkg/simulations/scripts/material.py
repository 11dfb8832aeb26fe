"""Constitutive laws: free energy, pressure, chemical potential, viscous and capillary stress.

Built-in laws (addressable by name from the config):
 - default_logrho_doublewell: psibar = K ln(rho) + (beta/4)(c^2 - 1)^2, giving pi = K rho;
   eps = eps * rho**p (p = eps_rho_exponent, 0 by default); gamma, eta, lambda constant.
 - constant_coefficients: psibar = K ln(rho) + (alpha/2) c^2; all coefficients constant.

A law carries pointwise numpy callables for every partial the scheme consumes and a
sympy form of the same functions for manufactured-solution sources. load_material
runs a finite-difference self-check of the supplied partials before handing it out.
"""
from __future__ import annotations
import inspect, logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional
import numpy as np
import sympy
from mesh import (Grid, ScalarField, VectorField, TensorField, apply_scalar_bc, apply_velocity_bc,
                  div_coeff, gradient, integrate, strain_rate, divergence, tensor_divergence, hessian_vec)

log = logging.getLogger(__name__)

Fn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialLaws:
    name: str
    params: Dict[str, float]
    eta: Fn
    lam: Fn
    gamma: Fn
    eps: Fn
    eps_rho: Fn
    eps_c: Fn
    eps_rhorho: Fn
    eps_rhoc: Fn
    psibar: Fn
    psibar_rho: Fn
    psibar_c: Fn
    psibar_rhorho: Fn
    psibar_rhoc: Fn
    symbolic: Optional[Callable[[sympy.Expr, sympy.Expr], Dict[str, sympy.Expr]]] = field(default=None, compare=False)

    # guarded coefficient evaluation
    def viscosities(self, rho, c):
        eta, lam = _bcast(self.eta(rho, c), rho), _bcast(self.lam(rho, c), rho)
        if np.any(eta <= 0.0):
            raise MaterialError(f'{self.name}: eta must be positive (min {eta.min():.3e})')
        if np.any(2.0 * eta + lam <= 0.0):
            raise MaterialError(f'{self.name}: 2 eta + lambda must be positive (min {(2 * eta + lam).min():.3e})')
        return eta, lam

    def capillarity(self, rho, c):
        eps = _bcast(self.eps(rho, c), rho)
        if np.any(eps <= 0.0):
            raise MaterialError(f'{self.name}: eps must be positive (min {eps.min():.3e})')
        return eps

    def mobility(self, rho, c):
        gamma = _bcast(self.gamma(rho, c), rho)
        if np.any(gamma <= 0.0):
            raise MaterialError(f'{self.name}: gamma must be positive (min {gamma.min():.3e})')
        return gamma


def _bcast(v, like) -> np.ndarray:
    return np.broadcast_to(np.asarray(v, dtype=float), np.shape(like)).copy()


def _zero(rho, c):
    return np.zeros(np.broadcast(rho, c).shape)


def _const(value):
    return lambda rho, c: np.full(np.broadcast(rho, c).shape, float(value))


# --------------------------------------------------------------------------- built-in laws

def default_logrho_doublewell(K=1.0, beta=1.0, eps=0.01, gamma=1.0, eta=0.1, lam=0.0,
                              eps_rho_exponent=0.0) -> MaterialLaws:
    p = float(eps_rho_exponent)

    def symbolic(r, c):
        return {'psibar': K * sympy.log(r) + sympy.Rational(1, 4) * beta * (c ** 2 - 1) ** 2,
                'eps': eps * r ** p, 'gamma': sympy.Float(gamma), 'eta': sympy.Float(eta), 'lam': sympy.Float(lam)}

    return MaterialLaws(
        name='default_logrho_doublewell',
        params=dict(K=K, beta=beta, eps=eps, gamma=gamma, eta=eta, lam=lam, eps_rho_exponent=p),
        eta=_const(eta), lam=_const(lam), gamma=_const(gamma),
        eps=lambda r, c: eps * r ** p + 0.0 * c,
        eps_rho=lambda r, c: p * eps * r ** (p - 1.0) + 0.0 * c,
        eps_c=_zero,
        eps_rhorho=lambda r, c: p * (p - 1.0) * eps * r ** (p - 2.0) + 0.0 * c,
        eps_rhoc=_zero,
        psibar=lambda r, c: K * np.log(r) + 0.25 * beta * (c * c - 1.0) ** 2,
        psibar_rho=lambda r, c: K / r + 0.0 * c,
        psibar_c=lambda r, c: beta * c * (c * c - 1.0) + 0.0 * r,
        psibar_rhorho=lambda r, c: -K / (r * r) + 0.0 * c,
        psibar_rhoc=_zero,
        symbolic=symbolic,
    )


def constant_coefficients(K=1.0, alpha=0.0, eps=0.01, gamma=1.0, eta=0.1, lam=0.0) -> MaterialLaws:
    def symbolic(r, c):
        return {'psibar': K * sympy.log(r) + sympy.Rational(1, 2) * alpha * c ** 2,
                'eps': sympy.Float(eps), 'gamma': sympy.Float(gamma), 'eta': sympy.Float(eta), 'lam': sympy.Float(lam)}

    return MaterialLaws(
        name='constant_coefficients',
        params=dict(K=K, alpha=alpha, eps=eps, gamma=gamma, eta=eta, lam=lam),
        eta=_const(eta), lam=_const(lam), gamma=_const(gamma), eps=_const(eps),
        eps_rho=_zero, eps_c=_zero, eps_rhorho=_zero, eps_rhoc=_zero,
        psibar=lambda r, c: K * np.log(r) + 0.5 * alpha * c * c,
        psibar_rho=lambda r, c: K / r + 0.0 * c,
        psibar_c=lambda r, c: alpha * c + 0.0 * r,
        psibar_rhorho=lambda r, c: -K / (r * r) + 0.0 * c,
        psibar_rhoc=_zero,
        symbolic=symbolic,
    )


LAWS = {
    'default_logrho_doublewell': default_logrho_doublewell,
    'constant_coefficients': constant_coefficients,
}


def law_parameters(name: str):
    if name not in LAWS:
        raise MaterialError(f'unknown material law {name!r} (known: {", ".join(sorted(LAWS))})')
    return list(inspect.signature(LAWS[name]).parameters)


def load_material(name: str, params: Optional[Dict[str, float]] = None, check: bool = True, seed: int = 0) -> MaterialLaws:
    allowed = law_parameters(name)
    params = dict(params or {})
    unknown = [k for k in params if k not in allowed]
    if unknown:
        raise MaterialError(f'law {name!r} has no parameter(s) {", ".join(unknown)}')
    laws = LAWS[name](**params)
    if check:
        bad = check_partials(laws, seed=seed)
        if bad:
            raise MaterialError(f'law {name!r}: supplied partials disagree with finite differences: ' + '; '.join(bad))
    return laws


PARTIAL_PAIRS = (
    ('psibar_rho', 'psibar', 'rho'), ('psibar_c', 'psibar', 'c'),
    ('psibar_rhorho', 'psibar_rho', 'rho'), ('psibar_rhoc', 'psibar_rho', 'c'),
    ('eps_rho', 'eps', 'rho'), ('eps_c', 'eps', 'c'),
    ('eps_rhorho', 'eps_rho', 'rho'), ('eps_rhoc', 'eps_rho', 'c'),
)


def check_partials(laws: MaterialLaws, n_samples: int = 100, rtol: float = 1e-5, seed: int = 0):
    """Compare each supplied partial with a central difference of its parent.

    Samples rho in [0.1, 10], c in [-2, 2]. Returns a list of failure descriptions.
    """
    rng = np.random.default_rng(seed)
    rho = rng.uniform(0.1, 10.0, n_samples)
    c = rng.uniform(-2.0, 2.0, n_samples)
    failures = []
    for dname, pname, var in PARTIAL_PAIRS:
        parent, deriv = getattr(laws, pname), getattr(laws, dname)
        x = rho if var == 'rho' else c
        step = 1e-5 * np.maximum(np.abs(x), 1.0)
        step = np.minimum(step, 0.5 * rho) if var == 'rho' else step
        if var == 'rho':
            fd = (parent(rho + step, c) - parent(rho - step, c)) / (2.0 * step)
        else:
            fd = (parent(rho, c + step) - parent(rho, c - step)) / (2.0 * step)
        exact = _bcast(deriv(rho, c), rho)
        err = np.abs(fd - exact)
        tol = rtol * (np.abs(exact) + 1e-3)
        if np.any(err > tol):
            k = int(np.argmax(err - tol))
            failures.append(f'{dname} at rho={rho[k]:.4g}, c={c[k]:.4g}: supplied {exact[k]:.6g}, fd {fd[k]:.6g}')
    return failures


# --------------------------------------------------------------------------- state

@dataclass
class State:
    grid: Grid
    rho: ScalarField
    u: VectorField
    c: ScalarField
    mu: ScalarField
    t: float = 0.0

    def __post_init__(self):
        for name in ('rho', 'u', 'c', 'mu'):
            if getattr(self, name).grid != self.grid:
                raise MaterialError(f'State.{name} lives on a different grid')

    def fill_ghosts(self) -> 'State':
        apply_scalar_bc(self.rho)
        apply_velocity_bc(self.u)
        apply_scalar_bc(self.c)
        apply_scalar_bc(self.mu)
        return self

    def copy(self) -> 'State':
        return State(self.grid, self.rho.copy(), self.u.copy(), self.c.copy(), self.mu.copy(), self.t)


def _positive_rho(rho) -> np.ndarray:
    r = rho.values if isinstance(rho, ScalarField) else np.asarray(rho)
    if np.any(r <= 0.0):
        raise MaterialError(f'density must be positive (min {r.min():.3e})')
    return r


def _arr(f):
    return f.values if isinstance(f, (ScalarField, VectorField)) else np.asarray(f)


# --------------------------------------------------------------------------- constitutive operations

def pressure(laws: MaterialLaws, rho, c) -> ScalarField:
    r = _positive_rho(rho)
    vals = r * r * _bcast(laws.psibar_rho(r, _arr(c)), r)
    return ScalarField(rho.grid, vals) if isinstance(rho, ScalarField) else vals


def free_energy_density(laws: MaterialLaws, rho, c, grad_c) -> np.ndarray:
    r, cv = _positive_rho(rho), _arr(c)
    g2 = np.sum(_arr(grad_c) ** 2, axis=0)
    return laws.psibar(r, cv) + 0.5 * laws.capillarity(r, cv) * g2


def energy_partials(laws: MaterialLaws, r: np.ndarray, cv: np.ndarray, g2: np.ndarray) -> Dict[str, np.ndarray]:
    """Pointwise psi and its partials in (rho, c) including gradient-energy parts."""
    eps = laws.capillarity(r, cv)
    half = 0.5 * g2
    return {
        'eps': eps,
        'eps_rho': _bcast(laws.eps_rho(r, cv), r),
        'psi': _bcast(laws.psibar(r, cv), r) + eps * half,
        'psi_rho': _bcast(laws.psibar_rho(r, cv), r) + _bcast(laws.eps_rho(r, cv), r) * half,
        'psi_c': _bcast(laws.psibar_c(r, cv), r) + _bcast(laws.eps_c(r, cv), r) * half,
        'psi_rhorho': _bcast(laws.psibar_rhorho(r, cv), r) + _bcast(laws.eps_rhorho(r, cv), r) * half,
        'psi_rhoc': _bcast(laws.psibar_rhoc(r, cv), r) + _bcast(laws.eps_rhoc(r, cv), r) * half,
    }


def capillary_coefficients(laws: MaterialLaws, r: np.ndarray, cv: np.ndarray, g2: np.ndarray) -> Dict[str, np.ndarray]:
    """Coefficients of rho grad(psi + rho psi_rho) = beta (H c).grad c + kappa grad rho + chi grad c.

    beta  = rho^2 eps_rho + rho eps
    kappa = 2 rho psi_rho + rho^2 psi_rhorho
    chi   = rho psi_c + rho^2 psi_rhoc
    """
    e = energy_partials(laws, r, cv, g2)
    return {
        'beta': r * r * e['eps_rho'] + r * e['eps'],
        'kappa': 2.0 * r * e['psi_rho'] + r * r * e['psi_rhorho'],
        'chi': r * e['psi_c'] + r * r * e['psi_rhoc'],
        **e,
    }


def eps_rho_field(laws: MaterialLaws, rho: ScalarField, c: ScalarField) -> ScalarField:
    """eps(rho, c) * rho with Neumann ghosts, the flux coefficient of the mu law."""
    r = _positive_rho(rho)
    return apply_scalar_bc(ScalarField(rho.grid, laws.capillarity(r, c.values) * r))


def chemical_potential(laws: MaterialLaws, rho: ScalarField, c: ScalarField) -> ScalarField:
    """mu = psibar_c + eps_c |grad c|^2 / 2 - div(eps rho grad c) / rho."""
    r = _positive_rho(rho)
    gc = gradient(c).values
    g2 = np.sum(gc * gc, axis=0)
    dpsi_c = _bcast(laws.psibar_c(r, c.values), r) + 0.5 * _bcast(laws.eps_c(r, c.values), r) * g2
    flux = div_coeff(eps_rho_field(laws, rho, c), c).values
    return apply_scalar_bc(ScalarField(rho.grid, dpsi_c - flux / r))


def stress_viscous(laws: MaterialLaws, u: VectorField, rho, c) -> TensorField:
    r = _positive_rho(rho)
    eta, lam = laws.viscosities(r, _arr(c))
    D = strain_rate(u).values
    div = divergence(u).values
    S = 2.0 * eta * D
    for i in range(u.grid.dim):
        S[i, i] += lam * div
    return TensorField(u.grid, S)


def stress_capillary(laws: MaterialLaws, rho: ScalarField, c: ScalarField) -> TensorField:
    r = _positive_rho(rho)
    gc = gradient(c).values
    g2 = np.sum(gc * gc, axis=0)
    eps = laws.capillarity(r, c.values)
    iso = r * r * _bcast(laws.psibar_rho(r, c.values), r) + 0.5 * r * r * _bcast(laws.eps_rho(r, c.values), r) * g2
    P = -r * eps * np.einsum('i...,j...->ij...', gc, gc)
    for i in range(rho.grid.dim):
        P[i, i] -= iso
    return TensorField(rho.grid, P)


def capillary_force(laws: MaterialLaws, rho: ScalarField, c: ScalarField, mu: ScalarField) -> VectorField:
    """-div P written through the chemical potential:
    beta (H c).grad c + kappa grad rho + chi grad c - rho mu grad c."""
    r = _positive_rho(rho)
    gc = gradient(c).values
    g2 = np.sum(gc * gc, axis=0)
    k = capillary_coefficients(laws, r, c.values, g2)
    grho = gradient(rho).values
    hess = hessian_vec(c, gc).values
    force = k['beta'] * hess + k['kappa'] * grho + (k['chi'] - r * mu.values) * gc
    return VectorField(rho.grid, force)


def capillary_identity_residual(laws: MaterialLaws, state: State) -> ScalarField:
    """Per-cell |div P + rho grad(psi + rho psi_rho) - rho mu grad c| with mu from chemical_potential."""
    rho, c = state.rho, state.c
    r = _positive_rho(rho)
    mu = chemical_potential(laws, rho, c)
    gc = gradient(c).values
    g2 = np.sum(gc * gc, axis=0)
    e = energy_partials(laws, r, c.values, g2)
    q = apply_scalar_bc(ScalarField(rho.grid, e['psi'] + r * e['psi_rho']))
    div_p = tensor_divergence(stress_capillary(laws, rho, c)).values
    res = div_p + r * gradient(q).values - r * mu.values * gc
    return ScalarField(rho.grid, np.sqrt(np.sum(res * res, axis=0)))


def kinetic_energy_density(state: State) -> np.ndarray:
    return 0.5 * state.rho.values * np.sum(state.u.values ** 2, axis=0)


def total_energy(laws: MaterialLaws, state: State) -> float:
    psi = free_energy_density(laws, state.rho, state.c, gradient(state.c))
    return integrate(kinetic_energy_density(state) + state.rho.values * psi, state.grid)
