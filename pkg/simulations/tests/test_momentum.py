import dataclasses

import numpy as np
import pytest

from mesh import discrete_l2, make_grid, scalar_field, vector_field
from material import State, capillary_force, chemical_potential, load_material
from transport import advance_density
from chsolver import freeze_coefficients
from momentum import F1_TERMS, compute_F1, coupling_terms, f1_terms, momentum_matrix, solve_momentum
from stepper import StepperConfig, picard_step
import linsys


def make_state(laws, grid, rho, u, c):
    rho_f, c_f = scalar_field(grid, rho), scalar_field(grid, c)
    return State(grid, rho_f, vector_field(grid, u), c_f, chemical_potential(laws, rho_f, c_f))


def viscous_symbol(q, h, dt, eta, lam, rho):
    lam_q = 4.0 / h ** 2 * np.sin(q * np.pi * h / 2.0) ** 2
    return 1.0 / (1.0 + dt * (2 * eta + lam) * lam_q / rho)


@pytest.mark.parametrize('q', [1, 2])
def test_sine_mode_viscous_amplification(q):
    laws = load_material('constant_coefficients', {'K': 0.0, 'eta': 0.1, 'lam': 0.05})
    g = make_grid([1.0], [64], ['noslip', 'noslip'])
    dt = 1e-3
    u0 = 1e-10 * np.sin(q * np.pi * g.cell_centers()[0])
    state = make_state(laws, g, 1.0, u0[None], 0.0)
    frozen = freeze_coefficients(laws, state)
    rho_k = advance_density(state.rho, state.u, dt)
    u1 = solve_momentum(frozen, dt, state, rho_k, state.u, state.c, state.mu, tol=1e-13)
    G = viscous_symbol(q, g.h[0], dt, 0.1, 0.05, 1.0)
    assert discrete_l2(u1.values[0] - G * u0, g) <= 1e-10 * discrete_l2(u0, g)


def test_rest_state_stays_at_rest(grid2d):
    laws = load_material('default_logrho_doublewell')
    state = make_state(laws, grid2d, 1.0, 0.0, 0.2)
    frozen = freeze_coefficients(laws, state)
    u1 = solve_momentum(frozen, 1e-3, state, state.rho, state.u, state.c, state.mu)
    assert np.max(np.abs(u1.values)) < 1e-13


def test_f1_terms_and_capillary_force_agree_at_the_base_state(grid2d):
    laws = load_material('default_logrho_doublewell', {'eps': 0.05, 'eps_rho_exponent': 1.0})
    X, Y = grid2d.cell_centers()
    rho = 1.0 + 0.1 * np.cos(np.pi * X)
    c = 0.3 * np.cos(np.pi * X) * np.cos(np.pi * Y)
    state = make_state(laws, grid2d, rho, 0.0, c)
    frozen = freeze_coefficients(laws, state)
    terms = f1_terms(state, state.rho, frozen, state.u, 1e-3)
    assert set(terms) == set(F1_TERMS)
    for name in ('B1', 'B2', 'Bmu'):
        assert np.max(np.abs(terms[name])) < 1e-12
    rhs = compute_F1(state, state.rho, frozen, state.u, 1e-3).values - coupling_terms(frozen, state.c, state.mu).values
    force = capillary_force(laws, state.rho, state.c, state.mu).values
    assert np.allclose(rhs, -force, atol=1e-10)


def test_body_force_and_source_enter_low_order_term(grid1d):
    laws = load_material('constant_coefficients')
    state = make_state(laws, grid1d, 2.0, 0.0, 0.0)
    frozen = freeze_coefficients(laws, state)
    f = np.full((1,) + grid1d.shape, 3.0)
    s = np.full((1,) + grid1d.shape, 0.5)
    base = f1_terms(state, state.rho, frozen, state.u, 1e-3)['B_low']
    forced = f1_terms(state, state.rho, frozen, state.u, 1e-3, f_ext=f, source=s)['B_low']
    assert np.allclose(forced - base, 2.0 * 3.0 + 0.5)


def test_momentum_matrix_has_positive_diagonal(grid2d):
    laws = load_material('constant_coefficients', {'eta': 0.2, 'lam': 0.1})
    state = make_state(laws, grid2d, 1.5, 0.0, 0.0)
    A = momentum_matrix(freeze_coefficients(laws, state), 1e-2)
    assert A.shape == (2 * grid2d.size, 2 * grid2d.size)
    assert np.all(A.diagonal() > 0.0)


@pytest.mark.parametrize('seed', range(5))
def test_momentum_operator_is_coercive_for_positive_coefficients(seed):
    rng = np.random.default_rng(seed)
    g = make_grid([1.0, 1.0], [12, 12], ['noslip'] * 4)
    laws = load_material('constant_coefficients')
    frozen = dataclasses.replace(
        freeze_coefficients(laws, make_state(laws, g, 1.0, 0.0, 0.0)),
        rho0=scalar_field(g, 0.5 + rng.random(g.shape)), eta0=scalar_field(g, 0.05 + rng.random(g.shape)),
        lambda0=scalar_field(g, rng.random(g.shape)), _systems={})
    A = momentum_matrix(frozen, 1.0)
    for _ in range(3):
        x = rng.standard_normal(A.shape[0])
        assert x @ (A @ x) > 0.0
    b = rng.standard_normal(A.shape[0])
    result = linsys.solve(linsys.seal(A, b), tol=1e-10)
    assert np.all(np.isfinite(result.x))
    assert np.linalg.norm(A @ result.x - b) <= 1e-10 * np.linalg.norm(b)


def test_mirror_symmetric_data_give_a_mirror_symmetric_step():
    laws = load_material('default_logrho_doublewell', {'eps': 0.02})
    g = make_grid([1.0, 1.0], [16, 16], ['noslip'] * 4)
    X, Y = g.cell_centers()
    rho = 1.0 + 0.05 * np.cos(2 * np.pi * X) * np.cos(np.pi * Y)
    c = 0.2 * np.cos(2 * np.pi * X) * np.cos(np.pi * Y)
    u = 0.01 * np.stack([np.sin(2 * np.pi * X) * np.sin(np.pi * Y), np.sin(np.pi * X) * np.sin(np.pi * Y)])
    nxt, report = picard_step(laws, make_state(laws, g, rho, u, c), 1e-3, StepperConfig(picard_tol=1e-10))
    assert report.converged
    u1 = nxt.u.values
    scale = np.max(np.abs(u1))
    assert np.allclose(u1[0][::-1], -u1[0], atol=1e-12 * scale)
    assert np.allclose(u1[1][::-1], u1[1], atol=1e-12 * scale)
    assert np.allclose(nxt.c.values[::-1], nxt.c.values, atol=1e-13)
