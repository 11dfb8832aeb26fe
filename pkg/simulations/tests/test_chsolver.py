import numpy as np
import pytest

from mesh import discrete_l2, make_grid, scalar_field, vector_field
from material import State, chemical_potential, load_material
from chsolver import assemble_ch_system, ch_matrix, compute_F2, compute_Fmu, freeze_coefficients, solve_ch


def rest_state(laws, grid, c_values, rho=1.0):
    rho_f = scalar_field(grid, rho)
    c = scalar_field(grid, c_values)
    return State(grid, rho_f, vector_field(grid, 0.0), c, chemical_potential(laws, rho_f, c))


def fourth_order_symbol(q, h, dt, gamma, eps, rho):
    lam = 4.0 / h ** 2 * np.sin(q * np.pi * h / 2.0) ** 2
    return 1.0 / (1.0 + dt * gamma * eps * lam ** 2 / rho)


def test_constant_state_is_a_fixed_point(grid2d):
    laws = load_material('default_logrho_doublewell')
    state = rest_state(laws, grid2d, 0.3)
    frozen = freeze_coefficients(laws, state)
    c1, mu1 = solve_ch(frozen, 1e-3, state, state.rho, state.c)
    assert np.allclose(c1.values, 0.3, atol=1e-13)
    assert np.allclose(mu1.values, 0.3 * (0.09 - 1.0), atol=1e-12)


@pytest.mark.parametrize('q,dt', [(1, 1e-4), (2, 1e-4), (3, 1e-3)])
def test_cosine_mode_amplification(q, dt):
    laws = load_material('constant_coefficients', {'alpha': 0.0, 'eps': 0.01, 'gamma': 0.5})
    g = make_grid([1.0], [64], ['noslip', 'noslip'])
    c0 = 1e-2 * np.cos(q * np.pi * g.cell_centers()[0])
    state = rest_state(laws, g, c0, rho=2.0)
    frozen = freeze_coefficients(laws, state)
    c1, mu1 = solve_ch(frozen, dt, state, state.rho, state.c, tol=1e-13)
    G = fourth_order_symbol(q, g.h[0], dt, 0.5, 0.01, 2.0)
    assert discrete_l2(c1.values - G * c0, g) <= 1e-10 * discrete_l2(c0, g)


def test_remainders_vanish_for_constant_coefficients_at_rest(grid1d):
    laws = load_material('constant_coefficients', {'alpha': 0.0})
    c0 = 0.1 * np.cos(np.pi * grid1d.cell_centers()[0])
    state = rest_state(laws, grid1d, c0)
    frozen = freeze_coefficients(laws, state)
    assert np.allclose(compute_F2(state, state.rho, frozen, state.c, 1e-3).values, 0.0, atol=1e-12)
    assert np.allclose(compute_Fmu(state, state.rho, frozen).values, 0.0, atol=1e-12)


def test_source_terms_shift_remainders(grid1d):
    laws = load_material('constant_coefficients', {'alpha': 0.0, 'eps': 0.02, 'gamma': 0.5})
    state = rest_state(laws, grid1d, 0.0)
    frozen = freeze_coefficients(laws, state)
    src = np.full(grid1d.shape, 3.0)
    assert np.allclose(compute_F2(state, state.rho, frozen, state.c, 1e-3, source=src).values, 0.02 / 0.5 * 3.0)
    assert np.allclose(compute_Fmu(state, state.rho, frozen, source=src).values, -3.0)


def test_system_is_symmetric_and_cached(grid2d, rng):
    laws = load_material('default_logrho_doublewell', {'eps_rho_exponent': 1.0})
    state = rest_state(laws, grid2d, 0.1 * rng.random(grid2d.shape), rho=1.0 + 0.1 * rng.random(grid2d.shape))
    frozen = freeze_coefficients(laws, state)
    A = ch_matrix(frozen, 1e-3)
    assert abs(A - A.T).max() < 1e-9 * abs(A).max()
    zero = scalar_field(grid2d, 0.0)
    s1 = assemble_ch_system(frozen, 1e-3, zero, zero, state.c)
    s2 = assemble_ch_system(frozen, 1e-3, zero, zero, state.c)
    assert s1.operator is s2.operator
    assert assemble_ch_system(frozen, 2e-3, zero, zero, state.c).operator is not s1.operator
    with pytest.raises(ValueError):
        assemble_ch_system(frozen, 0.0, zero, zero, state.c)
