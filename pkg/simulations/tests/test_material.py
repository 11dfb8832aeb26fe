import dataclasses
import math

import numpy as np
import pytest

from mesh import SLIP, discrete_l2, make_grid, scalar_field, vector_field
from material import (MaterialError, State, capillary_identity_residual, check_partials, chemical_potential,
                      law_parameters, load_material, pressure, stress_capillary, stress_viscous, total_energy)
from mms_convergence import ManufacturedSolution


def test_load_default_law():
    laws = load_material('default_logrho_doublewell')
    assert laws.params['K'] == 1.0 and laws.params['eps'] == 0.01
    assert 'eps_rho_exponent' in law_parameters('default_logrho_doublewell')


def test_unknown_law_and_parameter():
    with pytest.raises(MaterialError, match='unknown material law'):
        load_material('van_der_waals')
    with pytest.raises(MaterialError, match='no parameter'):
        load_material('constant_coefficients', {'beta': 1.0})


@pytest.mark.parametrize('name,params', [
    ('default_logrho_doublewell', {}),
    ('default_logrho_doublewell', {'eps_rho_exponent': 1.0}),
    ('constant_coefficients', {'alpha': 2.0}),
    ('constant_coefficients', {'K': 0.0}),
])
def test_builtin_partials_pass_self_check(name, params):
    assert check_partials(load_material(name, params, check=False)) == []


def test_wrong_partial_is_caught():
    laws = load_material('default_logrho_doublewell')
    broken = dataclasses.replace(laws, psibar_c=lambda r, c: c + 0.0 * r)
    failures = check_partials(broken)
    assert any(f.startswith('psibar_c') for f in failures)


def test_guarded_coefficients():
    laws = load_material('constant_coefficients', {'eta': -1.0})
    with pytest.raises(MaterialError, match='eta'):
        laws.viscosities(np.ones(3), np.zeros(3))
    laws = load_material('constant_coefficients', {'eta': 0.1, 'lam': -0.5})
    with pytest.raises(MaterialError, match='2 eta'):
        laws.viscosities(np.ones(3), np.zeros(3))


def test_pressure_of_log_density_is_linear():
    laws = load_material('default_logrho_doublewell', {'K': 2.0})
    rho = np.array([0.5, 1.0, 3.0])
    assert np.allclose(pressure(laws, rho, np.zeros(3)), 2.0 * rho)


def test_chemical_potential_of_constant_state(grid2d):
    laws = load_material('default_logrho_doublewell', {'beta': 2.0})
    mu = chemical_potential(laws, scalar_field(grid2d, 1.3), scalar_field(grid2d, 0.5))
    assert np.allclose(mu.values, 2.0 * 0.5 * (0.25 - 1.0))
    assert mu.ghost_filled


def test_total_energy_of_rest_state(grid2d):
    laws = load_material('default_logrho_doublewell')
    g = grid2d
    state = State(g, scalar_field(g, 1.0), vector_field(g, 0.0), scalar_field(g, 0.0), scalar_field(g, 0.0))
    assert total_energy(laws, state) == pytest.approx(0.25)


def test_viscous_stress_is_symmetric(grid2d, rng):
    laws = load_material('constant_coefficients', {'lam': 0.2})
    g = grid2d
    u = vector_field(g, rng.random((2,) + g.shape))
    S = stress_viscous(laws, u, scalar_field(g, 1.0), scalar_field(g, 0.0)).values
    assert np.allclose(S[0, 1], S[1, 0])


def test_state_rejects_mixed_grids(grid1d, grid2d):
    with pytest.raises(MaterialError):
        State(grid1d, scalar_field(grid2d, 1.0), vector_field(grid1d, 0.0), scalar_field(grid1d, 0.0),
              scalar_field(grid1d, 0.0))


def _smooth_state(laws, n):
    g = make_grid([1.0, 1.0], [n, n], ['noslip'] * 4)
    X, Y = g.cell_centers()
    rho = scalar_field(g, 1.0 + 0.2 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    c = scalar_field(g, 0.4 * np.cos(np.pi * X) * np.cos(2 * np.pi * Y))
    return State(g, rho, vector_field(g, 0.0), c, chemical_potential(laws, rho, c))


def test_capillary_identity_converges():
    laws = load_material('default_logrho_doublewell', {'eps': 0.05, 'eps_rho_exponent': 1.0})
    errors = [discrete_l2(capillary_identity_residual(laws, _smooth_state(laws, n))) for n in (16, 32, 64)]
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert all(o >= 1.0 for o in orders), (errors, orders)


def _rotation(grid):
    X, Y = grid.cell_centers()
    return vector_field(grid, np.stack([Y, -X]))


def test_rigid_rotation_has_no_viscous_stress():
    laws = load_material('constant_coefficients', {'eta': 1.0, 'lam': 0.0})
    g = make_grid([1.0, 1.0], [12, 12], ['noslip'] * 4)
    S = stress_viscous(laws, _rotation(g), scalar_field(g, 1.0), scalar_field(g, 0.0)).values
    assert np.max(np.abs(S[:, :, 1:-1, 1:-1])) < 1e-12


def test_uniaxial_stretch_stress():
    laws = load_material('constant_coefficients', {'eta': 1.0, 'lam': 0.0})
    g = make_grid([1.0, 1.0], [12, 12], ['slip'] * 4)
    X, _ = g.cell_centers()
    S = stress_viscous(laws, vector_field(g, np.stack([X, np.zeros(g.shape)])), scalar_field(g, 1.0),
                       scalar_field(g, 0.0)).values[:, :, 1:-1, 1:-1]
    assert np.allclose(S[0, 0], 2.0, atol=1e-12)
    assert np.allclose(S[[0, 1, 1], [1, 0, 1]], 0.0, atol=1e-12)


def test_capillary_stress_of_unit_gradient():
    laws = load_material('constant_coefficients', {'K': 0.0, 'eps': 1.0})
    g = make_grid([1.0, 1.0], [12, 12], ['slip'] * 4)
    X, _ = g.cell_centers()
    P = stress_capillary(laws, scalar_field(g, 1.0), scalar_field(g, X)).values[:, :, 1:-1, 1:-1]
    assert np.allclose(P[0, 0], -1.0, atol=1e-12)
    assert np.allclose(P[[0, 1, 1], [1, 0, 1]], 0.0, atol=1e-12)


def test_capillary_stress_of_flat_concentration_is_pressure(grid2d):
    laws = load_material('default_logrho_doublewell', {'K': 2.0})
    rho = scalar_field(grid2d, 1.5)
    P = stress_capillary(laws, rho, scalar_field(grid2d, 0.3)).values
    assert np.allclose(P[0, 0], -3.0) and np.allclose(P[1, 1], -3.0)
    assert np.allclose(P[0, 1], 0.0)


def test_capillary_identity_on_manufactured_fields():
    laws = load_material('default_logrho_doublewell', {'beta': 0.5, 'eps': 0.02, 'eps_rho_exponent': 1.0})
    errors = []
    for n in (16, 32, 64):
        g = make_grid([1.0, 1.0], [n, n], [SLIP] * 4)
        state = ManufacturedSolution(laws, g.extents, rho_amplitude=0.2, c_amplitude=0.3).exact_state(0.5, g)
        assert np.ptp(state.rho.values) > 0.2
        errors.append(discrete_l2(capillary_identity_residual(laws, state)))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert all(o >= 1.0 for o in orders), (errors, orders)
