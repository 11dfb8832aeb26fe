import numpy as np
import pytest

from mesh import integrate, make_grid, scalar_field, vector_field
from transport import (CFLViolation, TransportError, advance_density, cell_sample_points, cfl_number,
                       characteristics_oracle, min_density)


def random_flow(grid, rng, scale=1.0):
    return vector_field(grid, scale * (rng.random((grid.dim,) + grid.shape) - 0.5))


def test_mass_is_conserved_to_round_off(grid2d, rng):
    rho = scalar_field(grid2d, 1.0 + rng.random(grid2d.shape))
    u = random_flow(grid2d, rng)
    new = advance_density(rho, u, 0.01)
    assert abs(integrate(new) - integrate(rho)) <= 1e-14 * integrate(rho)


def test_positivity_under_cfl(grid2d, rng):
    rho = scalar_field(grid2d, rng.random(grid2d.shape) + 1e-3)
    u = random_flow(grid2d, rng, scale=4.0)
    dt = 0.9 / (sum(np.max(np.abs(u.values[a])) / grid2d.h[a] for a in range(2)))
    assert min_density(advance_density(rho, u, dt)) >= 0.0


def test_cfl_violation_is_raised(grid1d):
    u = vector_field(grid1d, np.ones((1,) + grid1d.shape))
    assert cfl_number(u, 1.0 / 32) == pytest.approx(1.0)
    with pytest.raises(CFLViolation) as exc:
        advance_density(scalar_field(grid1d, 1.0), u, 1.0 / 32)
    assert exc.value.cfl > exc.value.limit


def test_negative_input_density_rejected(grid1d):
    rho = scalar_field(grid1d, 1.0)
    rho.values[0] = -1.0
    with pytest.raises(TransportError):
        advance_density(rho, vector_field(grid1d, 0.0), 1e-3)


def test_uniform_density_in_discretely_solenoidal_flow():
    g = make_grid([1.0, 1.0], [20, 20], ['slip'] * 4)
    X, Y = g.cell_centers()
    u = vector_field(g, np.stack([np.sin(np.pi * X) * np.cos(np.pi * Y), -np.cos(np.pi * X) * np.sin(np.pi * Y)]))
    new = advance_density(scalar_field(g, 1.0), u, 0.01)
    assert np.max(np.abs(new.values - 1.0)) < 1e-14


def test_source_enters_additively(grid1d):
    new = advance_density(scalar_field(grid1d, 1.0), vector_field(grid1d, 0.0), 0.1, source=np.full(grid1d.shape, 2.0))
    assert np.allclose(new.values, 1.2)


def test_oracle_at_rest_and_at_time_zero(grid2d, rng):
    rho0 = scalar_field(grid2d, 1.0 + rng.random(grid2d.shape))
    pts = cell_sample_points(grid2d)
    assert np.allclose(characteristics_oracle(rho0, vector_field(grid2d, 0.0), 0.3, pts), rho0.values.ravel())
    u = random_flow(grid2d, rng)
    assert np.allclose(characteristics_oracle(rho0, u, 0.0, pts), rho0.values.ravel())


def _upwind_error(n, t_end=0.25):
    g = make_grid([1.0, 1.0], [n, n], ['slip'] * 4)
    X, Y = g.cell_centers()
    u = vector_field(g, np.stack([0.2 * np.sin(np.pi * X), 0.1 * np.sin(np.pi * Y)]))
    rho0 = scalar_field(g, 1.0 + 0.2 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    steps = n // 4
    dt = t_end / steps
    rho = rho0
    for _ in range(steps):
        rho = advance_density(rho, u, dt)
    exact = characteristics_oracle(rho0, u, t_end, cell_sample_points(g)).reshape(g.shape)
    return np.max(np.abs(rho.values - exact))


def test_upwind_converges_to_characteristics_at_first_order():
    errors = [_upwind_error(n) for n in (16, 32, 64)]
    ratios = [errors[i] / errors[i + 1] for i in range(2)]
    assert all(1.7 <= r <= 2.3 for r in ratios), (errors, ratios)
