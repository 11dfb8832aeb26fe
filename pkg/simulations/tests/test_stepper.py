import math
import os

import numpy as np
import pytest

from mesh import discrete_l2, make_grid, scalar_field, vector_field
from material import State, chemical_potential, load_material
from nsch_cli import build_problem, run_metrics
from nsch_config import load_config
from scenarios import body_force, scenario
from stepper import (DIAGNOSTICS_COLUMNS, InitialDataError, PicardReport, StepperConfig, picard_step, run_simulation,
                     validate_initial_data)


def rest_state(laws, grid, rho, u, c):
    rho_f, c_f = scalar_field(grid, rho), scalar_field(grid, c)
    return State(grid, rho_f, vector_field(grid, u), c_f, chemical_potential(laws, rho_f, c_f))


def test_mean_contraction():
    assert PicardReport(deltas=[1.0, 0.1, 0.01]).mean_contraction == pytest.approx(0.1)
    assert PicardReport(deltas=[1.0]).mean_contraction == 0.0


def test_equilibrium_is_preserved(grid2d):
    laws = load_material('default_logrho_doublewell', {'beta': 1.0, 'eps': 0.01})
    state0, forcing = scenario('equilibrium', {'c_mean': 0.2}, grid2d, laws)
    cfg = StepperConfig(dt0=1e-3, t_end=0.1)
    result = run_simulation(laws, state0, cfg, forcing)
    assert result.status == 'ok'
    assert len(result.rows) == 100
    end = result.snapshots[-1]
    assert np.max(np.abs(end.u.values)) < 1e-13
    assert np.max(np.abs(end.c.values - 0.2)) < 1e-13
    assert np.max(np.abs(end.rho.values - 1.0)) < 1e-13
    first = result.rows[0]
    for column in DIAGNOSTICS_COLUMNS[1:]:
        ref = getattr(first, column)
        for row in result.rows:
            assert abs(getattr(row, column) - ref) <= 1e-12 * max(1.0, abs(ref)), (column, row.t)
    assert all(r.picard_iters == 1 for r in result.rows)
    assert all(abs(r.energy_residual) < 1e-10 for r in result.rows)


def test_cahn_hilliard_mode_follows_the_discrete_symbol_for_fifty_steps(config_dir):
    cfg = load_config(os.path.join(config_dir, 'ch_eigenmode.cfg'))
    g, laws, state0, forcing = build_problem(cfg)
    result = run_simulation(laws, state0, cfg.stepper, forcing)
    assert result.status == 'ok'
    assert len(result.rows) == 50
    q, dt, h = 2, cfg.stepper.dt0, g.h[0]
    mode = np.cos(q * np.pi * g.cell_centers()[0])
    amp = [np.sum(s.c.values * mode) / np.sum(mode * mode) for s in (state0, result.snapshots[-1])]
    lam = 4.0 / h ** 2 * np.sin(q * np.pi * h / 2.0) ** 2
    G = 1.0 / (1.0 + dt * 1.0 * 0.01 * lam ** 2 / 1.0)
    assert amp[1] / amp[0] == pytest.approx(G ** 50, rel=1e-2)
    assert amp[1] / amp[0] < 0.95


def test_cahn_hilliard_mode_decays_at_the_discrete_rate():
    laws = load_material('constant_coefficients', {'alpha': 0.0, 'eps': 0.01, 'gamma': 0.5})
    g = make_grid([1.0], [64], ['noslip', 'noslip'])
    dt, q = 1e-4, 2
    c0 = 1e-6 * np.cos(q * np.pi * g.cell_centers()[0])
    state = rest_state(laws, g, 2.0, 0.0, c0)
    nxt, report = picard_step(laws, state, dt, StepperConfig(picard_tol=1e-13, linear_tol=1e-13))
    assert report.converged
    lam = 4.0 / g.h[0] ** 2 * np.sin(q * np.pi * g.h[0] / 2.0) ** 2
    G = 1.0 / (1.0 + dt * 0.5 * 0.01 * lam ** 2 / 2.0)
    assert discrete_l2(nxt.c.values - G * c0, g) <= 1e-10 * discrete_l2(c0, g)


def test_viscous_mode_decays_at_the_discrete_rate():
    laws = load_material('constant_coefficients', {'K': 0.0, 'eta': 0.1, 'lam': 0.05})
    g = make_grid([1.0], [64], ['noslip', 'noslip'])
    dt = 1e-3
    u0 = 1e-9 * np.sin(np.pi * g.cell_centers()[0])
    state = rest_state(laws, g, 1.0, u0[None], 0.0)
    nxt, report = picard_step(laws, state, dt, StepperConfig(picard_tol=1e-14, linear_tol=1e-13))
    lam = 4.0 / g.h[0] ** 2 * np.sin(np.pi * g.h[0] / 2.0) ** 2
    G = 1.0 / (1.0 + dt * 0.25 * lam)
    assert discrete_l2(nxt.u.values[0] - G * u0, g) <= 1e-10 * discrete_l2(u0, g)


def test_converged_step_satisfies_the_unsplit_equations():
    laws = load_material('default_logrho_doublewell')
    g = make_grid([1.0, 1.0], [16, 16], ['noslip'] * 4)
    state, forcing = scenario('compressible_spinodal', None, g, laws, seed=7)
    cfg = StepperConfig(dt0=1e-4, t_end=3e-4, picard_tol=1e-12, linear_tol=1e-13)
    result = run_simulation(laws, state, cfg, forcing)
    assert result.status == 'ok'
    for res in result.residuals:
        assert max(res.r_momentum, res.r_ch, res.r_mu) <= 1e-8, res
        assert res.r_mass <= 1e-11
    masses = [r.mass for r in result.rows]
    assert max(masses) - min(masses) <= 1e-13 * masses[0]


@pytest.mark.slow
def test_contraction_improves_with_smaller_steps():
    laws = load_material('default_logrho_doublewell')
    g = make_grid([1.0, 1.0], [24, 24], ['noslip'] * 4)
    state, _ = scenario('compressible_spinodal', {'c_amplitude': 0.2, 'rho_amplitude': 0.1}, g, laws, seed=3)
    cfg = StepperConfig(picard_tol=1e-12, max_picard=40)
    factors = [picard_step(laws, state, dt, cfg)[1].mean_contraction for dt in (4e-4, 2e-4, 1e-4, 5e-5)]
    assert all(b < a for a, b in zip(factors, factors[1:])), factors


def _fast_flow(max_halvings):
    laws = load_material('constant_coefficients', {'eta': 0.1})
    g = make_grid([1.0], [32], ['noslip', 'noslip'])
    state, forcing = scenario('density_drain', {'velocity': 5.0}, g, laws)
    cfg = StepperConfig(dt0=2e-2, t_end=2e-2, max_halvings=max_halvings)
    return run_simulation(laws, state, cfg, forcing)


def test_cfl_violation_halves_the_step():
    result = _fast_flow(max_halvings=4)
    assert result.status == 'ok'
    assert result.halvings >= 2
    assert result.snapshots[-1].t == pytest.approx(2e-2)


def test_exhausted_halvings_end_the_run():
    result = _fast_flow(max_halvings=1)
    assert result.status == 'blowup'
    assert 'halvings' in result.message
    assert len(result.snapshots) == 1


def test_density_drain_reaches_the_floor():
    laws = load_material('constant_coefficients', {'K': 0.01, 'eta': 0.01})
    g = make_grid([1.0], [32], ['noslip', 'noslip'])
    state, forcing = scenario('density_drain', None, g, laws, forcing=body_force('drain', {'strength': 10.0}))
    cfg = StepperConfig(dt0=1e-3, t_end=1.0, density_floor=0.5)
    result = run_simulation(laws, state, cfg, forcing)
    assert result.status == 'blowup'
    assert 'density floor' in result.message
    assert result.snapshots[-1].t < 1.0
    assert np.min(result.snapshots[-1].rho.values) > 0.5
    masses = [r.mass for r in result.rows]
    assert max(masses) - min(masses) <= 1e-12


def test_initial_data_checks(grid1d, grid2d):
    laws = load_material('constant_coefficients')
    state, forcing = scenario('equilibrium', None, grid2d, laws)
    assert validate_initial_data(state, laws, forcing).ok

    ramp = rest_state(laws, grid1d, 1.0, 0.0, grid1d.cell_centers()[0])
    report = validate_initial_data(ramp, laws)
    flagged = {v.face: v for v in report.violations if v.kind == 'dnu_c'}
    assert set(flagged) == {'x_lo', 'x_hi'}
    for v in flagged.values():
        assert v.magnitude == pytest.approx(1.0)

    bad = rest_state(laws, grid1d, 1.0, 0.0, 0.0)
    bad.rho.values[3] = 0.0
    with pytest.raises(InitialDataError):
        validate_initial_data(bad, laws)


# scenario -> (law, law params, scenario params, grid, largest dt)
ENERGY_CASES = {
    'viscous_eigenmode': ('constant_coefficients', {'K': 0.0, 'eta': 0.1, 'lam': 0.05}, {'amplitude': 1e-3},
                          ([1.0], [64], ['noslip'] * 2), 8e-3),
    'compressible_spinodal': ('default_logrho_doublewell', None, None, ([1.0, 1.0], [24, 24], ['noslip'] * 4), 4e-4),
}


@pytest.mark.slow
@pytest.mark.parametrize('name', sorted(ENERGY_CASES))
def test_energy_residual_is_first_order_in_dt(name):
    law, law_params, params, grid_args, dt_max = ENERGY_CASES[name]
    laws = load_material(law, law_params)
    state0, forcing = scenario(name, params, make_grid(*grid_args), laws, seed=3)
    finals = []
    for k in range(4):
        cfg = StepperConfig(dt0=dt_max / 2 ** k, t_end=2 * dt_max, picard_tol=1e-12, linear_tol=1e-13,
                            max_picard=40)
        result = run_simulation(laws, state0, cfg, forcing)
        assert result.status == 'ok', result.message
        assert run_metrics(laws, state0, result)['energy_increase_violations'] == 0
        finals.append(result.rows[-1].energy_residual)
    # the dt-independent part (stencil mismatch of the dissipation) cancels in the differences
    diffs = [abs(finals[k] - finals[k + 1]) for k in range(3)]
    orders = [math.log2(diffs[k] / diffs[k + 1]) for k in range(2)]
    assert orders[-1] >= 0.9, (finals, orders)
