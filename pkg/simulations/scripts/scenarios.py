"""Initial-data presets and body-force fields.

Scenarios (parameters with defaults in SCENARIOS):
 - equilibrium: constant rho, c; u = 0.
 - ch_eigenmode: c = c_mean + amplitude cos(mode pi x / Lx), u = 0, rho constant.
 - viscous_eigenmode (1D): u = amplitude sin(mode pi x / Lx), c constant.
 - compressible_spinodal: seeded cosine-mode perturbations of c about c_mean and of rho
   about rho_mean (Neumann compatible by construction), u = 0.
 - manufactured (2D, slip walls): exact fields of mms_convergence.ManufacturedSolution at
   t = 0, with its sources attached to the forcing.
 - density_drain: u = velocity sin(2 pi x / Lx) emptying the walls; pair it with the
   drain forcing to keep the fluid moving until the density floor is crossed.
In every scenario mu starts as the chemical potential of (rho0, c0).
"""
from __future__ import annotations
import logging
from typing import Dict, Optional, Tuple
import numpy as np
from mesh import Grid, SLIP, scalar_field, vector_field
from material import MaterialLaws, State, chemical_potential
from stepper import Forcing
from mms_convergence import ManufacturedSolution

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


SCENARIOS: Dict[str, Dict[str, object]] = {
    'equilibrium': {'rho_mean': 1.0, 'c_mean': 0.0},
    'ch_eigenmode': {'rho_mean': 1.0, 'c_mean': 0.0, 'amplitude': 0.01, 'mode': 2},
    'viscous_eigenmode': {'rho_mean': 1.0, 'c_mean': 0.0, 'amplitude': 0.01, 'mode': 1},
    'compressible_spinodal': {'rho_mean': 1.0, 'rho_amplitude': 0.05, 'c_mean': 0.0, 'c_amplitude': 0.05,
                              'modes': 3},
    'manufactured': {'rho_mean': 1.0, 'c_mean': 0.0, 'u_amplitude': 0.1, 'c_amplitude': 0.1,
                     'rho_amplitude': 0.05, 'time_profile': 'linear'},
    'density_drain': {'rho_mean': 1.0, 'c_mean': 0.0, 'velocity': 5.0},
}

FORCINGS: Dict[str, Dict[str, object]] = {
    'none': {},
    'gravity': {'gx': 0.0, 'gy': -1.0},
    'drain': {'strength': 5.0},
}


def with_defaults(table: Dict[str, Dict[str, object]], name: str, params: Optional[dict], what: str) -> dict:
    if name not in table:
        raise ScenarioError(f'unknown {what} {name!r} (known: {", ".join(sorted(table))})')
    params = dict(params or {})
    unknown = [k for k in params if k not in table[name]]
    if unknown:
        raise ScenarioError(f'{what} {name!r} has no parameter(s) {", ".join(unknown)}')
    merged = dict(table[name])
    merged.update(params)
    return merged


def _state(grid: Grid, laws: MaterialLaws, rho, u, c) -> State:
    rho_f, c_f = scalar_field(grid, rho), scalar_field(grid, c)
    mu = chemical_potential(laws, rho_f, c_f)
    return State(grid, rho_f, vector_field(grid, u), c_f, mu, 0.0)


def _cos_modes(grid: Grid, rng: np.random.Generator, max_mode: int) -> np.ndarray:
    X = grid.cell_centers()
    out = np.zeros(grid.shape)
    ranges = [range(max_mode + 1)] * grid.dim
    for idx in np.ndindex(*[len(r) for r in ranges]):
        if not any(idx):
            continue
        term = rng.uniform(-1.0, 1.0) / float(sum(k * k for k in idx))
        for a, k in enumerate(idx):
            term = term * np.cos(k * np.pi * X[a] / grid.extents[a])
        out += term
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def body_force(name: str, params: Optional[dict] = None) -> Forcing:
    p = with_defaults(FORCINGS, name, params, 'forcing')
    if name == 'none':
        return Forcing()
    if name == 'gravity':
        g_vec = (float(p['gx']), float(p['gy']))

        def gravity(t, grid):
            return np.stack([np.full(grid.shape, g_vec[a]) for a in range(grid.dim)])
        return Forcing('gravity', gravity)

    strength = float(p['strength'])

    def drain(t, grid):
        f = np.zeros((grid.dim,) + grid.shape)
        f[0] = strength * np.sin(2.0 * np.pi * grid.cell_centers()[0] / grid.extents[0])
        return f
    return Forcing('drain', drain)


def scenario(name: str, params: Optional[dict], grid: Grid, laws: MaterialLaws, seed: int = 0,
             forcing: Optional[Forcing] = None) -> Tuple[State, Forcing]:
    p = with_defaults(SCENARIOS, name, params, 'scenario')
    forcing = forcing or Forcing()
    X = grid.cell_centers()
    L = grid.extents
    zeros_u = np.zeros((grid.dim,) + grid.shape)
    rho_mean, c_mean = float(p['rho_mean']), float(p['c_mean'])
    if rho_mean <= 0.0:
        raise ScenarioError(f'rho_mean must be positive, got {rho_mean}')

    if name == 'equilibrium':
        state = _state(grid, laws, rho_mean, zeros_u, c_mean)
    elif name == 'ch_eigenmode':
        c = c_mean + float(p['amplitude']) * np.cos(int(p['mode']) * np.pi * X[0] / L[0])
        state = _state(grid, laws, rho_mean, zeros_u, c)
    elif name == 'viscous_eigenmode':
        if grid.dim != 1:
            raise ScenarioError('viscous_eigenmode is a 1D scenario (no closed-box shear mode exists in 2D)')
        u = float(p['amplitude']) * np.sin(int(p['mode']) * np.pi * X[0] / L[0])
        state = _state(grid, laws, rho_mean, u[None], c_mean)
    elif name == 'compressible_spinodal':
        rng = np.random.default_rng(seed)
        c = c_mean + float(p['c_amplitude']) * _cos_modes(grid, rng, int(p['modes']))
        rho = rho_mean + float(p['rho_amplitude']) * _cos_modes(grid, rng, int(p['modes']))
        if np.min(rho) <= 0.0:
            raise ScenarioError('rho_amplitude too large: initial density not positive')
        state = _state(grid, laws, rho, zeros_u, c)
    elif name == 'manufactured':
        if grid.dim != 2 or any(t != SLIP for t in grid.face_tags):
            raise ScenarioError('manufactured scenario needs a 2D grid with slip on every face')
        try:
            mms = ManufacturedSolution(laws, grid.extents, rho_mean=rho_mean, c_mean=c_mean,
                                       u_amplitude=float(p['u_amplitude']), c_amplitude=float(p['c_amplitude']),
                                       rho_amplitude=float(p['rho_amplitude']), profile=str(p['time_profile']))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        state = mms.exact_state(0.0, grid)
        forcing = Forcing('manufactured', forcing.body, mms.sources)
    else:  # density_drain
        u = zeros_u.copy()
        u[0] = float(p['velocity']) * np.sin(2.0 * np.pi * X[0] / L[0])
        state = _state(grid, laws, rho_mean, u, c_mean)
    log.info('scenario %s on grid %s', name, 'x'.join(map(str, grid.n_cells)))
    return state, forcing
