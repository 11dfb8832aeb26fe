"""Manufactured-solution convergence studies.

Exact fields on a 2D box [0, Lx] x [0, Ly] with slip on every face:
    rho = rho_mean + A(t) a_rho cos(ky y)
    u   = (A(t) a sin(kx x) cos(ky y), 0)
    c   = c_mean + A(t) b cos(kx x) cos(ky y)
    mu  = exact chemical potential of (rho, c)
with kx = pi / Lx, ky = pi / Ly. The flow compresses along x (div u != 0), so the mass,
pressure and kappa grad(rho) terms all carry manufactured sources. rho varies across the
flow direction only: the upwind face value along x then equals the centered one and the
density update keeps the second-order accuracy of the other blocks. A(t) is 1 + t
('linear', for the spatial study) or exp(-t) ('exp', for the temporal study); 'zero'
gives the resting equilibrium.

Sources come from sympy differentiation of the material's symbolic form:
    mass     = d_t rho + div(rho u)
    ch       = d_t(rho c) + div(c rho u) - div(gamma grad mu)
    mu       = mu - (psibar_c + eps_c |grad c|^2 / 2 - div(eps rho grad c) / rho)
    momentum = rho d_t u + rho (grad u) u - div S - div P

Spatial study: levels base_cells * 2^l at fixed dt and the 'linear' profile; errors
against the exact fields. Temporal study: one grid, dt / 2^l for l = 0..levels with the
'exp' profile; orders from successive differences of the discrete solutions.
"""
from __future__ import annotations
import argparse, logging, math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional
import numpy as np
import pandas as pd
import sympy
from mesh import Grid, SLIP, discrete_l2, make_grid, scalar_field, vector_field
from material import MaterialLaws, State
from stepper import BlowUpError, Forcing, StepperConfig, run_simulation

log = logging.getLogger(__name__)

PROFILES = ('linear', 'exp', 'zero')
ERROR_FIELDS = ('rho', 'u', 'c', 'mu')
NOISE_FLOOR = 1e-13


class ManufacturedSolution:
    def __init__(self, laws: MaterialLaws, extents, rho_mean: float = 1.0, c_mean: float = 0.0,
                 u_amplitude: float = 0.1, c_amplitude: float = 0.1, rho_amplitude: float = 0.05,
                 profile: str = 'linear'):
        if laws.symbolic is None:
            raise ValueError(f'material law {laws.name!r} has no symbolic form')
        if profile not in PROFILES:
            raise ValueError(f'unknown time profile {profile!r} (known: {", ".join(PROFILES)})')
        if len(extents) != 2:
            raise ValueError('manufactured solution is defined on 2D grids only')
        if not abs(rho_amplitude) < rho_mean:
            raise ValueError(f'rho_amplitude {rho_amplitude} must stay below rho_mean {rho_mean}')
        self.laws = laws
        self.extents = tuple(float(e) for e in extents)
        x, y, t = sympy.symbols('x y t', real=True)
        R, C = sympy.symbols('R C', positive=True)
        kx, ky = sympy.pi / self.extents[0], sympy.pi / self.extents[1]
        A = {'linear': 1 + t, 'exp': sympy.exp(-t), 'zero': sympy.Integer(0)}[profile]
        rho = rho_mean + A * rho_amplitude * sympy.cos(ky * y)
        u = [A * u_amplitude * sympy.sin(kx * x) * sympy.cos(ky * y), sympy.Integer(0)]
        c = c_mean + A * c_amplitude * sympy.cos(kx * x) * sympy.cos(ky * y)

        law = laws.symbolic(R, C)
        at = {R: rho, C: c}

        def ev(expr):
            return sympy.sympify(expr).subs(at)

        psibar_c = ev(sympy.diff(law['psibar'], C))
        psibar_rho = ev(sympy.diff(law['psibar'], R))
        eps = ev(law['eps'])
        eps_c = ev(sympy.diff(law['eps'], C))
        eps_rho = ev(sympy.diff(law['eps'], R))
        gamma, eta, lam = ev(law['gamma']), ev(law['eta']), ev(law['lam'])

        X = (x, y)
        grad_c = [sympy.diff(c, v) for v in X]
        g2 = sum(gc ** 2 for gc in grad_c)
        div = lambda vec: sum(sympy.diff(vec[i], X[i]) for i in range(2))
        mu = psibar_c + eps_c * g2 / 2 - div([eps * rho * gc for gc in grad_c]) / rho
        div_u = div(u)

        S = [[eta * (sympy.diff(u[i], X[j]) + sympy.diff(u[j], X[i])) + (lam * div_u if i == j else 0)
              for j in range(2)] for i in range(2)]
        iso = rho ** 2 * psibar_rho + rho ** 2 * eps_rho * g2 / 2
        P = [[-rho * eps * grad_c[i] * grad_c[j] - (iso if i == j else 0) for j in range(2)] for i in range(2)]
        momentum = [rho * sympy.diff(u[i], t) + rho * sum(u[j] * sympy.diff(u[i], X[j]) for j in range(2))
                    - div(S[i]) - div(P[i]) for i in range(2)]
        mass = sympy.diff(rho, t) + div([rho * ui for ui in u])
        ch = sympy.diff(rho * c, t) + div([c * rho * ui for ui in u]) - div([gamma * sympy.diff(mu, v) for v in X])

        args = (x, y, t)
        self._exact = {name: sympy.lambdify(args, e, 'numpy')
                       for name, e in (('rho', rho), ('u0', u[0]), ('u1', u[1]), ('c', c), ('mu', mu))}
        self._sources = {'mass': sympy.lambdify(args, mass, 'numpy'), 'ch': sympy.lambdify(args, ch, 'numpy'),
                         'mu': sympy.lambdify(args, sympy.Integer(0), 'numpy'),
                         'momentum0': sympy.lambdify(args, momentum[0], 'numpy'),
                         'momentum1': sympy.lambdify(args, momentum[1], 'numpy')}

    def _eval(self, fn, t: float, grid: Grid) -> np.ndarray:
        X = grid.cell_centers()
        return np.broadcast_to(np.asarray(fn(X[0], X[1], t), dtype=float), grid.shape).copy()

    def exact_state(self, t: float, grid: Grid) -> State:
        e = {k: self._eval(fn, t, grid) for k, fn in self._exact.items()}
        return State(grid, scalar_field(grid, e['rho']), vector_field(grid, np.stack([e['u0'], e['u1']])),
                     scalar_field(grid, e['c']), scalar_field(grid, e['mu']), t).fill_ghosts()

    def sources(self, t: float, grid: Grid) -> Dict[str, np.ndarray]:
        s = {k: self._eval(fn, t, grid) for k, fn in self._sources.items()}
        return {'mass': s['mass'], 'ch': s['ch'], 'mu': s['mu'],
                'momentum': np.stack([s['momentum0'], s['momentum1']])}

    def forcing(self) -> Forcing:
        return Forcing('manufactured', None, self.sources)


# --------------------------------------------------------------------------- studies

@dataclass
class ConvergenceRow:
    study: str
    level: int
    n_cells: int
    dt: float
    errors: Dict[str, float]
    total: float
    order: float = float('nan')


@dataclass
class ConvergenceTable:
    rows: List[ConvergenceRow] = field(default_factory=list)

    def orders(self, study: str) -> List[float]:
        return [r.order for r in self.rows if r.study == study and math.isfinite(r.order)]

    def observed_order(self, study: str) -> float:
        """Order between the two finest levels."""
        o = self.orders(study)
        return o[-1] if o else float('nan')

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{'study': r.study, 'level': r.level, 'n_cells': r.n_cells, 'dt': r.dt,
                              **{f'err_{k}': r.errors[k] for k in ERROR_FIELDS}, 'err_total': r.total,
                              'order': r.order} for r in self.rows],
                            columns=['study', 'level', 'n_cells', 'dt'] + [f'err_{k}' for k in ERROR_FIELDS]
                            + ['err_total', 'order'])

    def write_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        return path

    def format(self) -> str:
        lines = [f'{"study":<9}{"lvl":>4}{"n":>6}{"dt":>11}' + ''.join(f'{"err_" + k:>13}' for k in ERROR_FIELDS)
                 + f'{"total":>13}{"order":>8}']
        for r in self.rows:
            lines.append(f'{r.study:<9}{r.level:>4}{r.n_cells:>6}{r.dt:>11.3e}'
                         + ''.join(f'{r.errors[k]:>13.4e}' for k in ERROR_FIELDS)
                         + f'{r.total:>13.4e}{r.order:>8.3f}')
        return '\n'.join(lines)


def field_differences(a: State, b: State) -> Dict[str, float]:
    g = a.grid
    return {'rho': discrete_l2(a.rho.values - b.rho.values, g), 'u': discrete_l2(a.u.values - b.u.values, g),
            'c': discrete_l2(a.c.values - b.c.values, g), 'mu': discrete_l2(a.mu.values - b.mu.values, g)}


def _total(errors: Dict[str, float]) -> float:
    return float(math.sqrt(sum(v * v for v in errors.values())))


def _rate(coarse: float, fine: float) -> float:
    if coarse <= NOISE_FLOOR or fine <= NOISE_FLOOR:
        return float('nan')
    return math.log2(coarse / fine)


def _mms_grid(extents, n: int) -> Grid:
    return make_grid(extents, (n, n), [SLIP] * 4)


def run_manufactured(laws: MaterialLaws, grid: Grid, stepper: StepperConfig, **mms_kw):
    """Run the scheme from the exact initial state; returns (final state, exact final state)."""
    mms = ManufacturedSolution(laws, grid.extents, **mms_kw)
    result = run_simulation(laws, mms.exact_state(0.0, grid), replace(stepper, snapshot_every=0), mms.forcing())
    if result.status != 'ok':
        raise BlowUpError(f'manufactured run on {grid.n_cells} failed: {result.message}', result.snapshots[-1].t, 'mms')
    final = result.snapshots[-1]
    return final, mms.exact_state(final.t, grid)


def spatial_study(laws: MaterialLaws, stepper: StepperConfig, extents=(1.0, 1.0), base_cells: int = 16,
                  levels: int = 3, dt: float = 1e-3, t_end: float = 5e-3, **mms_kw) -> List[ConvergenceRow]:
    cfg = replace(stepper, dt0=dt, t_end=t_end)
    rows: List[ConvergenceRow] = []
    for lvl in range(levels):
        n = base_cells * 2 ** lvl
        final, exact = run_manufactured(laws, _mms_grid(extents, n), cfg, profile='linear', **mms_kw)
        errors = field_differences(final, exact)
        row = ConvergenceRow('spatial', lvl, n, dt, errors, _total(errors))
        if rows:
            row.order = _rate(rows[-1].total, row.total)
        rows.append(row)
        log.info('spatial level %d (n=%d): total error %.4e order %.3f', lvl, n, row.total, row.order)
    return rows


def temporal_study(laws: MaterialLaws, stepper: StepperConfig, extents=(1.0, 1.0), n_cells: int = 16,
                   levels: int = 3, dt: float = 4e-3, t_end: float = 0.04, **mms_kw) -> List[ConvergenceRow]:
    grid = _mms_grid(extents, n_cells)
    finals = []
    for lvl in range(levels + 1):
        cfg = replace(stepper, dt0=dt / 2 ** lvl, t_end=t_end)
        finals.append(run_manufactured(laws, grid, cfg, profile='exp', **mms_kw))
    rows: List[ConvergenceRow] = []
    for lvl in range(levels):
        diffs = field_differences(finals[lvl][0], finals[lvl + 1][0])
        row = ConvergenceRow('temporal', lvl, n_cells, dt / 2 ** lvl, diffs, _total(diffs))
        if rows:
            row.order = _rate(rows[-1].total, row.total)
        rows.append(row)
        log.info('temporal level %d (dt=%.3e): successive difference %.4e order %.3f', lvl, row.dt, row.total,
                 row.order)
    return rows


def mms_convergence(laws: MaterialLaws, stepper: StepperConfig, mms_cfg, extents=(1.0, 1.0),
                    mms_params: Optional[dict] = None) -> ConvergenceTable:
    """mms_cfg carries study, levels, base_cells, dt, t_end, temporal_cells, temporal_dt, temporal_t_end."""
    kw = dict(mms_params or {})
    table = ConvergenceTable()
    if mms_cfg.study in ('spatial', 'both'):
        table.rows += spatial_study(laws, stepper, extents, mms_cfg.base_cells, mms_cfg.levels, mms_cfg.dt,
                                    mms_cfg.t_end, **kw)
    if mms_cfg.study in ('temporal', 'both'):
        table.rows += temporal_study(laws, stepper, extents, mms_cfg.temporal_cells, mms_cfg.levels,
                                     mms_cfg.temporal_dt, mms_cfg.temporal_t_end, **kw)
    return table


def main(argv=None):
    from material import load_material
    from nsch_config import MMSConfig
    from sim_utils import configure_logging
    ap = argparse.ArgumentParser(description='Manufactured-solution convergence with default material')
    ap.add_argument('--study', choices=('spatial', 'temporal', 'both'), default='both')
    ap.add_argument('--levels', type=int, default=3)
    ap.add_argument('--quiet', action='store_true')
    args = ap.parse_args(argv)
    configure_logging(args.quiet)
    table = mms_convergence(load_material('default_logrho_doublewell'), StepperConfig(),
                            MMSConfig(study=args.study, levels=args.levels))
    print(table.format())
    return 0


if __name__ == '__main__':
    raise SystemExit(main())
