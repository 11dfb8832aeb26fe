"""Command-line driver for the NSCH simulator.

Verbs:
    run <config>             step the configured scenario, write diagnostics/snapshots/JSON/figures
    mms <config>             manufactured-solution convergence study (rate table CSV + JSON + figure)
    validate <config>        build the initial state and report compatibility violations
    print-config-template    commented config with every key at its default

Exit codes: 0 success, 2 config or initial-data error, 3 blow-up termination,
4 solver or material failure during the run.

Example (from the repository root):
    python simulations/scripts/nsch_cli.py run simulations/configs/compressible_spinodal.cfg --quiet
"""
from __future__ import annotations
import argparse, logging, os, sys
from dataclasses import replace
from typing import Optional, Tuple
import numpy as np
from mesh import GridError, Grid, integrate, make_grid
from material import MaterialError, MaterialLaws, State, load_material, total_energy
from linsys import LinearSolverError
from transport import TransportError
from stepper import (BlowUpError, Forcing, InitialDataError, SimulationResult, run_simulation,
                     validate_initial_data)
from scenarios import ScenarioError, body_force, scenario
from nsch_config import Config, ConfigError, config_template, load_config, serialize_config
from field_io import FieldFileError, read_snapshot, write_diagnostics, write_snapshot
from mms_convergence import mms_convergence
from sim_utils import build_metadata, configure_logging, ensure_dir, hash_array, register_figure, save_results

log = logging.getLogger('nsch_cli')

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_SOLVER = 0, 2, 3, 4
RESULT_DIR = os.path.join('simulations', 'results')


class SetupError(Exception):
    """Anything wrong before the first step: config, scenario, material or initial data."""


def sim_id_for(cfg: Config, verb: str = 'run') -> str:
    name = 'MMS' if verb == 'mms' else cfg.initial.scenario.upper().replace('_', '-')
    return f'NSCH-{name}'


def build_problem(cfg: Config, seed: int = 0) -> Tuple[Grid, MaterialLaws, State, Forcing]:
    try:
        grid = make_grid(cfg.grid.extents, cfg.grid.n_cells, cfg.grid.faces)
        laws = load_material(cfg.material.law, cfg.material.params, seed=seed)
        forcing = body_force(cfg.forcing.f_ext, cfg.forcing.params)
        state, forcing = scenario(cfg.initial.scenario, cfg.initial.params, grid, laws, seed=seed, forcing=forcing)
        if cfg.initial.snapshot:
            state = read_snapshot(cfg.initial.snapshot, grid)
            state = replace(state, t=0.0)
    except (GridError, MaterialError, ScenarioError, FieldFileError, OSError) as exc:
        raise SetupError(str(exc)) from exc
    return grid, laws, state, forcing


def run_metrics(laws: MaterialLaws, state0: State, result: SimulationResult) -> dict:
    rows = result.rows
    mass0 = integrate(state0.rho)
    diss = [r.diss_S + r.diss_mu for r in rows]
    energies = [total_energy(laws, state0.copy().fill_ghosts())] + [r.E for r in rows]
    # round-off floor relative to the initial energy
    tol_E = max(1e-6 * max(diss, default=0.0), 64 * np.finfo(float).eps * abs(energies[0]))
    increases = [energies[i + 1] - energies[i] for i in range(len(rows))]
    res = result.residuals
    contraction = [r.mean_contraction for r in rows if r.mean_contraction > 0.0]
    final = result.snapshots[-1]
    return {
        'status': result.status,
        'message': result.message,
        'steps': len(rows),
        't_final': final.t,
        'halvings': result.halvings,
        'mass_drift': max((abs(r.mass - mass0) / mass0 for r in rows), default=0.0),
        'max_energy_increase': max(increases, default=0.0),
        'tol_E': tol_E,
        'energy_increase_violations': sum(1 for d in increases if d > tol_E),
        'max_abs_energy_residual': max((abs(r.energy_residual) for r in rows), default=0.0),
        'max_r_momentum': max((r.r_momentum for r in res), default=0.0),
        'max_r_ch': max((r.r_ch for r in res), default=0.0),
        'max_r_mu': max((r.r_mu for r in res), default=0.0),
        'max_r_mass': max((r.r_mass for r in res), default=0.0),
        'mean_contraction': float(np.mean(contraction)) if contraction else 0.0,
        'max_picard_iters': max((r.picard_iters for r in rows), default=0),
        'min_rho': min((r.min_rho for r in rows), default=float(np.min(state0.rho.values))),
        'state_hash': hash_array(final.rho.values, final.u.values, final.c.values, final.mu.values),
    }


def cmd_run(cfg: Config, args) -> int:
    grid, laws, state0, forcing = build_problem(cfg, args.seed)
    report = validate_initial_data(state0, laws, forcing, cfg.stepper.compat_rtol)
    sim_id = sim_id_for(cfg)
    meta = build_metadata(sim_id, {'config': serialize_config(cfg), 'seed': args.seed},
                          notes=f'{cfg.initial.scenario} on {"x".join(map(str, grid.n_cells))}')
    run_tag = f"{sim_id}_{meta['timestamp'].replace(':', '').replace('-', '').replace('.', '')}"
    out_dir = args.out_dir
    ensure_dir(out_dir)
    snap_dir = os.path.join(out_dir, f'{run_tag}_snapshots')
    counter = {'n': 0}

    def on_snapshot(state: State):
        if counter['n'] == 0:
            ensure_dir(snap_dir)
        write_snapshot(os.path.join(snap_dir, f'snap_{counter["n"]:05d}.txt'), state)
        counter['n'] += 1

    result = run_simulation(laws, state0, cfg.stepper, forcing, on_snapshot)
    diag_path = write_diagnostics(os.path.join(out_dir, f'{run_tag}_diagnostics.csv'), result.rows)
    meta['metrics'] = run_metrics(laws, state0, result)
    meta['metrics']['initial_violations'] = [v.__dict__ for v in report.violations]
    meta['outputs'] = {'diagnostics': str(diag_path), 'snapshots': snap_dir if counter['n'] else None}
    if not args.no_figures and result.rows:
        from publication_style import plot_energy_history, plot_fields
        register_figure(meta, plot_energy_history(result.rows, os.path.join(out_dir, f'{run_tag}_energy'), sim_id))
        register_figure(meta, plot_fields(result.snapshots[-1], os.path.join(out_dir, f'{run_tag}_fields')))
    json_path = save_results(meta, out_dir)
    print(f'[RESULT] {sim_id}: {len(result.rows)} steps to t = {result.snapshots[-1].t:.6g}, '
          f'mass drift {meta["metrics"]["mass_drift"]:.3e}, diagnostics {diag_path}, metadata {json_path}')
    if result.status != 'ok':
        print(f'[BLOWUP] {result.message}')
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_mms(cfg: Config, args) -> int:
    try:
        laws = load_material(cfg.material.law, cfg.material.params, seed=args.seed)
    except MaterialError as exc:
        raise SetupError(str(exc)) from exc
    extents = cfg.grid.extents if len(cfg.grid.extents) == 2 else (1.0, 1.0)
    mms_params = None
    if cfg.initial.scenario == 'manufactured':
        mms_params = {k: v for k, v in cfg.initial.params.items() if k != 'time_profile'}
    table = mms_convergence(laws, cfg.stepper, cfg.mms, extents, mms_params)
    print(table.format())
    meta = build_metadata(sim_id_for(cfg, 'mms'), {'config': serialize_config(cfg)}, notes=f'study={cfg.mms.study}')
    ensure_dir(args.out_dir)
    run_tag = f"{meta['id']}_{meta['timestamp'].replace(':', '').replace('-', '').replace('.', '')}"
    csv_path = table.write_csv(os.path.join(args.out_dir, f'{run_tag}_rates.csv'))
    meta['metrics'] = {'spatial_order': table.observed_order('spatial'),
                       'temporal_order': table.observed_order('temporal'),
                       'spatial_orders': table.orders('spatial'), 'temporal_orders': table.orders('temporal')}
    meta['outputs'] = {'rates': str(csv_path)}
    if not args.no_figures:
        from publication_style import plot_convergence
        register_figure(meta, plot_convergence(table, os.path.join(args.out_dir, f'{run_tag}_convergence')))
    print(f'[RESULT] rate table {csv_path}, metadata {save_results(meta, args.out_dir)}')
    return EXIT_OK


def cmd_validate(cfg: Config, args) -> int:
    grid, laws, state0, forcing = build_problem(cfg, args.seed)
    report = validate_initial_data(state0, laws, forcing, cfg.stepper.compat_rtol)
    if report.ok:
        print(f'[OK] {cfg.initial.scenario}: initial data compatible')
    for v in report.violations:
        print(f'[WARN] {v.kind} on {v.face}: magnitude {v.magnitude:.3e} > threshold {v.threshold:.3e}')
    return EXIT_OK


COMMANDS = {'run': cmd_run, 'mms': cmd_mms, 'validate': cmd_validate}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog='nsch_cli', description='Compressible Navier-Stokes/Cahn-Hilliard simulator')
    sub = ap.add_subparsers(dest='verb', required=True)
    for verb in COMMANDS:
        p = sub.add_parser(verb)
        p.add_argument('config', help='path to a .cfg file')
        p.add_argument('--out-dir', default=RESULT_DIR, help='directory for results (default simulations/results)')
        p.add_argument('--snapshot-every', type=int, default=None, help='override [stepper] snapshot_every')
        p.add_argument('--seed', type=int, default=0, help='seed for randomized perturbation scenarios')
        p.add_argument('--quiet', action='store_true', help='only warnings and errors on the log')
        p.add_argument('--no-figures', action='store_true', help='skip PNG/PDF figures')
    sub.add_parser('print-config-template')
    return ap


def main(argv: Optional[list] = None) -> int:
    args = make_parser().parse_args(argv)
    if args.verb == 'print-config-template':
        sys.stdout.write(config_template())
        return EXIT_OK
    configure_logging(args.quiet)
    try:
        cfg = load_config(args.config)
        if args.snapshot_every is not None:
            if args.snapshot_every < 0:
                raise ConfigError('--snapshot-every must be nonnegative')
            cfg = replace(cfg, stepper=replace(cfg.stepper, snapshot_every=args.snapshot_every))
        return COMMANDS[args.verb](cfg, args)
    except (ConfigError, SetupError, InitialDataError) as exc:
        print(f'[ERROR] configuration: {exc}', file=sys.stderr)
        return EXIT_CONFIG
    except BlowUpError as exc:
        print(f'[BLOWUP] {exc}', file=sys.stderr)
        return EXIT_BLOWUP
    except (LinearSolverError, MaterialError, TransportError) as exc:
        print(f'[ERROR] solver failure: {exc}', file=sys.stderr)
        return EXIT_SOLVER


if __name__ == '__main__':
    raise SystemExit(main())
