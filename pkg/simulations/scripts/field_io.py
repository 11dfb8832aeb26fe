"""Plain-text snapshot and diagnostics files.

Snapshot layout (one header line, then one line per cell in C order):
    NSCH-FIELDS v1 dim=2 n_cells=48,48 extents=1,1 faces=noslip,noslip,slip,slip t=0.001
    i j rho u_x u_y c mu
Every float is written with 17 significant digits, so reading a file back reproduces
the written values bit for bit.
"""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Iterable, List, Union
import numpy as np
import pandas as pd
from mesh import Grid, make_grid, scalar_field, vector_field
from material import State
from stepper import DIAGNOSTICS_COLUMNS, DiagnosticsRow

log = logging.getLogger(__name__)

MAGIC = 'NSCH-FIELDS v1'
PathLike = Union[str, Path]


class FieldFileError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), '.17g')


def write_snapshot(path: PathLike, state: State) -> Path:
    g = state.grid
    path = Path(path)
    header = (f'{MAGIC} dim={g.dim} n_cells={",".join(map(str, g.n_cells))} '
              f'extents={",".join(_fmt(e) for e in g.extents)} faces={",".join(g.face_tags)} t={_fmt(state.t)}')
    cols = [state.rho.values] + [state.u.values[a] for a in range(g.dim)] + [state.c.values, state.mu.values]
    with open(path, 'w') as f:
        f.write(header + '\n')
        for idx in np.ndindex(*g.shape):
            f.write(' '.join(map(str, idx)) + ' ' + ' '.join(_fmt(v[idx]) for v in cols) + '\n')
    return path


def _header(line: str, path) -> dict:
    if not line.startswith(MAGIC):
        raise FieldFileError(f'{path}: not a snapshot file (expected header {MAGIC!r})')
    out = {}
    for tok in line[len(MAGIC):].split():
        if '=' not in tok:
            raise FieldFileError(f'{path}: malformed header token {tok!r}')
        k, v = tok.split('=', 1)
        out[k] = v
    for key in ('dim', 'n_cells', 'extents', 'faces'):
        if key not in out:
            raise FieldFileError(f'{path}: header lacks {key}')
    return out


def read_snapshot(path: PathLike, grid: Grid = None) -> State:
    """Read a snapshot; with grid given, the file must match it."""
    path = Path(path)
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise FieldFileError(f'{path}: empty file')
    h = _header(lines[0], path)
    dim = int(h['dim'])
    file_grid = make_grid([float(e) for e in h['extents'].split(',')], [int(n) for n in h['n_cells'].split(',')],
                          h['faces'].split(','))
    if file_grid.dim != dim:
        raise FieldFileError(f'{path}: dim={dim} disagrees with n_cells')
    if grid is not None and (grid.n_cells != file_grid.n_cells or not np.allclose(grid.extents, file_grid.extents)):
        raise FieldFileError(f'{path}: grid {file_grid.n_cells} does not match the configured {grid.n_cells}')
    g = grid or file_grid
    ncol = dim + 1 + dim + 2
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != g.size:
        raise FieldFileError(f'{path}: expected {g.size} cell lines, found {len(body)}')
    rho, c, mu = np.empty(g.shape), np.empty(g.shape), np.empty(g.shape)
    u = np.empty((dim,) + g.shape)
    for lineno, ln in enumerate(body, start=2):
        parts = ln.split()
        if len(parts) != ncol:
            raise FieldFileError(f'{path}:{lineno}: expected {ncol} columns, got {len(parts)}')
        try:
            idx = tuple(int(p) for p in parts[:dim])
            vals = [float(p) for p in parts[dim:]]
        except ValueError as exc:
            raise FieldFileError(f'{path}:{lineno}: {exc}') from None
        rho[idx] = vals[0]
        for a in range(dim):
            u[(a,) + idx] = vals[1 + a]
        c[idx], mu[idx] = vals[1 + dim], vals[2 + dim]
    t = float(h.get('t', 0.0))
    return State(g, scalar_field(g, rho), vector_field(g, u), scalar_field(g, c), scalar_field(g, mu), t).fill_ghosts()


def write_diagnostics(path: PathLike, rows: Iterable[DiagnosticsRow]) -> Path:
    path = Path(path)
    frame = pd.DataFrame([r.as_tuple() for r in rows], columns=list(DIAGNOSTICS_COLUMNS))
    frame = frame.astype({c: int if c == 'picard_iters' else float for c in DIAGNOSTICS_COLUMNS})
    frame.to_csv(path, index=False, float_format='%.17g')
    return path


def read_diagnostics(path: PathLike) -> List[DiagnosticsRow]:
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise FieldFileError(f'{path}: empty diagnostics file') from None
    if tuple(frame.columns) != DIAGNOSTICS_COLUMNS:
        raise FieldFileError(f'{path}: unexpected diagnostics header {list(frame.columns)}')
    return [DiagnosticsRow(**{k: int(v) if k == 'picard_iters' else float(v) for k, v in rec.items()})
            for rec in frame.to_dict('records')]
