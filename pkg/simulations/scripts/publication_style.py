"""Central plotting style and the standard run figures (energy history, fields, convergence)."""
from __future__ import annotations
import os
import matplotlib as mpl
if not os.environ.get('DISPLAY'):
    mpl.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

# phase / density / speed panels, then reference slopes in grey
CB_PALETTE = ['#0072B2', '#D55E00', '#009E73', '#CC79A7', '#E69F00', '#56B4E9', '#999999']
REFERENCE_GREY = CB_PALETTE[-1]
FIGURE_FORMATS = ('png', 'pdf')

NSCH_RC = {
    'figure.dpi': 110,
    'savefig.dpi': 250,
    'savefig.bbox': 'tight',
    'figure.figsize': (6.4, 4.2),
    'axes.titlesize': 11,
    'axes.labelsize': 10,
    'axes.grid': True,
    'axes.grid.which': 'both',
    'axes.formatter.limits': (-3, 4),
    'axes.formatter.use_mathtext': True,
    'grid.alpha': 0.25,
    'grid.linestyle': ':',
    'legend.fontsize': 8,
    'legend.frameon': False,
    'lines.linewidth': 1.4,
    'lines.markersize': 5,
    'xtick.labelsize': 9,
    'ytick.labelsize': 9,
    'image.cmap': 'viridis',
    'image.origin': 'lower',
    'font.family': 'sans-serif',
    'font.sans-serif': ['DejaVu Sans', 'Arial', 'Helvetica'],
    'axes.prop_cycle': mpl.cycler(color=CB_PALETTE[:-1]),
}


def set_pub_style():
    mpl.rcParams.update(NSCH_RC)


def save_fig(fig, base_path: str):
    """Write base_path.<fmt> for every FIGURE_FORMATS entry; returns the first path.

    run_all sets SIM_CYCLE_TAG so figures of one batch share a suffix.
    """
    suffix = os.environ.get('SIM_CYCLE_TAG')
    if suffix:
        base_path = f'{base_path}_{suffix}'
    paths = [f'{base_path}.{fmt}' for fmt in FIGURE_FORMATS]
    for path in paths:
        fig.savefig(path)
    plt.close(fig)
    return paths[0]


def plot_energy_history(rows, base_path: str, title: str = ''):
    set_pub_style()
    t = np.array([r.t for r in rows])
    fig, (ax_e, ax_r) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax_e.plot(t, [r.E for r in rows], label='E')
    ax_e.set_ylabel('total energy')
    ax_e.set_title(title)
    ax_r.semilogy(t, np.abs([r.energy_residual for r in rows]) + 1e-300, label='|energy residual|')
    ax_r.semilogy(t, np.array([r.diss_S + r.diss_mu for r in rows]) + 1e-300, label='dissipation')
    ax_r.set_xlabel('t')
    ax_r.legend()
    return save_fig(fig, base_path)


def plot_fields(state, base_path: str):
    """c, rho and |u| of a state; 1D profiles or 2D images."""
    set_pub_style()
    g = state.grid
    speed = np.sqrt(np.sum(state.u.values ** 2, axis=0))
    panels = (('c', state.c.values), ('rho', state.rho.values), ('|u|', speed))
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    for ax, (name, v) in zip(axes, panels):
        if g.dim == 1:
            ax.plot(g.cell_centers()[0], v)
            ax.set_xlabel('x')
        else:
            im = ax.imshow(v.T, extent=(0, g.extents[0], 0, g.extents[1]))
            fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(f'{name}  (t = {state.t:.4g})')
    return save_fig(fig, base_path)


def plot_convergence(table, base_path: str):
    set_pub_style()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, study, xkey, label in ((axes[0], 'spatial', 'n_cells', 'cells per axis'),
                                   (axes[1], 'temporal', 'dt', 'dt')):
        rows = [r for r in table.rows if r.study == study]
        if not rows:
            ax.set_visible(False)
            continue
        x = np.array([getattr(r, xkey) for r in rows], dtype=float)
        ax.loglog(x, [r.total for r in rows], 'o-', label='error' if study == 'spatial' else 'successive difference')
        ref = 2 if study == 'spatial' else 1
        slope = (x / x[0]) ** (-ref if study == 'spatial' else ref) * rows[0].total
        ax.loglog(x, slope, '--', color=REFERENCE_GREY, label=f'order {ref}')
        ax.set_xlabel(label)
        ax.set_title(study)
        ax.legend()
    return save_fig(fig, base_path)
