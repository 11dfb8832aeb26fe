import matplotlib as mpl
import numpy as np

from mms_convergence import ConvergenceRow, ConvergenceTable
from publication_style import FIGURE_FORMATS, NSCH_RC, plot_convergence, set_pub_style


def test_style_sets_the_run_figure_defaults():
    set_pub_style()
    assert mpl.rcParams['image.origin'] == 'lower'
    assert mpl.rcParams['image.cmap'] == NSCH_RC['image.cmap']
    assert mpl.rcParams['savefig.bbox'] == 'tight'
    assert not mpl.rcParams['legend.frameon']


def test_convergence_figure_is_written_in_every_format(tmp_path, monkeypatch):
    monkeypatch.delenv('SIM_CYCLE_TAG', raising=False)
    errs = {'rho': 1e-4, 'u': 1e-3, 'c': 1e-4, 'mu': 1e-3}
    table = ConvergenceTable([ConvergenceRow('spatial', k, 16 * 2 ** k, 1e-3, errs, 4.0 ** -k) for k in range(3)])
    first = plot_convergence(table, str(tmp_path / 'rates'))
    assert first == str(tmp_path / f'rates.{FIGURE_FORMATS[0]}')
    for fmt in FIGURE_FORMATS:
        assert (tmp_path / f'rates.{fmt}').stat().st_size > 0


def test_cycle_tag_suffixes_the_figure(tmp_path, monkeypatch):
    monkeypatch.setenv('SIM_CYCLE_TAG', 'c7')
    table = ConvergenceTable([ConvergenceRow('temporal', k, 16, 4e-3 / 2 ** k, {'rho': 0.0, 'u': 1.0, 'c': 0.0,
                                                                               'mu': 0.0}, 2.0 ** -k)
                              for k in range(2)])
    assert plot_convergence(table, str(tmp_path / 'rates')).endswith('rates_c7.png')
    assert np.all([(tmp_path / f'rates_c7.{fmt}').exists() for fmt in FIGURE_FORMATS])
