import os, sys

import numpy as np
import pytest

SCRIPTS = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'scripts'))
CONFIGS = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', 'configs'))
if SCRIPTS not in sys.path:
    sys.path.insert(0, SCRIPTS)

from mesh import make_grid  # noqa: E402


@pytest.fixture
def grid1d():
    return make_grid([1.0], [32], ['noslip', 'noslip'])


@pytest.fixture
def grid2d():
    return make_grid([1.0, 1.0], [16, 16], ['noslip', 'noslip', 'slip', 'slip'])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def config_dir():
    return CONFIGS
