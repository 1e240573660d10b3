import numpy as np
import pytest
import structlog

from pyphm.data import make_synthetic
from pyphm.tensor import precision


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='also run the slow learnability tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: minutes-long training runs')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def wide():
    """Everything created inside the test uses float64"""
    with precision('wide') as settings:
        yield settings


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def tiny_synthetic():
    """(train, val) with 4 classes, 3 train images per class, 8 x 8 pixels"""
    return make_synthetic(classes=4, per_class=3, size=8, seed=3)


@pytest.fixture(autouse=True)
def _reset_structlog():
    """main() binds structlog to the current (captured) stderr; unbind it
    so later tests don't log into a stream pytest has already closed"""
    yield
    structlog.reset_defaults()
