import numpy as np
import pytest

from hadrl.agents import build_group
from hadrl.action_algebra import plan_decomposition
from hadrl.pentest_env import PentestEnv
from hadrl.scenario import load_scenario


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the long training experiments')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running training experiment')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny():
    return load_scenario('tiny')


@pytest.fixture
def tiny_env(tiny):
    return PentestEnv(tiny)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_group(tiny):
    """Two-level group for the tiny preset with small networks."""
    plan = plan_decomposition(tiny.total_actions, 10)
    return build_group(plan, tiny.observation_size, trunk=(16,), value_width=8, seed=7,
                       lr=1e-3, sync_period=5)
