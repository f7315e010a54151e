import numpy as np
import pytest
from hypothesis import settings

from okbasis.mdp import build_counterexample, build_item_grid

settings.register_profile("repro", derandomize=True, deadline=None, max_examples=40)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def counterexample():
    return build_counterexample()


@pytest.fixture(scope="session")
def grid_1item():
    return build_item_grid(3, 3, 1, toroidal=False, seed=0)


# acceptance fixture for the strictly-smaller basis and the sequential task
@pytest.fixture(scope="session")
def grid_2item():
    return build_item_grid(3, 3, 2, toroidal=True, seed=2)


def random_tasks(rng, n, d):
    return rng.dirichlet(np.ones(d), size=n)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
