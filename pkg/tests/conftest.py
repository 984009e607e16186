import numpy as np
import pytest

from app.core.schemas import DataMatrix, DataMode, SolverConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def continuous_X(rng):
    return DataMatrix(values=rng.standard_normal((10, 20)), mode=DataMode.CONTINUOUS)


@pytest.fixture
def binary_X(rng):
    return DataMatrix(values=(rng.random((10, 20)) < 0.4).astype(float), mode=DataMode.BINARY)


@pytest.fixture
def fast_config():
    return SolverConfig(max_outer_iterations=60, restarts=1, threads=1)


@pytest.fixture
def simplex_columns(rng):
    def _make(rows, cols):
        matrix = rng.exponential(size=(rows, cols))
        return matrix / matrix.sum(axis=0)
    return _make
