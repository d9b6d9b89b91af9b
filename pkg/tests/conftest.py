import numpy as np
import pytest

from lifelong_dp.data import generate_permuted_tasks, make_base_dataset
from lifelong_dp.model import ModelShape


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_tasks():
    """Three disjoint permuted tasks, 16 features, 4 classes."""
    X, y = make_base_dataset(3 * 260, n_features=16, n_classes=4, seed=3)
    return generate_permuted_tasks(X, y, 3, 200, 60, seed=3)


@pytest.fixture
def small_shape():
    return ModelShape(16, 6, (8,), 4)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
