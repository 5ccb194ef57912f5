import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from citest.estimator import AugmentedDataset  # noqa: E402
from citest.models import Dataset  # noqa: E402


def random_aug(rng, n, d_x=1, d_y=1, d_z=1, scale=1.0):
    X = rng.normal(scale=scale, size=(n, d_x))
    Xp = rng.normal(scale=scale, size=(n, d_x))
    Y = rng.normal(scale=scale, size=(n, d_y))
    Z = rng.normal(scale=scale, size=(n, d_z))
    return AugmentedDataset(Dataset(X, Y, Z), Xp)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
