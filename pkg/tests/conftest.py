import numpy as np
import pytest

from bdsvie.grid import make_grid, sample_ensemble
from bdsvie.regression import RegressionOperator


@pytest.fixture(scope="session")
def ens32():
    """Default-size ensemble: N=32, M=8192, seed 42."""
    return sample_ensemble(make_grid(1.0, 32), 8192, seed=42)


@pytest.fixture(scope="session")
def op32(ens32):
    return RegressionOperator(ens32, degree=2)


@pytest.fixture(scope="session")
def ens_1e4():
    return sample_ensemble(make_grid(1.0, 32), 10_000, seed=7)


@pytest.fixture(scope="session")
def small_ens():
    return sample_ensemble(make_grid(1.0, 8), 512, seed=3)


def rms(x):
    return float(np.sqrt(np.mean(np.square(x))))
