import numpy as np
import pytest

from pneusim import dynamics as dyn
from pneusim import sysid

DATA_DIR = "data"
BENCH_CSV = "data/bench_nonlinear.csv"


@pytest.fixture(scope="session")
def bench_params():
    return dyn.bench_nonlinear_params()


@pytest.fixture(scope="session")
def linear_true():
    return dyn.LinearParams(alpha=3.0, beta=3.2)


@pytest.fixture(scope="session")
def linear_oracle_small(linear_true):
    """Short noiseless linear-generated dataset for unit tests."""
    return sysid.oracle_dataset(linear_true, duration=60.0,
                                with_joint_motion=False, seed=0)


@pytest.fixture(scope="session")
def nonlinear_oracle_small(bench_params):
    """Short noiseless chamber-model dataset for unit tests."""
    return sysid.oracle_dataset(bench_params, duration=60.0, seed=0)


@pytest.fixture(scope="session")
def bench_dataset():
    """The benchmark dataset shipped with the repo (closed-loop,
    joint wobble, 0.5 kPa sensor noise, 22k samples)."""
    return sysid.load_dataset(BENCH_CSV)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
