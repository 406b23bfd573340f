import numpy as np
import pytest

from rydtrans import backends, mc, presets
from rydtrans.rydberg import QuantumDefectTable


@pytest.fixture(scope="session")
def table():
    return QuantumDefectTable.default()


@pytest.fixture(scope="session")
def trace_cfg():
    return presets.trace_config()


@pytest.fixture(scope="session")
def histogram_cfg():
    return presets.histogram_config()


@pytest.fixture(scope="session", autouse=True)
def warm_numba():
    # trigger kernel compilation once so timing-sensitive tests are fair
    try:
        kernels = backends.get_kernels("numba")
    except ImportError:
        return
    kernels.sample_shots(1, 0, 2, np.array([0.5]), 1.0, 0.3, 50.0, 0.02, 0.1)


@pytest.fixture()
def small_run(histogram_cfg):
    return mc.simulate_run(histogram_cfg, 2000, 99, gated=True)
