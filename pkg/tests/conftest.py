import numpy as np
import pytest

from l0sign import numcore as nc


@pytest.fixture(autouse=True)
def _restore_numcore_state():
    """Keep the debug switch and op counter from leaking between tests."""
    was = nc.debug_checks_enabled()
    yield
    nc.set_debug_checks(was)
    nc.reset_op_units()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
