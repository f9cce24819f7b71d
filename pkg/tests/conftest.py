import numpy as np
import pytest

from latticemc import SimParams


@pytest.fixture
def params():
    """Strong-detuning operating point used throughout."""
    return SimParams(gamma=3.3e-3, omega_r=1e-5, delta=-0.01)


@pytest.fixture
def weak_params():
    return SimParams(gamma=3.3e-3, omega_r=1e-5, delta=-0.0005)


@pytest.fixture
def hamiltonian_params():
    return SimParams(gamma=0.0, omega_r=1e-5, delta=-0.01)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
