import numpy as np
import pytest

from analytic_rep import QuantumState
from evolution import Hamiltonian


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end path runs")


# Hamiltonians and initial zero sets of the bundled experiments.
H_BLOCK_4 = [[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
H_RATIONAL_3 = [[1.5, 0.2, 0], [0.2, 1.5, 0], [0, 0, 2.1]]
H_BLOCK_5 = [[0, 1, 0, 0, 0], [1, 0, 0, 0, 0], [0, 0, 1, 0, 1], [0, 0, 0, 1, 1], [0, 0, 1, 1, 0]]

ZEROS_SWAP = [1 - 1.99j, 3.02 + 3j, 1 + 3j, -0.01 + 1j]
ZEROS_FOUR_CYCLE = [2 - 2.99j, 2.02 - 2.01j, 1 - 1.01j, -0.01 + 1j]
ZEROS_WINDING = [1.01 + 2j, 2.15 + 2.56j, 3.35 + 1.95j]
ZEROS_SEPARATE = [1.3 + 4.16j, 0.12 + 2.03j, 0.11 + 1.62j, -2.6 - 0.2j, -1.71 + 0.81j]
ZEROS_JOINED = [1.3 + 4.16j, 0.1 + 2.0j, 0.11 + 1.62j, 3 - 0.2j, -1.69 + 0.83j]
ZEROS_SHIFT = [1.54 + 2.47j, 2.01 + 2.18j, 2.95 + 1.86j]
ZEROS_DISPLACED = [1.4 - 2.01j, 2.15 + 2.32j, -1.39 + 1.86j]


def make_random_state(d, rng):
    return QuantumState.from_coefficients(rng.normal(size=d) + 1j * rng.normal(size=d))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_state(rng):
    """Factory for seeded random normalized states."""
    return lambda d: make_random_state(d, rng)


@pytest.fixture
def h_block_4():
    return Hamiltonian(H_BLOCK_4)


@pytest.fixture
def h_rational_3():
    return Hamiltonian(H_RATIONAL_3)


@pytest.fixture
def h_block_5():
    return Hamiltonian(H_BLOCK_5)
