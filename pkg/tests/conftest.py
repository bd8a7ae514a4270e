import numpy as np
import pytest

from mwqed.bath import EmitterArray, GapProducts, a_ho_from_depth, rabi_for_kappa
from mwqed.vacuum import LatticeParams, characteristic_energies

V_A, V_B, KAPPA, DELTA_4B = 20.0, 2.5, 0.082, 1.32


def spec(V, cutoff=10):
    return characteristic_energies(LatticeParams(V), cutoff)


def fig4b_array(n=1, delta=DELTA_4B, kappa=KAPPA):
    a = a_ho_from_depth(V_A)
    return EmitterArray.chain(n, a, rabi_for_kappa(kappa, a), delta)


def hill_matrix_eigs(V, q, M):
    """Dense plane-wave Hamiltonian of V sin^2 z at quasi-momentum q."""
    n = np.arange(-M, M + 1)
    H = (np.diag((q + 2.0 * n) ** 2 + V / 2)
         + np.diag(np.full(2 * M, -V / 4), 1) + np.diag(np.full(2 * M, -V / 4), -1))
    return np.linalg.eigh(H)


@pytest.fixture(scope="session")
def sp25():
    return spec(V_B)


@pytest.fixture(scope="session")
def gp25(sp25):
    return GapProducts(sp25)


@pytest.fixture(scope="session")
def sp0():
    return spec(0.0)


@pytest.fixture(scope="session")
def a20():
    return a_ho_from_depth(V_A)
