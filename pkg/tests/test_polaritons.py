import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwqed.bath import EmitterArray
from mwqed.polaritons import (PolaritonBands, g_eigenvalue, hopping_rates, photon_window,
                              polariton_bands, polariton_dynamics, sum_rule_errors,
                              two_lattice_overlaps)

from conftest import DELTA_4B, hill_matrix_eigs, spec

Q = np.linspace(-1, 1, 65)


@pytest.fixture(scope="module")
def bands(sp25, a20):
    arr = EmitterArray(None, a20, 1.0, DELTA_4B)
    return arr, polariton_bands(sp25, arr, Q)


def test_bands_ordered_and_symmetric(bands):
    _, b = bands
    assert not b.failures
    # photon bands that decouple by symmetry reappear as residue-0 roots
    assert np.all(np.diff(b.energies, axis=1) >= 0)
    for i, n in zip(*np.nonzero(b.residues == 0)):
        assert np.min(np.abs(b.photon_energies[i] - b.energies[i, n])) < 1e-12
    assert np.allclose(b.energies, b.energies[::-1], atol=1e-10)
    assert np.allclose(b.residues, b.residues[::-1], atol=1e-10)


def test_sum_rules(bands):
    _, b = bands
    err = sum_rule_errors(b)
    assert err["sum"] < 1e-8 and err["energy"] < 1e-8
    assert err["pole"] < 1e-8 and err["range"] == 0


def test_bands_solve_eigenvalue_equation(bands, sp25):
    arr, b = bands
    for i in (3, 20, 32):
        for n in range(4):
            E = b.energies[i, n]
            if b.residues[i, n] == 0:
                continue
            assert abs(E - arr.detuning + g_eigenvalue(sp25, arr, Q[i], E)) < 1e-10


def test_bands_interlace_photon_bands(bands):
    _, b = bands
    for i in range(Q.size):
        eps = b.photon_energies[i]
        E = b.energies[i]
        # one root below the lowest photon band, then one per gap between them
        assert E[0] < eps[0]
        for n in range(1, len(eps)):
            assert eps[n - 1] <= E[n] <= eps[n]


def test_decoupled_limit(sp25, a20):
    arr = EmitterArray(None, a20, 1e-5, DELTA_4B)
    b = polariton_bands(sp25, arr, Q[::8])
    n = np.argmax(b.residues, axis=1)
    assert np.all(np.abs(b.residues[np.arange(n.size), n] - 1) < 1e-8)
    assert np.allclose(b.energies[np.arange(n.size), n], DELTA_4B, atol=1e-8)


def test_flat_photon_band_limit(a20):
    # deep photon lattice: the lowest photon band is nearly flat, so the
    # lower polariton inherits two-level physics at every q
    sp = spec(60.0)
    eps0 = photon_window(60.0, 0.0, a20, 0.2, 1)[0][0]
    arr = EmitterArray(None, a20, 0.2, eps0)
    b = polariton_bands(sp, arr, Q[::8])
    w = b.couplings[:, 0]
    split = b.energies[:, 1] - b.energies[:, 0]
    assert np.allclose(split, 2 * np.sqrt(w), rtol=0.05)


def test_photon_window_matches_dense(a20):
    eps, _ = photon_window(2.5, 0.3, a20, 1.0, 5)
    w, _ = hill_matrix_eigs(2.5, 0.3, 30)
    assert np.allclose(eps, w[:5], atol=1e-10)
    with pytest.raises(ValueError):
        photon_window(2.5, 0.3, a20, 1.0, 5, mode="loose")


def test_tight_and_exact_windows(sp25, a20):
    arr = EmitterArray(None, a20, 1.0, DELTA_4B)
    bt = polariton_bands(sp25, arr, Q[::16], mode="tight")
    bx = polariton_bands(sp25, arr, Q[::16])
    assert bt.tail == "free" and bx.tail == "none"
    # the Gaussian envelope only weakens the couplings: less level repulsion
    assert np.all(bx.energies[:, 0] > bt.energies[:, 0])
    for i, q in enumerate(Q[::16]):
        E = bt.energies[i, 0]
        assert abs(E - DELTA_4B + g_eigenvalue(sp25, arr, q, E, mode="tight")) < 1e-10


def test_g_eigenvalue_limits(sp25, a20):
    arr = EmitterArray(None, a20, 1.0, DELTA_4B)
    eps, w = photon_window(2.5, 0.0, a20, 1.0, 40)
    assert abs(g_eigenvalue(sp25, arr, 0.0, -1e6)) < 1e-5
    assert g_eigenvalue(sp25, arr, 0.0, eps[0] - 1e-6) > 1e3
    with pytest.raises(ValueError):
        g_eigenvalue(sp25, arr, 0.0, eps[0])


def _cosine_bands(J, nq=64):
    q = np.linspace(-1, 1, nq + 1)
    E = (-2 * J * np.cos(math.pi * q))[:, None] * np.ones((1, 2))
    E[:, 1] += 10
    r = np.full(E.shape, 0.5)
    return PolaritonBands(q, E, r, np.zeros(q.size), np.zeros((q.size, 1)),
                          np.zeros((q.size, 1)), 2)


@settings(max_examples=30, deadline=None)
@given(J=st.floats(-3, 3, allow_nan=False))
def test_hopping_rates_cosine_band(J):
    rates = hopping_rates(_cosine_bands(J), 1, 4)
    assert abs(rates[1] - J) < 1e-12 * max(1, abs(J))
    assert np.max(np.abs(rates[2:])) < 1e-12 * max(1, abs(J))


def test_hopping_rates_need_periodic_grid(bands):
    _, b = bands
    bad = PolaritonBands(b.q_grid[:-1], b.energies[:-1], b.residues[:-1],
                         b.detuning_fn[:-1], b.photon_energies[:-1], b.couplings[:-1], 2)
    with pytest.raises(ValueError):
        hopping_rates(bad, 1, 2)


def test_lowest_band_curvature_positive(bands):
    _, b = bands
    E = b.energies[:, 0]
    assert E[Q.size // 2] == pytest.approx(E.min())


def test_dynamics_norm_and_initial_state(bands):
    arr, b = bands
    t = np.array([0.0, 1.0, 3.0])
    tr = polariton_dynamics(b, arr, t)
    sites = tr.metadata["positions"]
    assert abs(tr.amplitudes[0, sites == 0][0] - 1) < 1e-12
    assert np.max(np.abs(tr.amplitudes[0, sites != 0])) < 1e-12
    assert np.max(np.abs(tr.total_norm - 1)) < 1e-8
    # mirror symmetric about the excited site
    P = tr.populations[-1]
    assert np.allclose(P[sites == 3], P[sites == -3], atol=1e-12)


def test_dynamics_rejects_partial_grid(bands):
    arr, b = bands
    half = PolaritonBands(b.q_grid[:20], b.energies[:20], b.residues[:20],
                          b.detuning_fn[:20], b.photon_energies[:20], b.couplings[:20], 2)
    with pytest.raises(ValueError):
        polariton_dynamics(half, arr, [0.0])


def test_two_lattice_overlaps_equal_depths():
    # identical lattices: the overlap picks the matching band, unit per cell
    eb, gam = two_lattice_overlaps(4.0, 4.0, 2, 0.3, 5)
    assert abs(abs(gam[1]) - 1) < 1e-10
    assert np.max(np.abs(np.delete(gam, 1))) < 1e-10
