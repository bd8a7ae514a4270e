import cmath
import math

import numpy as np
import pytest
from scipy.integrate import simpson
from scipy.signal import find_peaks

from mwqed.bath import EmitterArray, GapProducts
from mwqed.boundstates import (appendix_integrand, bs_momentum_distribution,
                               bs_mode_amplitudes, bs_normalization, bs_spatial_profile,
                               find_bound_states, fit_decay_rate,
                               lattice_momentum_integral_check, upper_sheet_sqrt)

from conftest import fig4b_array, spec


@pytest.fixture(scope="module")
def gap1(sp25, gp25):
    arr = fig4b_array(1, delta=0.5 * sum(sp25.gap(1)))
    states = find_bound_states(sp25, arr, gp25)
    return arr, {b.gap_index: b for b in states}


def test_gap_states_found(gap1, sp25):
    _, st = gap1
    assert set(st) == {0, 1}
    b = st[1]
    lo, hi = sp25.gap(1)
    assert lo < b.energy < hi and b.carrier_wavenumber == 1.0
    assert st[0].carrier_wavenumber == 0.0


def test_normalization_matches_residue(gap1):
    _, st = gap1
    for b in st.values():
        assert abs(b.norm_A0 ** 2 - b.residue) < 1e-6


def test_decoupled_limit(sp25, a20):
    E = 0.5 * sum(sp25.gap(1))
    for om, tol in ((1e-3, 1e-6), (1e-5, 1e-10)):
        arr = EmitterArray(None, a20, om, E)
        assert 1 - bs_normalization(sp25, arr, E) < tol


def test_profile_carries_the_missing_norm(gap1, sp25):
    arr, st = gap1
    b = st[1]
    # the profile has a cusp at the emitter: integrate each side separately
    z = np.linspace(0, 60, 6001)
    B = bs_spatial_profile(sp25, arr, b.energy, z, mode="tight")
    assert abs(2 * simpson(np.abs(B) ** 2, x=z) - (1 - b.norm_A0 ** 2)) < 1e-6


@pytest.mark.parametrize("mode", ["tight", "exact"])
def test_profile_symmetric_and_phase(gap1, sp25, mode):
    arr, st = gap1
    b = st[1]
    z = np.linspace(-8, 8, 161)
    B = bs_spatial_profile(sp25, arr, b.energy, z, mode=mode)
    assert np.max(np.abs(B - B[::-1])) < 1e-10 * np.max(np.abs(B))
    Bt = bs_spatial_profile(sp25, arr, b.energy, z, t=1.7, mode=mode)
    assert np.allclose(Bt, B * np.exp(-1.7j * b.energy))


def test_profile_decay_rate_and_carrier(gap1, sp25):
    arr, st = gap1
    for b in st.values():
        z = np.arange(2, 14) * math.pi + 0.4
        B = bs_spatial_profile(sp25, arr, b.energy, z, mode="tight")
        k, carrier = fit_decay_rate(z, B)
        assert abs(k / b.decay_length_inv - 1) < 1e-6
        assert min(abs(carrier - b.gap_index % 2), 2 - abs(carrier - b.gap_index % 2)) < 1e-6


def test_exact_and_tight_profiles_agree_for_narrow_emitter(sp25):
    E = 0.5 * sum(sp25.gap(1))
    arr = EmitterArray(None, 0.02, 0.5, E)
    b = [s for s in find_bound_states(sp25, arr) if s.gap_index == 1][0]
    z = np.linspace(0.5, 6, 12)
    t = bs_spatial_profile(sp25, arr, b.energy, z, mode="tight")
    x = bs_spatial_profile(sp25, arr, b.energy, z, mode="exact")
    assert np.max(np.abs(x - t)) < 0.05 * np.max(np.abs(t))


def test_momentum_peaks(sp0, gap1, sp25):
    q = np.linspace(-3, 3, 1201)
    arr0 = fig4b_array(1, delta=-0.5)
    b0 = find_bound_states(sp0, arr0)[0]
    P0 = bs_momentum_distribution(sp0, arr0, b0.energy, q)
    assert len(find_peaks(P0)[0]) == 1 and abs(q[np.argmax(P0)]) < 1e-12
    arr, st = gap1
    P1 = bs_momentum_distribution(sp25, arr, st[1].energy, q)
    top = np.sort(q[find_peaks(P1)[0]][np.argsort(P1[find_peaks(P1)[0]])[-2:]])
    assert np.allclose(top, [-1, 1], atol=0.02)


def test_mode_amplitudes_match_distribution(gap1, sp25):
    arr, st = gap1
    q = np.linspace(-2.7, 2.7, 23)
    B = bs_mode_amplitudes(sp25, arr, st[1].energy, q)
    P = bs_momentum_distribution(sp25, arr, st[1].energy, q)
    assert np.allclose(np.abs(B) ** 2, P, rtol=1e-10)


def test_bound_state_is_an_eigenstate_of_the_discretized_bath(gap1, sp25):
    """Diagonalize the oracle's emitter-plus-modes Hamiltonian directly."""
    from mwqed.dynamics import _oracle_modes
    arr, st = gap1
    b = st[1]
    q_max, n = 10.0, 2400
    q = np.linspace(-q_max, q_max, n, endpoint=False) + q_max / n
    eps, gam = _oracle_modes(sp25.depth, arr.a_ho, q, "exact")
    g = arr.rabi / 2 * gam * math.sqrt((q[1] - q[0]) / 2)
    H = np.diag(np.concatenate([[arr.detuning], eps])).astype(complex)
    H[0, 1:], H[1:, 0] = np.conj(g), g
    w, v = np.linalg.eigh(H)
    lo, hi = sp25.gap(1)
    k = [i for i in range(w.size) if lo < w[i] < hi]
    assert len(k) == 1
    ex = [s for s in find_bound_states(sp25, arr, mode="exact") if s.gap_index == 1][0]
    assert abs(w[k[0]] - ex.energy) < 1e-4
    assert abs(abs(v[0, k[0]]) - ex.norm_A0) < 1e-3


def test_fit_decay_rate_rejects_bad_grid():
    with pytest.raises(ValueError):
        fit_decay_rate([0, 1, 2], [1, 0.5, 0.25])


# -- momentum-integral identity ------------------------------------------


@pytest.mark.parametrize("z1,z2,zj,zJ", [(0.2, -0.1, math.pi, 0.0), (0.2, -0.1, 0.0, math.pi),
                                         (-0.1, 0.2, 0.0, 0.0), (0.3, 0.3, 2 * math.pi, 0.0)])
def test_identity_periodic_lattice(sp25, z1, z2, zj, zJ):
    lhs, rhs = lattice_momentum_integral_check(sp25, z1, z2, zj, zJ, 1.3 + 0.2j)
    assert abs(lhs - rhs) < 5e-6 * abs(rhs)


def test_identity_free_particle_closed_form(sp0):
    E0 = 1.3 + 0.2j
    z1, z2, d = 0.2, -0.1, 1.0
    k = cmath.sqrt(E0)
    L = z2 - z1 + d
    # per-cell normalized plane waves e^{iqz}/sqrt(pi)
    closed = -1j / k * cmath.exp(1j * k * abs(L))
    lhs, rhs = lattice_momentum_integral_check(sp0, z1, z2, d, 0.0, E0)
    assert abs(rhs - closed) < 1e-12 and abs(lhs - closed) < 1e-6


def test_identity_swap_symmetry(sp25):
    a = lattice_momentum_integral_check(sp25, 0.2, -0.1, math.pi, 0.0, 1 + 0.5j)
    b = lattice_momentum_integral_check(sp25, -0.1, 0.2, 0.0, math.pi, 1 + 0.5j)
    c = lattice_momentum_integral_check(sp25, -0.1, 0.2, 0.0, math.pi, 1 - 0.5j)
    for side in (0, 1):
        # (z1, zj) <-> (z2, zJ) leaves both sides alone; E0 -> E0* conjugates
        assert abs(a[side] - b[side]) < 1e-9 * abs(a[side])
        assert abs(a[side] - np.conj(c[side])) < 1e-9 * abs(a[side])
    with pytest.raises(ValueError):
        lattice_momentum_integral_check(sp25, 0, 0, 0, 0, 1.0)


def test_upper_sheet_sqrt_reflects(gp25):
    E = np.array([1.3 + 0.4j, 1.3 - 0.4j])
    s = upper_sheet_sqrt(gp25, E)
    assert abs(s[1] + np.conj(s[0])) < 1e-14


def test_appendix_integrand_pole(sp25):
    E0 = 1.3 + 0.2j
    near = appendix_integrand(sp25, 0.2, -0.1, E0, np.array([E0 + 1e-4, E0 + 2e-4]))
    assert abs(near[0] / near[1] - 2) < 1e-3
