import math

import numpy as np
import pytest

from mwqed.bath import EmitterArray, coupling_kappa
from mwqed.dynamics import (amplitude_evolution, branch_integral, decay_with_modes,
                            emitted_modes, eom_oracle, mode_quadrature,
                            resolvent_dynamics_N)
from mwqed.spectrum import physical_poles

from conftest import DELTA_4B, KAPPA, fig4b_array


def test_decoupled_amplitude_is_constant(sp25, gp25):
    t = np.linspace(0, 20, 11)
    tr = amplitude_evolution(gp25, sp25, DELTA_4B, 0.0, t)
    assert np.allclose(tr.amplitudes[:, 0], 1.0, atol=1e-12)


def test_initial_amplitude_is_one(sp25, gp25):
    tr = amplitude_evolution(gp25, sp25, DELTA_4B, KAPPA, [0.0])
    assert abs(tr.amplitudes[0, 0] - 1) < 1e-8


def test_single_site_finite_route_matches_analytic(sp25, gp25):
    t = np.linspace(0, 6, 13)
    a = amplitude_evolution(gp25, sp25, DELTA_4B, KAPPA, t).amplitudes[:, 0]
    b = resolvent_dynamics_N(sp25, fig4b_array(1), t, gp25).amplitudes[:, 0]
    assert np.max(np.abs(a - b)) < 1e-7


def test_three_sites_differ_from_one_and_stay_bounded(sp25, gp25):
    t = np.linspace(0, 8, 33)
    one = np.abs(amplitude_evolution(gp25, sp25, DELTA_4B, KAPPA, t).amplitudes[:, 0]) ** 2
    tr = resolvent_dynamics_N(sp25, fig4b_array(3), t, gp25)
    assert tr.metadata["route"].startswith("poles")
    P = tr.populations
    assert np.all(P.sum(axis=1) <= 1 + 1e-6)
    assert np.allclose(P[:, 0], P[:, 2], atol=1e-8)
    assert np.max(np.abs(P[:, 1] - one)) > 1e-2


def test_modes_start_empty(sp25, gp25):
    arr = fig4b_array()
    q, _ = mode_quadrature(sp25, 3, 16)
    B = emitted_modes(gp25, sp25, arr, q, [0.0])
    assert np.max(np.abs(B)) < 1e-7


def test_norm_conserved_with_modes(sp25, gp25):
    arr = fig4b_array()
    tr = decay_with_modes(gp25, sp25, arr, [0.0, 2.0, 5.0], per_band=64)
    assert np.max(np.abs(tr.total_norm - 1)) < 1e-4


def test_mode_quadrature_weights(sp25):
    q, w = mode_quadrature(sp25, 4, 8)
    assert abs(w.sum() - 4.0) < 1e-13 and q.min() > -4 and q.max() < 4
    with pytest.raises(ValueError):
        mode_quadrature(sp25, sp25.cutoff + 1)


def test_branch_integral_power_law(sp25, gp25):
    # the lip integrand vanishes like sqrt(zeta) at the edge: I ~ t^(-3/2)
    e = float(gp25.edges[1])
    t = np.array([200.0, 400.0])
    I = branch_integral(gp25, DELTA_4B, KAPPA, e, t)
    slope = math.log(abs(I[1]) / abs(I[0])) / math.log(2)
    assert abs(slope + 1.5) < 0.05


def test_markov_rate(sp25, gp25):
    d = 0.5 * sum(sp25.band(1))
    k = 0.01
    s = complex(gp25.upper_real(np.array([d]))[0])
    gamma = 2 * k * s.real
    t = np.linspace(0.5, 3, 6) / gamma
    P = np.abs(amplitude_evolution(gp25, sp25, d, k, t).amplitudes[:, 0]) ** 2
    fit = -np.polyfit(t, np.log(P), 1)[0]
    assert abs(fit / gamma - 1) < 0.05


def test_long_time_bound_fraction(sp25, gp25):
    d = sp25.even_edges[0] - 0.3
    upper, _ = physical_poles(gp25, d, KAPPA)
    bound = [p for p in upper if p.kind == "bound-state"]
    assert len(bound) == len(upper) and bound[0].residue.real > 0.8
    # ray terms die out as a power law; what is left beats between bound states
    res = np.array([p.residue.real for p in bound])
    E = np.array([p.energy.real for p in bound])
    t = np.array([1600.0, 3200.0])
    A = amplitude_evolution(gp25, sp25, d, KAPPA, t).amplitudes[:, 0]
    miss = np.abs(A - np.exp(-1j * np.outer(t, E - d)) @ res)
    assert miss[0] < 1e-4 and miss[1] < miss[0] / 2


def test_oracle_decoupled_and_inputs(sp25, a20):
    arr = EmitterArray.chain(1, a20, 0.0, DELTA_4B)
    tr = eom_oracle(sp25, arr, [0.0, 3.0], q_max=4, n_modes=256)
    assert np.allclose(tr.amplitudes[:, 0], 1.0)
    with pytest.raises(ValueError):
        eom_oracle(sp25, arr, [0.5, 1.0])
    with pytest.raises(ValueError):
        eom_oracle(sp25, arr, [0.0, 1.0], mode="loose")
    with pytest.raises(ValueError):
        eom_oracle(sp25, EmitterArray(None, a20, 1.0, 1.0), [0.0, 1.0])


def test_oracle_conserves_norm(sp25):
    arr = fig4b_array(1)
    tr = eom_oracle(sp25, arr, np.linspace(0, 4, 5), q_max=6, n_modes=1024)
    assert np.max(np.abs(tr.total_norm - 1)) < 1e-8
    assert coupling_kappa(arr) == pytest.approx(KAPPA)
