import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwqed.bath import EmitterArray, GapProducts, coupling_kappa
from mwqed.dynamics import eom_oracle
from mwqed.spectrum import (OnCutError, phase_maps, physical_poles, pole_polynomial_roots,
                            residue_alpha, sheet_classify, weak_coupling_estimates)

from conftest import spec


def _kappa(a, rabi):
    return coupling_kappa(EmitterArray(None, a, rabi, 0.0))


def test_free_cubic(sp0):
    gp = GapProducts(sp0)
    d, k = 1.5, 0.3
    roots = pole_polynomial_roots(gp, d, k)
    ref = np.roots([1, -2 * d, d * d, k * k])
    assert np.allclose(np.sort_complex(roots), np.sort_complex(ref), atol=1e-12)
    real = [r for r in roots if r.imag == 0]
    assert len(real) == 1 and real[0].real < 0
    upper, _ = physical_poles(gp, d, k, roots)
    bound = [p for p in upper if p.kind == "bound-state"]
    assert len(bound) == 1
    # partial fractions of E / [(E - D)^2 E + k^2] on the physical branch
    E = bound[0].energy
    dP = 3 * E * E - 4 * d * E + d * d
    assert abs(bound[0].residue - 2 * (E - d) * E / dP) < 1e-12


def test_decoupled_roots(gp25):
    r = pole_polynomial_roots(gp25, 1.7, 0.0)
    assert np.allclose(np.sort(r.real), np.sort(np.concatenate([[1.7, 1.7], gp25.a_edges])))


def test_roots_against_multiprecision(sp25, gp25, a20):
    d = 0.5 * sum(sp25.band(1))
    k = _kappa(a20, 1.0)
    mpmath.mp.dps = 30
    x = mpmath.mpf
    # expand (E - d)^2 prod(E - a) + k^2 prod(E - b) with exact coefficients
    def poly_from_roots(rs):
        c = [x(1)]
        for r in rs:
            c = [ci - x(r) * cj for ci, cj in zip(c + [x(0)], [x(0)] + c)]
        return c
    A = poly_from_roots(list(gp25.a_edges) + [d, d])
    B = poly_from_roots(list(gp25.b_edges))
    B = [x(0)] * (len(A) - len(B)) + [x(k) ** 2 * b for b in B]
    coeffs = [a + b for a, b in zip(A, B)]
    ref = mpmath.polyroots(coeffs, maxsteps=400, extraprec=400)
    ref = np.sort_complex(np.array([complex(r) for r in ref]))
    mine = pole_polynomial_roots(gp25, d, k)
    assert np.max(np.abs(mine - ref) / np.maximum(1, np.abs(ref))) < 1e-9
    # layout: at least one real root per gap and one complex pair
    cplx = [r for r in mine if r.imag != 0]
    assert len(cplx) == 2 and abs(cplx[0] - np.conj(cplx[1])) < 1e-12
    for n in range(1, sp25.cutoff + 1):
        lo, hi = sp25.gap(n)
        if hi - lo > 1e-10:
            assert any(lo - 1e-9 <= r.real <= hi + 1e-9 for r in mine if r.imag == 0)


def test_markov_pole_unique(sp25, gp25):
    d = 0.5 * sum(sp25.band(1))
    upper, allp = physical_poles(gp25, d, 0.01)
    cplx = [p for p in allp if p.energy.imag != 0]
    assert sum(p.physical for p in cplx) == 1
    assert all(not p.physical for p in cplx if p.energy.imag > 0)


def test_pole_below_spectrum_is_bound(sp25, gp25):
    d = sp25.even_edges[0] - 1.0
    upper, _ = physical_poles(gp25, d, 0.01)
    near = min(upper, key=lambda p: abs(p.energy - d))
    assert near.kind == "bound-state" and abs(near.energy - d) < 0.05


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("side", [-1, 1])
def test_in_gap_sheet_rule(sp25, gp25, n, side):
    # small kappa: the pole next to E_An is physical iff sign(D - E_An) = (-1)^n
    EA = sp25.even_edges[n]
    d = EA + side * 0.7
    _, allp = physical_poles(gp25, d, 1e-3)
    p = min((q for q in allp if q.energy.imag == 0), key=lambda q: abs(q.energy - EA))
    assert p.physical == (np.sign(d - EA) == (-1) ** n)


def test_residue_decoupled_limit(sp25, gp25):
    # in a gap E - D = O(kappa), so 1 - alpha vanishes linearly
    d = 0.5 * sum(sp25.gap(1))
    miss = []
    for k in (1e-5, 5e-6, 1e-9):
        upper, _ = physical_poles(gp25, d, k)
        p = min(upper, key=lambda q: abs(q.energy - d))
        miss.append(abs(p.residue - 1))
    assert abs(miss[0] / miss[1] - 2) < 0.01
    assert miss[2] < 1e-8


def test_weak_coupling_scaling(sp25, gp25):
    d = 0.5 * sum(sp25.band(2))
    errs = []
    for k in (1e-3, 5e-4):
        est, _ = weak_coupling_estimates(gp25, d, k)
        roots = pole_polynomial_roots(gp25, d, k)
        real = np.array([r.real for r in roots if r.imag == 0])
        e = max(np.min(np.abs(real - x)) for x in est[:4])
        errs.append(e)
    assert 12 < errs[0] / errs[1] < 20
    est0, _ = weak_coupling_estimates(gp25, d, 0.0)
    assert np.allclose(est0, gp25.a_edges)


def test_weak_coupling_width(sp25, gp25):
    d = 0.5 * sum(sp25.band(1))
    k = 0.01
    _, pair = weak_coupling_estimates(gp25, d, k)
    s = gp25.upper_real(np.array([d]))[0]
    assert abs(pair[0].imag + k * s.real) < 1e-14
    upper, _ = physical_poles(gp25, d, k)
    m = [p for p in upper if p.kind == "Markovian"][0]
    assert abs(m.energy - pair[0]) < 10 * k * k


def test_phase_map_decoupled_and_counts(sp25, gp25, a20):
    D = np.array([0.5 * sum(sp25.gap(1)), 0.5 * sum(sp25.band(1))])
    pm = phase_maps(sp25, a20, D, [1e-4, 2e-4], gp25)
    assert abs(pm.bound_sum[0, 0] - 1) < 1e-6 and pm.markov_norm[0, 0] == 0
    assert pm.bound_sum[0, 1] < 1e-3 and abs(pm.markov_norm[0, 1] - 1) < 1e-3
    EB = sp25.odd_edges[0]
    pm = phase_maps(sp25, a20, [EB - 0.05, EB + 0.05], [1.0, 1.01], gp25)
    assert pm.n_bound[0, 0] != pm.n_bound[0, 1]
    with pytest.raises(ValueError):
        phase_maps(sp25, a20, [1.0], [1.0, 2.0], gp25)


@pytest.mark.slow
def test_phase_map_matches_long_time_oracle(sp25, gp25, a20):
    """Bound fraction vs the EOM oracle averaged over t in [40, 60]."""
    D = np.array([-0.5, 0.4, 2.0, 3.5, 6.0])
    pm = phase_maps(sp25, a20, D, [1.0, 1.1], gp25)
    t = np.linspace(40, 60, 201)
    for j, d in enumerate(D):
        arr = EmitterArray.chain(1, a20, 1.0, d)
        P = eom_oracle(sp25, arr, np.concatenate([[0.0], t]), q_max=10.0, n_modes=8192).populations[1:, 0]
        assert abs(P.mean() - pm.bound_sum[0, j]) <= 0.02


@settings(max_examples=300, deadline=None)
@given(d=st.floats(-1, 12), rabi=st.floats(0.05, 4), V=st.sampled_from([0.5, 2.5, 6.0]))
def test_no_bound_state_in_continuum(d, rabi, V):
    sp = spec(V)
    gp = GapProducts(sp)
    k = _kappa(20 ** -0.25, rabi)
    try:
        upper, allp = physical_poles(gp, d, k)
    except OnCutError:
        return
    for p in upper:
        if p.energy.imag == 0:
            assert sp.locate(p.energy.real)[0] != "band"
    cplx = [p.energy for p in allp if p.energy.imag != 0]
    for z in cplx:
        assert min(abs(np.conj(z) - w) for w in cplx) < 1e-8
    assert all(not p.physical for p in allp if p.energy.imag > 0)
    bound = [p.residue.real for p in upper if p.kind == "bound-state"]
    assert all(0 < a <= 1 + 1e-12 for a in bound)
    assert sum(bound) <= 1 + 1e-9


def test_pole_continuity(sp25, gp25):
    d, k = 1.0, 0.05
    r1 = pole_polynomial_roots(gp25, d, k)
    r2 = pole_polynomial_roots(gp25, d + 1e-6, k)
    assert np.max(np.abs(r1 - r2)) < 1e-4


def test_on_cut_detection(gp25):
    e = gp25.edges[1]
    with pytest.raises(OnCutError):
        sheet_classify(complex(e, -0.3), gp25, 1.0, 0.1)
