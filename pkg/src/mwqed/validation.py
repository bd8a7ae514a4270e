"""Oracle-equivalence and invariant checks behind ``mwqed validate``.

Each criterion function returns a list of :class:`Check` records with the
measured error next to its tolerance. ``tol`` overrides let a caller tamper
with a tolerance and see the specific check flip.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
import math
import time
import warnings

import numpy as np
from scipy.optimize import brentq
from scipy.signal import argrelextrema

from .bath import EmitterArray, GapProducts, a_ho_from_depth, coupling_kappa, rabi_for_kappa
from .boundstates import (bs_momentum_distribution, bs_spatial_profile, find_bound_states,
                          fit_decay_rate, lattice_momentum_integral_check)
from .dynamics import (amplitude_evolution, decay_with_modes, eom_oracle,
                       resolvent_dynamics_N)
from .polaritons import (band_center_offset, engineered_detuning_bands, hopping_rates,
                         polariton_bands, polariton_dynamics, sum_rule_errors)
from .spectrum import physical_poles, pole_polynomial_roots
from .vacuum import (LatticeParams, bloch_at_origin, bloch_deriv_at_origin,
                     characteristic_energies, density_of_states, discriminant_ode,
                     franck_condon, lattice_momentum, product_T)

__all__ = ["Check", "CRITERIA", "FAST", "FULL", "run_suite"]

V_A, V_B, KAPPA, DELTA_4B = 20.0, 2.5, 0.082, 1.32


@dataclass
class Check:
    name: str
    value: float
    tol: float
    passed: bool
    seconds: float = 0.0
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{flag} {self.name}: {self.value:.3g} vs {self.tol:.3g}{extra}"


def _le(name, value, tol, tols, t0, detail=""):
    # "*" replaces every upper-bound tolerance, a check name overrides one
    tol = tols.get(name, tols.get("*", tol))
    return Check(name, float(value), float(tol), bool(value <= tol),
                 time.perf_counter() - t0, detail)


def _ge(name, value, bound, tols, t0, detail=""):
    # lower bounds: passed when value >= bound
    bound = tols.get(name, bound)
    return Check(name, float(value), float(bound), bool(value >= bound),
                 time.perf_counter() - t0, detail)


def _spec(V, cutoff=10):
    return characteristic_energies(LatticeParams(V), cutoff)


def _fig4b_arr(n):
    a = a_ho_from_depth(V_A)
    return EmitterArray.chain(n, a, rabi_for_kappa(KAPPA, a), DELTA_4B)


# --------------------------------------------------------------------------
# criteria


def discriminant(tols=None, depths=(0.5, 2.5, 10.0, -2.6)):
    """Product form of T(E) against direct ODE integration."""
    tols = tols or {}
    out = []
    E = np.linspace(-5, 30, 200)
    for V in depths:
        t0 = time.perf_counter()
        sp = _spec(V)
        err = np.max(np.abs(product_T(sp, E) - discriminant_ode(sp.params, E)))
        out.append(_le(f"discriminant V={V:g}", err, 1e-6, tols, t0))
    return out


def free_particle(tols=None):
    """Closed forms of q, rho, psi(0), psi'(0), gamma_q at V_b = 0."""
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(0.0)
    E = np.linspace(0.05, 25, 40)
    q = np.linspace(-4, 4, 33)
    a = 0.3
    errs = [
        np.max(np.abs(lattice_momentum(sp, E) - np.sqrt(E))),
        np.max(np.abs(density_of_states(sp, E) - 1 / np.sqrt(E))),
        np.max(np.abs(bloch_at_origin(sp, E) - 1 / math.sqrt(math.pi))),
        np.max(np.abs(bloch_deriv_at_origin(sp, E) - 1j * np.sqrt(E / math.pi))),
        np.max(np.abs(franck_condon(sp, a, q) - (4 * math.pi * a * a) ** 0.25
                      * np.exp(-q * q * a * a / 2) / math.sqrt(math.pi))),
    ]
    names = ["q", "rho", "psi0", "dpsi0", "gamma"]
    return [_le(f"free-particle {n}", e, 1e-10, tols, t0) for n, e in zip(names, errs)]


def _bound_fraction(gp, delta, kappa):
    upper, _ = physical_poles(gp, delta, kappa, pole_polynomial_roots(gp, delta, kappa))
    return float(sum(abs(p.residue) ** 2 for p in upper if p.kind == "bound-state"))


def ultra_markov(tols=None):
    """Half-life and bound fraction above E_B1; reabsorption above E_A0."""
    tols = tols or {}
    sp = _spec(V_B)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_A)
    out = []
    t0 = time.perf_counter()
    D = sp.odd_edges[0] + 0.2
    k = coupling_kappa(EmitterArray(None, a, 2.5, D))
    P = lambda x: abs(amplitude_evolution(gp, sp, D, k, [x]).amplitudes[0, 0]) ** 2  # noqa: E731
    th = brentq(lambda x: P(x) - 0.5, 0.05, 1.5, xtol=1e-6)
    out.append(_le("ultra-Markov half-life |t - 0.52|", abs(th - 0.52), 0.02, tols, t0,
                   f"t_half = {th:.4f}"))
    bf = _bound_fraction(gp, D, k)
    out.append(_le("ultra-Markov bound fraction", bf, 0.10, tols, t0))
    t0 = time.perf_counter()
    D = sp.even_edges[0] + 0.2
    k = coupling_kappa(EmitterArray(None, a, 2.5, D))
    t = np.linspace(0, 10, 2001)
    Pt = np.abs(amplitude_evolution(gp, sp, D, k, t).amplitudes[:, 0]) ** 2
    mx = argrelextrema(Pt, np.greater)[0]
    first = t[mx[0]] if mx.size else math.inf
    out.append(_le("reabsorption maximum |t - 2.5|", abs(first - 2.5), 0.2, tols, t0,
                   f"t_max = {first:.3f}"))
    after = Pt[t >= (t[np.argmin(Pt[t < first])] if mx.size else 0)]
    out.append(_ge("reabsorption peak-to-trough", after.max() - after.min(), 0.2, tols, t0))
    return out


def oracle_equivalence(tols=None):
    """Analytic single emitter and N=3 resolvent against the EOM oracle."""
    tols = tols or {}
    sp = _spec(V_B)
    gp = GapProducts(sp)
    t = np.linspace(0, 10, 101)
    out = []
    t0 = time.perf_counter()
    arr = _fig4b_arr(1)
    an = amplitude_evolution(gp, sp, DELTA_4B, KAPPA, t).amplitudes[:, 0]
    orc = eom_oracle(sp, arr, t).amplitudes[:, 0]
    out.append(_le("oracle equivalence N=1", np.max(np.abs(an - orc)), 1e-3, tols, t0))
    t0 = time.perf_counter()
    arr = _fig4b_arr(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = resolvent_dynamics_N(sp, arr, t, gp)
    orc = eom_oracle(sp, arr, t)
    out.append(_le("oracle equivalence N=3", np.max(np.abs(res.amplitudes - orc.amplitudes)),
                   5e-3, tols, t0, res.metadata.get("route", "")))
    return out


def unitarity(tols=None):
    """Emitter plus mode norm on the analytic and oracle decay runs."""
    tols = tols or {}
    sp = _spec(V_B)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_A)
    t = np.linspace(0, 10, 21)
    runs = [("fig4b", _fig4b_arr(1)),
            ("ultra-Markov", EmitterArray.chain(1, a, 2.5, sp.odd_edges[0] + 0.2)),
            ("reabsorption", EmitterArray.chain(1, a, 2.5, sp.even_edges[0] + 0.2))]
    out = []
    for name, arr in runs:
        t0 = time.perf_counter()
        tr = decay_with_modes(gp, sp, arr, t, per_band=64)
        out.append(_le(f"unitarity analytic {name}", np.max(np.abs(tr.total_norm - 1)),
                       1e-6, tols, t0))
    for name, arr in runs[:1] + [("fig4b N=3", _fig4b_arr(3))]:
        t0 = time.perf_counter()
        tr = eom_oracle(sp, arr, t)
        out.append(_le(f"unitarity oracle {name}", np.max(np.abs(tr.total_norm - 1)),
                       1e-8, tols, t0))
    return out


def completeness(tols=None, draws=50, seed=7):
    """A(0) = 1 from poles plus branch integrals at random (Delta, Omega)."""
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(V_B)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_A)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for D, R in zip(rng.uniform(-1.0, 8.0, draws), rng.uniform(0.05, 3.0, draws)):
        k = coupling_kappa(EmitterArray(None, a, R, D))
        A0 = amplitude_evolution(gp, sp, D, k, [0.0]).amplitudes[0, 0]
        worst = max(worst, abs(A0 - 1))
    return [_le(f"completeness A(0) ({draws} draws)", worst, 1e-6, tols, t0)]


def polariton_rules(tols=None, n_q=257):
    """Residue sum rules and the N=inf vs N=31 trace."""
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(V_B)
    arr = _fig4b_arr(1)
    b = polariton_bands(sp, arr, np.linspace(-1, 1, n_q))
    e = sum_rule_errors(b)
    out = [_le(f"polariton sum rule {k}", v, 1e-8, tols, t0) for k, v in e.items()]
    t0 = time.perf_counter()
    t = np.linspace(0, 6, 25)
    trI = polariton_dynamics(b, arr, t)
    j0 = int(np.flatnonzero(trI.metadata["positions"] == 0)[0])
    orc = eom_oracle(sp, _fig4b_arr(31), t, mode="exact")
    err = np.max(np.abs(trI.amplitudes[:, j0] - orc.amplitudes[:, 15]))
    out.append(_le("polariton N=inf vs N=31", err, 1e-2, tols, t0))
    return out


def band_engineering(tols=None):
    """Double hopping of the engineered ground polariton band."""
    tols = tols or {}
    t0 = time.perf_counter()
    spa, spb = _spec(12.0), _spec(-0.4949)
    off = band_center_offset(spb, spa, 2, 1, 0.0742)
    b = engineered_detuning_bands(spb, spa, 2, 0.626, off)
    J = np.real(hopping_rates(b, 1, 2))
    return [_le("hopping |J1| / |J2|", abs(J[1]) / abs(J[2]), 0.05, tols, t0,
                f"J1 = {J[1]:.4g}, J2 = {J[2]:.4g}"),
            _ge("hopping |J2|", abs(J[2]), 1e-12, tols, t0)]


def bound_state(tols=None):
    """First-gap bound state at the fig4a preset parameters."""
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(V_B)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_A)
    D = sum(sp.gap(1)) / 2
    arr = EmitterArray.chain(1, a, rabi_for_kappa(KAPPA, a), D)
    s = next(x for x in find_bound_states(sp, arr, gp) if x.gap_index == 1)
    z = np.linspace(-8, 8, 801) * math.pi
    B = bs_spatial_profile(sp, arr, s.energy, z, A0=s.norm_A0, products=gp)
    out = [_le("bound state imaginary part", np.max(np.abs(B.imag)) / np.max(np.abs(B)),
               1e-8, tols, t0),
           _le("bound state symmetry", np.max(np.abs(B - B[::-1])) / np.max(np.abs(B)),
               1e-8, tols, t0)]
    zc = np.arange(4, 16) * math.pi
    Bc = bs_spatial_profile(sp, arr, s.energy, zc, A0=s.norm_A0, products=gp)
    rate, carrier = fit_decay_rate(zc, Bc)
    imq = lattice_momentum(sp, s.energy).imag
    out.append(_le("bound state decay rate (relative)", abs(rate - imq) / imq, 0.01, tols, t0))
    # carrier wavenumbers are reduced modulo the reciprocal vector 2k
    out.append(_le("bound state carrier - gap index", abs(carrier - s.gap_index % 2),
                   1e-6, tols, t0))
    q = np.linspace(-3, 3, 601)
    Pq = bs_momentum_distribution(sp, arr, s.energy, q, A0=s.norm_A0)
    peaks = q[argrelextrema(Pq, np.greater)[0]]
    top = np.sort(np.abs(peaks[np.argsort(Pq[argrelextrema(Pq, np.greater)[0]])[-2:]]))
    out.append(_le("bound state momentum peaks at +-1", float(np.max(np.abs(top - 1))),
                   0.02, tols, t0, f"peaks {peaks}"))
    out.append(_le("bound state A(0)^2 - alpha", abs(s.norm_A0 ** 2 - s.residue.real),
                   1e-6, tols, t0))
    return out


def momentum_identity(tols=None):
    """Momentum-integral identity at the documented complex energy."""
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(4.0)
    lhs, rhs = lattice_momentum_integral_check(sp, 0.5, 0.7, 0.0, 0.0, 1 + 2j)
    return [_le("momentum-integral identity (relative)", abs(lhs - rhs) / abs(rhs), 1e-5, tols, t0)]


CRITERIA = {1: discriminant, 2: free_particle, 3: ultra_markov, 4: oracle_equivalence,
            5: unitarity, 6: completeness, 7: polariton_rules, 8: band_engineering,
            9: bound_state, 10: momentum_identity}


def _fast_discriminant(tols=None):
    return discriminant(tols, depths=(2.5,))


def _fast_completeness(tols=None):
    return completeness(tols, draws=8)


def _fast_polariton(tols=None):
    tols = tols or {}
    t0 = time.perf_counter()
    b = polariton_bands(_spec(V_B), _fig4b_arr(1))
    return [_le(f"polariton sum rule {k}", v, 1e-8, tols, t0)
            for k, v in sum_rule_errors(b).items()]


def _fast_unitarity(tols=None):
    tols = tols or {}
    t0 = time.perf_counter()
    tr = eom_oracle(_spec(V_B), _fig4b_arr(1), np.linspace(0, 10, 21))
    return [_le("unitarity oracle fig4b", np.max(np.abs(tr.total_norm - 1)), 1e-8, tols, t0)]


def _phase_map_spots(tols=None):
    """Bound residues of the phase map against the mode-sum normalization."""
    from .boundstates import bs_normalization
    from .spectrum import phase_maps
    tols = tols or {}
    t0 = time.perf_counter()
    sp = _spec(V_B)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_A)
    worst = 0.0
    for D, R in ((0.5, 1.0), (2.0, 2.0), (3.5, 0.8)):
        pm = phase_maps(sp, a, [D, D + 0.1], [R, R + 0.1], gp)
        arr = EmitterArray.chain(1, a, R, D)
        ref = sum(bs_normalization(sp, arr, s.energy) ** 4
                  for s in find_bound_states(sp, arr, gp))
        worst = max(worst, abs(pm.bound_sum[0, 0] - ref))
    return [_le("phase map bound_sum spot checks", worst, 1e-6, tols, t0)]


FAST = [_fast_discriminant, free_particle, _fast_unitarity, _fast_polariton, _fast_completeness]
FULL = FAST[:] + [lambda t=None: discriminant(t, depths=(0.5, 10.0, -2.6)), ultra_markov,
                  oracle_equivalence, unitarity, completeness, polariton_rules,
                  band_engineering, bound_state, momentum_identity, _phase_map_spots]


def run_suite(suite: str = "fast", tols: dict | None = None) -> dict:
    """Run a suite; returns a JSON-ready report with ``ok`` and every check."""
    if suite not in ("fast", "full"):
        raise ValueError("suite must be 'fast' or 'full'")
    checks = []
    t0 = time.perf_counter()
    for fn in (FAST if suite == "fast" else FULL):
        try:
            checks += fn(tols or {})
        except Exception as exc:  # a crashing check is a failing check
            name = getattr(fn, "__name__", "check")
            checks.append(Check(name, math.nan, math.nan, False, 0.0, f"error: {exc}"))
    return {"suite": suite, "ok": all(c.passed for c in checks),
            "seconds": time.perf_counter() - t0,
            "checks": [asdict(c) for c in checks]}
