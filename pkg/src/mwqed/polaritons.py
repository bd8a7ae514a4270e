"""Matter-wave polaritons of the infinite emitter array.

For the infinite array every quasi-momentum ``q`` (reduced zone) decouples.
With photon bands ``eps_m(q)`` and couplings ``w_m(q) = (Omega/2)^2
|gamma_m(q)|^2`` the polariton energies solve

    f(E) = E - Delta(q) + sum_m w_m / (eps_m - E) = 0,

which is increasing between consecutive poles, so every interval holds
exactly one root. The residue of band ``n`` is ``r_n = 1 / f'(E_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.optimize import brentq

from .bath import EmitterArray, coupling_kappa
from .dynamics import DecayTrace
from .vacuum import VacuumSpectrum, hill_bands

__all__ = ["PolaritonBands", "BracketFailure", "photon_window", "g_eigenvalue",
           "polariton_bands", "polariton_dynamics", "engineered_detuning_bands",
           "hopping_rates", "sum_rule_errors", "two_lattice_overlaps"]

#: couplings below this fraction of the largest one count as decoupled
DECOUPLED = 1e-28


class BracketFailure(RuntimeError):
    """A polariton root could not be bracketed between two photon poles."""


@dataclass
class PolaritonBands:
    """Polariton bands on a quasi-momentum grid.

    Attributes
    ----------
    q_grid : ndarray, shape (nq,)
    energies : ndarray, shape (nq, nb)
        ``E_n(q)``, ascending in ``n``.
    residues : ndarray, shape (nq, nb)
        Emitter weights ``r_n(q)``.
    detuning_fn : ndarray, shape (nq,)
        ``hbar Delta(q)``.
    photon_energies, couplings : ndarray, shape (nq, M)
        The photon window ``eps_m(q)`` and ``w_m(q)`` the bands were solved
        with.
    band_count : int
        ``nb``; all bands of the window are kept.
    tail : str
        ``'none'`` or ``'free'`` (smooth photon tail beyond the window).
    failures : list
        ``(iq, n, message)`` for brackets that could not be solved.
    pole_index, pole_offset : ndarray, shape (nq, nb)
        Nearest photon band of every root and the signed distance to it.
    """

    q_grid: np.ndarray
    energies: np.ndarray
    residues: np.ndarray
    detuning_fn: np.ndarray
    photon_energies: np.ndarray
    couplings: np.ndarray
    band_count: int
    tail: str = "none"
    tail_params: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    pole_index: np.ndarray | None = None
    pole_offset: np.ndarray | None = None

    def denominators(self, i: int) -> np.ndarray:
        """``E_n - eps_m`` at grid point ``i``, shape (M, nb).

        The entry of each band's nearest photon pole is taken from the
        stored offset, which survives roots squeezed against a pole.
        """
        d = self.energies[i][None, :] - self.photon_energies[i][:, None]
        if self.pole_index is not None:
            eps = self.photon_energies[i]
            for n in range(self.band_count):
                near = _same(eps, eps[self.pole_index[i, n]])
                d[near, n] = self.pole_offset[i, n]
        return d


# --------------------------------------------------------------------------
# photon window


def photon_window(V: float, q: float, a_ho: float, rabi: float, n_photon: int,
                  mode: str = "exact", size: int | None = None):
    """Photon bands and couplings at reduced quasi-momentum ``q``.

    Returns
    -------
    eps, w : ndarray, shape (n_photon,)
        ``eps_m(q)`` ascending and ``w_m = (Omega/2)^2 |gamma_m|^2`` with
        ``gamma = <psi_q | phi_0>`` for the Gaussian emitter (``'exact'``) or
        its point limit (``'tight'``).
    """
    if size is None:
        size = n_photon + 14 + int(2 * math.sqrt(abs(V)))
    eps, c = hill_bands(V, q, n_photon, size=size, vectors=True)
    qr = (q + 1.0) % 2.0 - 1.0
    n = np.arange(-size, size + 1)
    pref = (4 * math.pi * a_ho ** 2) ** 0.25
    if mode == "tight":
        gam = pref * np.abs(c.sum(axis=0))
    elif mode == "exact":
        env = np.exp(-(qr + 2 * n) ** 2 * a_ho ** 2 / 2)
        gam = pref * np.abs(env @ c)
    else:
        raise ValueError("mode must be 'tight' or 'exact'")
    return eps, (rabi / 2) ** 2 * gam ** 2


def _free_sum(x, c):
    """``sum_n 1 / ((x + 2n)^2 + c)`` over all integers (complex ``c`` allowed)."""
    s = np.sqrt(complex(c))
    if abs(s) < 1e-8:
        # c -> 0 limit
        return complex((math.pi / 2) ** 2 / math.sin(math.pi * x / 2) ** 2)
    return (math.pi / (2 * s)) * np.sinh(math.pi * s) / (np.cosh(math.pi * s)
                                                        - math.cos(math.pi * x))


class _Tail:
    """Smooth self-energy of the photon bands above a tight window.

    Bands beyond the window are taken as free, ``(q + 2n)^2 + V/2``, with
    ``|psi(0)|^2 = 1/pi``; their plane-wave labels are the ones not used by
    the window's lowest bands.
    """

    def __init__(self, V, q, kappa, n_window, K=4000):
        self.V = V
        self.x = (q + 1.0) % 2.0 - 1.0
        self.w = 2 * kappa / math.pi
        n = np.arange(-K, K + 1)
        k2 = (self.x + 2 * n) ** 2
        order = np.argsort(k2, kind="stable")
        self.inside = k2[order[:n_window]]
        self.outside = k2[order[n_window:]]

    def value(self, E):
        c = self.V / 2 - E
        full = _free_sum(self.x, c).real
        return self.w * (full - np.sum(1.0 / (self.inside + c)))

    def deriv(self, E):
        c = self.V / 2 - E
        # the explicit outer sum converges like K^-3
        return self.w * np.sum(1.0 / (self.outside + c) ** 2)


def _f(E, delta, eps, w, tail):
    v = E - delta + np.sum(w / (eps - E))
    return v + (tail.value(E) if tail is not None else 0.0)


def _df(E, eps, w, tail, j=None, off=None):
    d = eps - E
    if j is not None:
        d = d.copy()
        d[j] = -off
    v = 1.0 + np.sum(w / d ** 2)
    return v + (tail.deriv(E) if tail is not None else 0.0)


def _solve_sector(delta, eps, w, tail=None):
    """All roots of ``f`` in the window, their residues and pole offsets.

    Returns ``(E, r, idx, off)`` where ``idx[n]`` indexes the photon band
    nearest to root ``n`` and ``off[n] = E_n - eps[idx[n]]`` is kept to full
    relative precision even when the root is squeezed against that pole.
    Decoupled poles (vanishing ``w``) come back as bands pinned to their
    photon energy with zero residue.
    """
    wmax = float(np.max(w)) if w.size else 0.0
    live = w > DECOUPLED * max(wmax, 1e-300)
    # degenerate poles (zone-edge pairs) act as one pole with summed weight
    # plus a decoupled partner pinned at the same energy
    lead = live.copy()
    for m in range(1, eps.size):
        if live[m] and _same(eps[m], eps[m - 1]) and live[m - 1]:
            lead[m] = False
    where = np.flatnonzero(lead)
    pe = eps[lead]
    pw = np.array([w[live & _same(eps, e)].sum() for e in pe])
    E, r, idx, off = [], [], [], []
    bounds = np.concatenate([[-math.inf], pe, [math.inf]])
    for k in range(len(bounds) - 1):
        L, R = bounds[k], bounds[k + 1]
        if tail is not None and not np.isfinite(R):
            # above the window the tail's own poles take over; stop here
            break
        e, j, o = _root_between(delta, pe, pw, tail, L, R, k)
        E.append(e)
        r.append(1.0 / _df(e, pe, pw, tail, j, o))
        idx.append(where[j])
        off.append(o)
    dead = np.flatnonzero(~lead)
    E = np.concatenate([E, eps[dead]])
    r = np.concatenate([r, np.zeros(dead.size)])
    idx = np.concatenate([idx, dead]).astype(int)
    off = np.concatenate([off, np.zeros(dead.size)])
    o = np.argsort(E, kind="stable")
    return E[o], r[o], idx[o], off[o]


def _same(a, b):
    return np.abs(a - b) <= 1e-12 * np.maximum(1.0, np.abs(b))


def _nearest(E, eps, k):
    # index of the closer of the poles bounding interval k
    cand = [m for m in (k - 1, k) if 0 <= m < eps.size]
    j = min(cand, key=lambda m: abs(E - eps[m]))
    return E, j, E - eps[j]


def _root_between(delta, eps, w, tail, L, R, k):
    f = lambda E: _f(E, delta, eps, w, tail)  # noqa: E731
    tol = dict(xtol=1e-15, rtol=4 * np.finfo(float).eps)

    def squeezed(j):
        # f ~ g_j(E) + w_j / (eps_j - E) near pole j: E - eps_j = w_j / g_j
        o = w[j] / _g_without(eps[j], delta, eps, w, tail, j)
        return eps[j] + o, j, o

    if not np.isfinite(L):
        b = R - 1e-13 * max(1.0, abs(R))
        a = min(delta, R) - 1.0
        step = 1.0
        while f(a) > 0:
            step *= 2
            a -= step
            if step > 1e12:
                raise BracketFailure("no lower bracket below the first pole")
        if f(b) < 0:
            return squeezed(k)
        return _nearest(brentq(f, a, b, **tol), eps, k)
    a = L + 1e-13 * max(1.0, abs(L))
    if not np.isfinite(R):
        b = max(a, delta) + 1.0
        step = 1.0
        while f(b) < 0:
            step *= 2
            b += step
            if step > 1e12:
                raise BracketFailure("no upper bracket above the last pole")
        if f(a) > 0:
            return squeezed(k - 1)
        return _nearest(brentq(f, a, b, **tol), eps, k)
    b = R - 1e-13 * max(1.0, abs(R))
    if f(a) > 0:
        return squeezed(k - 1)
    if f(b) < 0:
        return squeezed(k)
    return _nearest(brentq(f, a, b, **tol), eps, k)


def _g_without(E, delta, eps, w, tail, k):
    m = np.ones(eps.size, dtype=bool)
    m[k] = False
    return _f(E, delta, eps[m], w[m], tail)


# --------------------------------------------------------------------------
# public operations


def _window_size(a_ho, mode, n_photon):
    if n_photon is not None:
        return int(n_photon)
    if mode == "exact":
        # |gamma|^2 ~ exp(-q^2 a^2): negligible once q a > 6.5
        return int(math.ceil(6.5 / a_ho)) + 4
    return 60


def g_eigenvalue(spectrum: VacuumSpectrum, arr: EmitterArray, q: float, E: float,
                 n_terms: int | None = None, mode: str = "exact") -> float:
    """Self-energy ``i hbar g_q(E) = sum_m w_m(q) / (eps_m(q) - E)``.

    In ``'exact'`` mode the window grows until the Gaussian couplings are
    negligible; ``'tight'`` adds the free-particle tail in closed form.

    Raises
    ------
    ValueError
        If ``E`` is within ``1e-12`` of a photon band energy.
    """
    V = spectrum.depth
    M = _window_size(arr.a_ho, mode, n_terms)
    eps, w = photon_window(V, q, arr.a_ho, arr.rabi, M, mode)
    if np.min(np.abs(eps - E)) < 1e-12 * max(1.0, abs(E)):
        raise ValueError(f"E = {E} sits on a photon band at q = {q}")
    val = float(np.sum(w / (eps - E)))
    if mode == "tight":
        val += _Tail(V, q, coupling_kappa(arr), M).value(E)
    return val


def polariton_bands(spectrum: VacuumSpectrum, arr: EmitterArray, q_grid=None,
                    n_bands: int | None = None, mode: str = "exact",
                    n_photon: int | None = None, detuning_fn=None,
                    couplings_fn=None) -> PolaritonBands:
    """Polariton bands ``E_n(q)`` and residues ``r_n(q)``.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    arr : EmitterArray
        Infinite array; only ``a_ho``, ``rabi`` and ``detuning`` are used.
    q_grid : array_like, optional
        Default: 257 points on ``[-1, 1]``.
    n_bands : int, optional
        Bands kept in the result (default: all of the window).
    mode : {'exact', 'tight'}
    n_photon : int, optional
        Photon window; default set by the Gaussian envelope (exact) or 60
        bands plus a free tail (tight).
    detuning_fn : array_like, optional
        ``Delta(q)`` on the grid, replacing the constant detuning.
    couplings_fn : callable, optional
        ``q -> (eps, w)`` replacing :func:`photon_window`.
    """
    q = np.linspace(-1, 1, 257) if q_grid is None else np.asarray(q_grid, float)
    V = spectrum.depth
    M = _window_size(arr.a_ho, mode, n_photon)
    if detuning_fn is None:
        dq = np.full(q.shape, float(arr.detuning))
    else:
        dq = np.asarray(detuning_fn, dtype=float)
    tail_on = mode == "tight" and couplings_fn is None
    kap = coupling_kappa(arr)
    Es, Rs, P, W, Ix, Off, fails = [], [], [], [], [], [], []
    for i, qq in enumerate(q):
        if couplings_fn is None:
            eps, w = photon_window(V, qq, arr.a_ho, arr.rabi, M, mode)
        else:
            eps, w = couplings_fn(qq)
        tail = _Tail(V, qq, kap, len(eps)) if tail_on else None
        try:
            E, r, ix, off = _solve_sector(dq[i], eps, w, tail)
        except BracketFailure as exc:
            fails.append((i, None, str(exc)))
            E = r = off = np.full(len(eps) + 1, np.nan)
            ix = np.zeros(len(eps) + 1, dtype=int)
        Es.append(E)
        Rs.append(r)
        Ix.append(ix)
        Off.append(off)
        P.append(eps)
        W.append(w)
    nb = min(len(e) for e in Es)
    if n_bands is not None:
        if n_bands < 2:
            raise ValueError("n_bands must be at least 2")
        nb = min(nb, int(n_bands))
    energies = np.array([e[:nb] for e in Es])
    residues = np.array([r[:nb] for r in Rs])
    return PolaritonBands(q, energies, residues, dq, np.array(P), np.array(W), nb,
                          "free" if tail_on else "none",
                          {"kappa": kap, "V": V} if tail_on else {}, fails,
                          np.array([x[:nb] for x in Ix]), np.array([x[:nb] for x in Off]))


def sum_rule_errors(bands: PolaritonBands) -> dict:
    """Worst deviation of each residue identity over the grid.

    ``sum r = 1``, ``sum r E = Delta``, ``sum r / (eps_m - E) = 0`` for every
    photon band of the window, and the distance of ``r`` outside ``[0, 1]``.
    Meaningful when every band of the window is kept.
    """
    r, E = bands.residues, bands.energies
    s0 = np.abs(r.sum(axis=1) - 1.0)
    s1 = np.abs((r * E).sum(axis=1) - bands.detuning_fn)
    s2 = []
    for i in range(r.shape[0]):
        w = bands.couplings[i]
        live = w > DECOUPLED * max(float(np.max(w)), 1e-300)
        d = bands.denominators(i)[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(r[i][None, :] == 0, 0.0, -r[i][None, :] / d)
        # weighted by g_m: the identity is photon-emitter orthogonality
        s2.append(np.max(np.abs(terms.sum(axis=1)) * np.sqrt(w[live])))
    box = np.maximum(0.0, np.maximum(-r, r - 1.0)).max(axis=1)
    return {"sum": float(s0.max()), "energy": float(s1.max()),
            "pole": float(np.max(s2)), "range": float(box.max())}


def polariton_dynamics(bands: PolaritonBands, arr: EmitterArray, times,
                       initial=None, alias_tol: float = 1e-6) -> DecayTrace:
    """Site amplitudes of the infinite array from the polariton bands.

    ``FA_q(t) = sum_n r_n(q) exp(-i (E_n(q) - Delta) t) FA_q(0)`` followed by
    the inverse lattice transform ``A_j = (1/2) int dq FA_q e^{i pi q j}``
    (trapezoid on the periodic grid). The photon content of every sector is
    carried along so that the total norm can be checked.

    Parameters
    ----------
    bands : PolaritonBands
        Uniform grid over one full period ``[-1, 1]`` including both ends.
    initial : dict, optional
        ``{site: amplitude}``; default is site 0 excited.
    """
    q = bands.q_grid
    if not (np.isclose(q[0], -1) and np.isclose(q[-1], 1)
            and np.allclose(np.diff(q), q[1] - q[0])):
        raise ValueError("polariton_dynamics needs a uniform grid on [-1, 1]")
    qs = q[:-1]
    nq = qs.size
    t = np.asarray(times, dtype=float)
    init = {0: 1.0} if initial is None else dict(initial)
    F0 = sum(a * np.exp(-1j * math.pi * qs * j) for j, a in init.items())
    r = bands.residues[:-1]
    E = bands.energies[:-1]
    ref = float(arr.detuning)
    ph = np.exp(-1j * (E[None, :, :] - ref) * t[:, None, None])  # (nt, nq, nb)
    FA = np.einsum("qn,tqn->tq", r, ph) * F0[None, :]
    sites = np.arange(nq) - nq // 2
    A = FA @ np.exp(1j * math.pi * np.outer(qs, sites)) / nq
    # photon amplitudes per sector: g_m sum_n r_n e^{-iE_n t} / (E_n - eps_m)
    w = bands.couplings[:-1]
    d = np.array([bands.denominators(i) for i in range(nq)])  # (nq, M, nb)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(r[:, None, :] == 0, 0.0, r[:, None, :] / d)
    B = np.einsum("qmn,tqn->tqm", K, ph) * (np.sqrt(w) * F0[:, None])[None]
    M = w.shape[1]
    edge = np.max(np.abs(A[:, [0, -1]]))
    if edge > alias_tol:
        warnings.warn(f"site window too small: |A| = {edge:.2g} at its edge",
                      RuntimeWarning, stacklevel=2)
    meta = {"route": "polariton bands (N = inf)", "detuning": ref,
            "n_q": nq, "n_bands": bands.band_count, "tail": bands.tail,
            "positions": sites}
    # photon modes: one per (q sample, photon band), weight 1/nq each
    return DecayTrace(t, A, mode_grid=np.repeat(qs, M),
                      mode_amplitudes=B.reshape(t.size, nq * M),
                      mode_weights=np.full(nq * M, 1.0 / nq), metadata=meta)


def two_lattice_overlaps(V_b: float, V_a: float, band_a: int, q: float,
                         n_photon: int, size: int | None = None):
    """Bloch overlaps ``<psi_m^(b)(q) | psi_band_a^(a)(q)>`` per cell.

    Both states are per-cell normalized on the same plane-wave labels; the
    relative phase is irrelevant for ``|gamma|^2``. Returns ``(eps_b, gamma)``.
    """
    if size is None:
        size = max(n_photon, band_a) + 14 + int(2 * math.sqrt(max(abs(V_a), abs(V_b))))
    eb, cb = hill_bands(V_b, q, n_photon, size=size, vectors=True)
    _, ca = hill_bands(V_a, q, band_a, size=size, vectors=True)
    gam = math.pi * (cb.conj().T @ ca[:, band_a - 1])
    return eb, gam


def engineered_detuning_bands(spectrum_b: VacuumSpectrum, spectrum_a: VacuumSpectrum,
                              band_a: int, rabi: float, offset: float, q_grid=None,
                              n_photon: int = 24, n_bands: int | None = None
                              ) -> PolaritonBands:
    """Polariton bands for an emitter band with its own dispersion.

    ``Delta(q) = eps^(a)_band_a(q) + offset`` and ``gamma_m(q)`` is the
    overlap of the photon Bloch state with the emitter Bloch state at the
    same quasi-momentum (:func:`two_lattice_overlaps`).
    """
    q = np.linspace(-1, 1, 257) if q_grid is None else np.asarray(q_grid, float)
    Va, Vb = spectrum_a.depth, spectrum_b.depth
    dq = np.array([hill_bands(Va, qq, band_a)[band_a - 1] for qq in q]) + offset

    def couplings(qq):
        eb, gam = two_lattice_overlaps(Vb, Va, band_a, qq, n_photon)
        return eb, (rabi / 2) ** 2 * np.abs(gam) ** 2

    # a is only read for the point-emitter window size; the couplings replace it
    arr = EmitterArray(None, 1.0, rabi, float(np.mean(dq)))
    return polariton_bands(spectrum_b, arr, q, n_bands=n_bands, detuning_fn=dq,
                           couplings_fn=couplings)


def band_center_offset(spectrum_b: VacuumSpectrum, spectrum_a: VacuumSpectrum,
                       band_a: int, band_b: int, detuning: float, n: int = 257):
    """Offset placing the centre of emitter band ``band_a`` ``detuning`` above
    the centre of photon band ``band_b`` (centre = mid-point of the range)."""
    q = np.linspace(-1, 1, n)
    ea = np.array([hill_bands(spectrum_a.depth, qq, band_a)[band_a - 1] for qq in q])
    eb = np.array([hill_bands(spectrum_b.depth, qq, band_b)[band_b - 1] for qq in q])
    ca = 0.5 * (ea.min() + ea.max())
    cb = 0.5 * (eb.min() + eb.max())
    return cb + detuning - ca


def hopping_rates(bands: PolaritonBands, band_index: int, j_max: int):
    """``J_j = -(1/2) int_{-1}^{1} E_n(q) exp(i pi j q) dq`` for ``j = 0..j_max``.

    Trapezoid rule on the uniform periodic grid (exact for trigonometric
    polynomials of degree below the grid size). ``band_index`` is 1-based.
    Real for bands symmetric in ``q``.
    """
    q = bands.q_grid
    if not (np.isclose(q[0], -1) and np.isclose(q[-1], 1)
            and np.allclose(np.diff(q), q[1] - q[0])):
        raise ValueError("hopping_rates needs a uniform grid on [-1, 1]")
    E = bands.energies[:-1, band_index - 1]
    qs = q[:-1]
    j = np.arange(j_max + 1)
    J = -(np.exp(1j * math.pi * np.outer(j, qs)) @ E) / qs.size
    if np.max(np.abs(J.imag)) <= 1e-12 * max(1.0, np.max(np.abs(J.real))):
        return J.real
    return J
