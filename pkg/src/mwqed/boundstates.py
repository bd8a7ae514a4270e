"""Bound states of a single emitter: normalization, momentum content and
spatial shape, plus the lattice momentum-integral identity behind them.

A bound state sits at a real physical pole ``E_BS`` inside a gap. Its
matter-wave part is ``B_q = (Omega/2) gamma_q A(0) / (E_BS - eps_q)`` and in
position space it is the Gaussian emitter convolved with the lattice Green's
function at ``E_BS``. Two coupling models are offered throughout:

* ``'tight'``: ``(Omega/2)^2 |gamma_q|^2 -> 2 kappa |psi_q(0)|^2``, the model
  whose poles :mod:`mwqed.spectrum` computes;
* ``'exact'``: the Gaussian overlap of the finite-width emitter.
"""
from __future__ import annotations

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .bath import (EmitterArray, GapProducts, _erfc_times_gauss, coupling_kappa,
                   gtilde_exact)
from .dynamics import _band_data, mode_quadrature
from .spectrum import physical_poles
from .vacuum import (VacuumSpectrum, bloch_coefficients_q, fourier_coeffs,
                     franck_condon, lattice_momentum, mathieu_cs)

__all__ = ["BoundState", "find_bound_states", "bs_normalization",
           "bs_mode_amplitudes", "bs_momentum_distribution", "bs_spatial_profile",
           "bs_profile_tight", "fit_decay_rate", "lattice_momentum_integral_check",
           "upper_sheet_sqrt", "appendix_integrand"]


@dataclass(frozen=True)
class BoundState:
    """A bound state of one emitter.

    Attributes
    ----------
    energy : float
        ``E_BS`` (E_r), inside gap ``gap_index``.
    gap_index : int
        0 is the region below the lowest band.
    norm_A0 : float
        Emitter amplitude ``A(0)`` of the normalized state.
    decay_length_inv : float
        ``Im q(E_BS)`` in units of k.
    carrier_wavenumber : float
        ``Re q(E_BS)``, equal to ``gap_index``.
    residue : float
        Pole residue ``alpha(E_BS)``; equals ``A(0)^2``.
    """

    energy: float
    gap_index: int
    norm_A0: float
    decay_length_inv: float
    carrier_wavenumber: float
    residue: float


def _couplings(spectrum, arr, q, mode):
    """``eps_q`` and the squared mode coupling ``(Omega/2)^2 |gamma_q|^2``."""
    eps, p0 = _band_data(spectrum, q)
    if mode == "tight":
        return eps, 2 * coupling_kappa(arr) * p0
    if mode == "exact":
        return eps, (arr.rabi / 2) ** 2 * np.abs(franck_condon(spectrum, arr.a_ho, q)) ** 2
    raise ValueError("mode must be 'tight' or 'exact'")


def _tight_tail(kappa, V, E, Q):
    """``int_{|q|>Q} dq/2 2 kappa / (pi (q^2 + V/2 - E)^2)``."""
    c = V / 2 - E
    v, _ = quad(lambda q: 1.0 / (q * q + c) ** 2, Q, math.inf, epsabs=1e-15,
                epsrel=1e-12)
    return 2 * kappa / math.pi * v


def bs_normalization(spectrum: VacuumSpectrum, arr: EmitterArray, E_BS: float,
                     mode: str = "tight", per_band: int = 128) -> float:
    """Emitter amplitude ``A(0)`` of the bound state at ``E_BS``.

    ``A(0) = [1 + sum_q (Omega/2)^2 |gamma_q|^2 / (E_BS - eps_q)^2]^(-1/2)``
    with ``sum_q = int dq/2`` over the extended zone, Gauss-Legendre per
    half band up to the cutoff and an analytic free-particle tail beyond.
    """
    q, w = mode_quadrature(spectrum, per_band=per_band)
    eps, g2 = _couplings(spectrum, arr, q, mode)
    s = float(np.sum(w * g2 / (E_BS - eps) ** 2))
    if mode == "tight":
        s += _tight_tail(coupling_kappa(arr), spectrum.depth, E_BS, spectrum.cutoff)
    return 1.0 / math.sqrt(1.0 + s)


def _gap_of(spectrum, E):
    kind, n = spectrum.locate(E)
    if kind != "gap":
        raise ValueError(f"E = {E:.6g} is not inside a gap")
    return n


def find_bound_states(spectrum: VacuumSpectrum, arr: EmitterArray,
                      products: GapProducts | None = None, mode: str = "tight",
                      per_band: int = 128, min_residue: float = 1e-6
                      ) -> list[BoundState]:
    """All bound states of a single emitter.

    ``'tight'`` takes the real physical poles of :mod:`mwqed.spectrum`;
    ``'exact'`` moves each of them onto the zero of ``E - Delta + i G(E)``
    with the finite-width correlation, bracketed inside the same gap.
    Poles pressed against the edge of a narrow high gap carry residues of
    order ``1e-8`` and below; those under ``min_residue`` are skipped.
    """
    if products is None:
        products = GapProducts(spectrum)
    kap = coupling_kappa(arr)
    upper, _ = physical_poles(products, arr.detuning, kap)
    out = []
    for p in upper:
        if p.kind != "bound-state" or abs(p.residue) < min_residue:
            continue
        E = p.energy.real
        n = _gap_of(spectrum, E)
        alpha = float(p.residue.real)
        if mode == "exact":
            try:
                E, alpha = _exact_pole(spectrum, arr, products, E, n)
            except RuntimeError as exc:
                warnings.warn(f"gap {n}: {exc}; state dropped", RuntimeWarning,
                              stacklevel=2)
                continue
        A0 = bs_normalization(spectrum, arr, E, mode, per_band)
        q = complex(lattice_momentum(spectrum, E))
        out.append(BoundState(E, n, A0, q.imag, q.real, alpha))
    return out


def _exact_pole(spectrum, arr, products, E, n):
    lo = -math.inf if n == 0 else spectrum.gap(n)[0]
    hi = spectrum.even_edges[0] if n == 0 else spectrum.gap(n)[1]
    f = lambda x: (x - arr.detuning + 1j * gtilde_exact(  # noqa: E731
        spectrum, arr, x, products=products)).real
    w = 0.05 * (hi - lo) if np.isfinite(lo) else 0.5
    a, b = max(E - w, lo + 1e-9), min(E + w, hi - 1e-9)
    while f(a) * f(b) > 0:
        w *= 2
        a, b = max(E - w, lo + 1e-9), min(E + w, hi - 1e-9)
        if w > 1e3:
            raise RuntimeError("exact bound-state pole not bracketed")
    E = brentq(f, a, b, xtol=1e-14, rtol=1e-15)
    h = 1e-5 * max(1.0, abs(E))
    dG = (gtilde_exact(spectrum, arr, E + h, products=products)
          - gtilde_exact(spectrum, arr, E - h, products=products)) / (2 * h)
    return E, float((1.0 / (1.0 + 1j * dG)).real)


def bs_mode_amplitudes(spectrum: VacuumSpectrum, arr: EmitterArray, E_BS: float,
                       q_grid, A0: float | None = None, mode: str = "tight"):
    """Complex ``B_q = (Omega/2) gamma_q A(0) / (E_BS - eps_q)`` at ``t = 0``.

    The tight model uses ``(Omega/2) gamma_q -> sqrt(2 kappa) psi_q(0)`` with
    the phase of the per-cell normalized Bloch wave (``sum c_n >= 0``).
    """
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if A0 is None:
        A0 = bs_normalization(spectrum, arr, E_BS, mode)
    eps, _ = _band_data(spectrum, q)
    if mode == "tight":
        amp = np.empty(q.shape, dtype=complex)
        for i, qq in enumerate(q):
            _, _, c = bloch_coefficients_q(spectrum.depth, qq)
            amp[i] = np.conj(c.sum())
        amp *= math.sqrt(2 * coupling_kappa(arr))
    elif mode == "exact":
        amp = arr.rabi / 2 * franck_condon(spectrum, arr.a_ho, q)
    else:
        raise ValueError("mode must be 'tight' or 'exact'")
    return amp * A0 / (E_BS - eps)


def bs_momentum_distribution(spectrum: VacuumSpectrum, arr: EmitterArray,
                             E_BS: float, q_grid, A0: float | None = None,
                             mode: str = "tight"):
    """``|B_q|^2`` of the bound state; constant in time."""
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if A0 is None:
        A0 = bs_normalization(spectrum, arr, E_BS, mode)
    eps, g2 = _couplings(spectrum, arr, q, mode)
    return g2 * A0 ** 2 / (E_BS - eps) ** 2


def _gap_sqrt(products, E):
    """``sqrt(Pi_B/A)`` at a real gap energy, read as ``E + i0``."""
    return complex(products.upper_real(np.array([float(E)]))[0])


def bs_spatial_profile(spectrum: VacuumSpectrum, arr: EmitterArray, E_BS: float,
                       z_grid, t: float = 0.0, A0: float | None = None,
                       products: GapProducts | None = None, M: int | None = None,
                       mode: str = "exact"):
    """Position-space matter wave ``B_S(z, t)`` of the bound state.

    With ``B_r = q + 2r`` and the plane-wave coefficients ``u`` at
    ``E_BS``::

        B_S(z, t) = -i (sqrt(Pi)/pi) sqrt(2a) Omega A(0) pi^(5/4) / 8
                    exp(-i E_BS t) sum_{m,r} u_m u_r exp(-B_r^2 a^2 / 2)
                    [exp(i(q + 2m)z) erfc(-i B_r a/sqrt2 - z/(sqrt2 a))
                     + (z -> -z)]

    ``sqrt(Pi)/pi`` is ``rho psi^2(0)`` formed before any square root, so the
    product stays regular where ``rho`` vanishes and ``psi(0)`` diverges.
    ``mode='tight'`` returns :func:`bs_profile_tight` instead.

    Parameters
    ----------
    z_grid : array_like
        Positions in units of 1/k.
    t : float
        Time in the Schroedinger picture; only a global phase.
    M : int, optional
        Half-width of the plane-wave window (default: grown to 1e-15).
    """
    if mode == "tight":
        return bs_profile_tight(spectrum, arr, E_BS, z_grid, t, A0, products)
    if products is None:
        products = GapProducts(spectrum, min_gap=0.0)
    if A0 is None:
        A0 = bs_normalization(spectrum, arr, E_BS, "exact")
    z = np.asarray(z_grid, dtype=float)
    a = arr.a_ho
    coef = fourier_coeffs(spectrum, complex(E_BS), M=M, tol=1e-15)
    q, u, n = coef.q, coef.coeffs, coef.indices
    if M is None:
        keep = np.abs(u) > 1e-18 * np.abs(u).max()
        u, n = u[keep], n[keep]
    rp = _gap_sqrt(products, E_BS) / math.pi
    pref = -1j * rp * math.sqrt(2 * a) * arr.rabi * A0 * math.pi ** 1.25 / 8
    Kr = q + 2 * n  # B_r
    G = (Kr * a) ** 2 / 2
    zz = z.ravel()
    out = np.zeros(zz.shape, dtype=complex)
    for sgn in (1.0, -1.0):
        X = -1j * Kr[None, :] * a / math.sqrt(2) - sgn * zz[:, None] / (math.sqrt(2) * a)
        # erfc side, weighted by u_r, folded with the plane-wave side per m
        for um, nm in zip(u, n):
            ph = 1j * (q + 2 * nm) * sgn * zz[:, None]
            out += um * np.sum(u[None, :] * _erfc_times_gauss(X, G[None, :] - ph), axis=1)
    return (pref * np.exp(-1j * E_BS * t) * out).reshape(z.shape)


def bs_profile_tight(spectrum: VacuumSpectrum, arr: EmitterArray, E_BS: float,
                     z_grid, t: float = 0.0, A0: float | None = None,
                     products: GapProducts | None = None):
    """Point-emitter limit of :func:`bs_spatial_profile`.

    ``B_S(z) = -(i/2) sqrt(2 kappa) A(0) sqrt(Pi) [C(|z|) + i S(|z|)/sqrt(Pi)]``
    on the first cell, continued outward with the Floquet factor
    ``exp(i pi q)`` per cell so the decaying solution is never built from
    two growing ones.
    """
    if products is None:
        products = GapProducts(spectrum)
    if A0 is None:
        A0 = bs_normalization(spectrum, arr, E_BS, "tight")
    z = np.abs(np.asarray(z_grid, dtype=float))
    s = _gap_sqrt(products, E_BS)
    q = complex(lattice_momentum(spectrum, E_BS))
    cell = np.floor(z / math.pi)
    r = z - cell * math.pi
    C, S = mathieu_cs(spectrum, complex(E_BS), r.ravel())
    shape = (C + 1j * S / s).reshape(z.shape) * np.exp(1j * math.pi * q * cell)
    pref = -0.5j * math.sqrt(2 * coupling_kappa(arr)) * A0 * s
    return pref * shape * np.exp(-1j * E_BS * t)


def fit_decay_rate(z, B, period: float = math.pi):
    """Decay constant and carrier of a Bloch-type evanescent wave.

    Samples one point per cell (``z`` must step by exactly one period) and
    fits ``log|B|`` linearly; the carrier comes from the phase advance per
    cell, ``Re q = angle(B(z + pi)/B(z))/pi`` modulo 2.

    Returns
    -------
    (decay, carrier_mod2) : tuple of float
    """
    z = np.asarray(z, dtype=float)
    B = np.asarray(B, dtype=complex)
    if not np.allclose(np.diff(z), period):
        raise ValueError("fit_decay_rate needs one sample per lattice period")
    slope = np.polyfit(z, np.log(np.abs(B)), 1)[0]
    r = B[1:] / B[:-1]
    ph = np.angle(np.mean(r / np.abs(r))) / math.pi
    return -slope, float(np.mod(ph, 2.0))


# --------------------------------------------------------------------------
# The lattice momentum-integral identity


def upper_sheet_sqrt(products: GapProducts, E):
    """``sqrt(Pi_B/A)`` on the sheet with ``Im q >= 0`` (cuts on the bands).

    Principal root above the axis, its Schwarz reflection ``-conj(sqrt(Pi(E*)))``
    below it.
    """
    E = np.asarray(E, dtype=complex)
    with np.errstate(all="ignore"):
        up = np.sqrt(products.ratio(np.where(E.imag >= 0, E, np.conj(E))))
    return np.where(E.imag >= 0, up, -np.conj(up))


def _heaviside(x, tol=1e-14):
    return 0.5 if abs(x) <= tol else (1.0 if x > 0 else 0.0)


def _pole_term(spectrum, products, E0, za, zb, d):
    """``-pi i psi(-za) psi(zb) rho e^{iqd}`` at ``E0``; ``psi(0)^2 rho = sqrt(Pi)/pi``."""
    s = complex(upper_sheet_sqrt(products, E0))
    Ca, Sa = mathieu_cs(spectrum, E0, np.array([-za]))
    Cb, Sb = mathieu_cs(spectrum, E0, np.array([zb]))
    pa = complex(Ca[0] + 1j * Sa[0] / s)
    pb = complex(Cb[0] + 1j * Sb[0] / s)
    q = complex(lattice_momentum(spectrum, E0))
    return -1j * s * pa * pb * np.exp(1j * q * d)


def lattice_momentum_integral_check(spectrum: VacuumSpectrum, z1: float, z2: float,
                                    zj: float, zJ: float, E0: complex,
                                    q_max: float = 40.0, per_unit: int = 48,
                                    products: GapProducts | None = None):
    """Both sides of the Bloch-wave momentum integral identity.

    ``lhs = int dq conj(psi_q(z1)) psi_q(z2) exp(iq(zj - zJ)) / (E0 - eps_q)``
    over the extended zone by Gauss-Legendre panels up to ``q_max`` plus a
    plane-wave tail, and

    ``rhs = -pi i psi(-z1) psi(z2) rho e^{iq(zj - zJ)} H(z2 + zj - z1 - zJ)
    + (z1 <-> z2, zJ <-> zj)`` at ``q = q(E0)`` on the upper sheet.

    ``zj`` and ``zJ`` are emitter sites, integer multiples of the period
    ``pi``; only then is ``exp(iq(zj - zJ))`` the Floquet factor of the
    Bloch waves.

    Returns
    -------
    (lhs, rhs) : tuple of complex
    """
    E0 = complex(E0)
    if E0.imag == 0:
        raise ValueError("E0 must be off the real axis")
    if products is None:
        products = GapProducts(spectrum, min_gap=0.0)
    V = spectrum.depth
    d = zj - zJ
    x, w = np.polynomial.legendre.leggauss(per_unit)
    Q = int(math.ceil(q_max))
    lhs = 0j
    for k in range(-Q, Q):
        qs = k + 0.5 * (x + 1)
        for qq, ww in zip(qs, 0.5 * w):
            E, n, c = bloch_coefficients_q(V, qq)
            pa = np.sum(c * np.exp(1j * (qq + 2 * n) * z1))
            pb = np.sum(c * np.exp(1j * (qq + 2 * n) * z2))
            lhs += ww * np.conj(pa) * pb * np.exp(1j * qq * d) / (E0 - E)
    # plane-wave tail, both signs of q folded into a cosine
    L = z2 - z1 + d
    c0 = E0 - V / 2

    def tail(part):
        f = lambda q: (2.0 / (math.pi * (c0 - q * q))).real if part == 0 else (  # noqa: E731
            2.0 / (math.pi * (c0 - q * q))).imag
        if abs(L) < 1e-14:
            return quad(f, Q, math.inf, epsabs=1e-14, epsrel=1e-12)[0]
        return quad(f, Q, math.inf, weight="cos", wvar=abs(L))[0]
    lhs += tail(0) + 1j * tail(1)
    rhs = (_pole_term(spectrum, products, E0, z1, z2, d) * _heaviside(z2 + zj - z1 - zJ)
           + _pole_term(spectrum, products, E0, z2, z1, -d) * _heaviside(z1 + zJ - z2 - zj))
    return complex(lhs), complex(rhs)


def appendix_integrand(spectrum: VacuumSpectrum, z1: float, z2: float, E0: complex,
                       E_grid, zj: float = 0.0, zJ: float = 0.0,
                       products: GapProducts | None = None):
    """``psi(-z1) psi(z2) rho e^{iq(zj - zJ)} / (2(E0 - E))`` on the upper sheet.

    The integrand of the energy-plane form of the momentum integral, for
    domain-coloring plots. Bloch waves are built from the Mathieu pair, so
    the grid should stay within a few tens of E_r.
    """
    if products is None:
        products = GapProducts(spectrum, min_gap=0.0)
    E = np.asarray(E_grid, dtype=complex)
    out = np.empty(E.shape, dtype=complex)
    s = upper_sheet_sqrt(products, E)
    for idx, e in np.ndenumerate(E):
        Ca, Sa = mathieu_cs(spectrum, e, np.array([-z1]))
        Cb, Sb = mathieu_cs(spectrum, e, np.array([z2]))
        r = 1j / s[idx]
        val = s[idx] / math.pi * (Ca[0] + r * Sa[0]) * (Cb[0] + r * Sb[0])
        if zj != zJ:
            q = complex(lattice_momentum(spectrum, e))
            val *= np.exp(1j * q * (zj - zJ))
        out[idx] = val / (2 * (E0 - e))
    return out
