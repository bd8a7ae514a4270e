"""Bath correlation functions of the emitter array.

``i G_{j-J}(E) = (Omega/2)^2 sum_q |gamma_q|^2 exp(iq(z_j - z_J)) / (eps_q - E)``
with ``sum_q = int dq/2`` over the extended zone. For tightly confined
emitters this collapses to ``G_0(E) = kappa sqrt(Pi_B/A(E))`` built from the
truncated gap products.

Physical sheet
--------------
The square root ``sqrt(Pi_B/A)`` is taken on the principal branch in the
upper half-plane, where it has positive real part. Real energies are read as
``E + i0``. Below the real axis the function is continued straight down
from ``x + i0``, which places the branch cuts on vertical rays hanging from
every band edge. :meth:`GapProducts.phys_sqrt` evaluates that continuation
by tracking the phase of ``Pi_B/A`` along the vertical path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.special import erfcx

from . import kernels
from .vacuum import (VacuumSpectrum, bloch_at_origin, fourier_coeffs,
                     lattice_momentum, product_T)

__all__ = ["EmitterArray", "GapProducts", "coupling_kappa", "rabi_for_kappa",
           "a_ho_from_depth", "gtilde_tight", "gtilde_exact", "gtilde_matrix",
           "floquet_multiplier"]


def a_ho_from_depth(depth_a: float) -> float:
    """Harmonic-oscillator length of a deep site, ``V_a^(-1/4)`` in 1/k."""
    if depth_a <= 0:
        raise ValueError("the emitter lattice depth must be positive")
    return depth_a ** -0.25


@dataclass(frozen=True)
class EmitterArray:
    """Emitters sitting at the sites ``z_j = j pi`` of the deep lattice.

    Parameters
    ----------
    positions : array_like of int
        Site indices ``j``. ``None`` marks the infinite array.
    a_ho : float
        Harmonic-oscillator length (1/k).
    rabi : float
        Coupling ``hbar Omega`` in E_r.
    detuning : float
        ``hbar Delta`` in E_r.
    initial_amplitudes : array_like, optional
        ``A_j(0)``; defaults to the central emitter excited.
    """

    positions: np.ndarray | None
    a_ho: float
    rabi: float
    detuning: float
    initial_amplitudes: np.ndarray | None = None
    n_sites: int | float = field(init=False)

    def __post_init__(self):
        if not self.a_ho > 0:
            raise ValueError("a_ho must be positive")
        if self.positions is None:
            object.__setattr__(self, "n_sites", math.inf)
            return
        pos = np.asarray(self.positions, dtype=int)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "n_sites", len(pos))
        if self.initial_amplitudes is None:
            a0 = np.zeros(len(pos), dtype=complex)
            a0[len(pos) // 2] = 1.0
        else:
            a0 = np.asarray(self.initial_amplitudes, dtype=complex)
            if a0.shape != pos.shape:
                raise ValueError("initial_amplitudes must match positions")
        object.__setattr__(self, "initial_amplitudes", a0)

    @classmethod
    def chain(cls, n_sites, a_ho, rabi, detuning, initial_amplitudes=None):
        """Contiguous chain of ``n_sites`` emitters centred on site 0."""
        pos = np.arange(n_sites) - n_sites // 2
        return cls(pos, a_ho, rabi, detuning, initial_amplitudes)

    @property
    def tightness(self) -> float:
        """``a_ho k``; the tight-emitter forms need this to be small."""
        return self.a_ho

    @property
    def kappa(self) -> float:
        return coupling_kappa(self)


def coupling_kappa(arr: EmitterArray) -> float:
    """Coupling constant ``kappa = (Omega/2)^2 a_ho sqrt(2 pi m)`` in E_r^(3/2).

    With ``m = 1/2`` in recoil units this is ``(Omega/2)^2 a_ho sqrt(pi)``.
    """
    return (arr.rabi / 2) ** 2 * arr.a_ho * math.sqrt(math.pi)


def rabi_for_kappa(kappa: float, a_ho: float) -> float:
    """Invert :func:`coupling_kappa` for ``hbar Omega``."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return 2.0 * math.sqrt(kappa / (a_ho * math.sqrt(math.pi)))


def _floquet_inside(T):
    """Root of ``lam^2 - 2 T lam + 1`` inside the unit circle, overflow safe."""
    T = np.asarray(T, dtype=complex)
    with np.errstate(all="ignore"):
        huge = ~np.isfinite(T) | (np.abs(T) > 1e150)
        Ts = np.where(huge, 0.0, T)
        r = np.sqrt(Ts * Ts - 1 + 0j)
        big = np.where(np.abs(Ts + r) >= np.abs(Ts - r), Ts + r, Ts - r)
        lin = 1.0 / big
        lin = np.where(huge, np.where(np.isfinite(T), 0.5 / T, 0.0), lin)
    return lin


def floquet_multiplier(spectrum: VacuumSpectrum, E, inside):
    """Root of ``lam^2 - 2 T(E) lam + 1 = 0`` inside or outside the unit circle."""
    with np.errstate(over="ignore", invalid="ignore"):
        lin = _floquet_inside(product_T(spectrum, E))
        return np.where(inside, lin, 1.0 / lin)


class GapProducts:
    """Truncated gap products ``Pi_A``, ``Pi_B`` and their ratio.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    min_gap : float
        Gaps narrower than this are dropped; their edge pair contributes a
        factor indistinguishable from one and only costs conditioning.

    Attributes
    ----------
    a_edges : ndarray
        ``E_A0`` followed by the even edges of the retained gaps.
    b_edges : ndarray
        Odd edges of the retained gaps, aligned with ``a_edges[1:]``.
    """

    def __init__(self, spectrum: VacuumSpectrum, min_gap: float = 1e-10):
        self.spectrum = spectrum
        keep = spectrum.gap_widths > min_gap
        self.gaps = np.flatnonzero(keep) + 1
        self.a_edges = np.concatenate([[spectrum.even_edges[0]],
                                       spectrum.even_edges[1:][keep]])
        self.b_edges = np.asarray(spectrum.odd_edges[keep], dtype=float)
        self.edges = np.sort(np.concatenate([self.a_edges, self.b_edges]))

    # -- products ---------------------------------------------------------
    def pi_a(self, E):
        E = np.asarray(E, dtype=complex)
        return np.prod(E[..., None] - self.a_edges, axis=-1)

    def pi_b(self, E):
        E = np.asarray(E, dtype=complex)
        return np.prod(E[..., None] - self.b_edges, axis=-1)

    def ratio(self, E):
        """``Pi_B/A(E)`` with paired factors."""
        E = np.asarray(E, dtype=complex)
        return kernels.paired_product(E, self.b_edges, self.a_edges[1:]) / (
            E - self.a_edges[0])

    def dlog(self, E):
        """``d/dE log Pi_B/A``."""
        E = np.asarray(E, dtype=complex)
        return kernels.paired_logderiv(E, self.b_edges, self.a_edges[1:]) - 1.0 / (
            E - self.a_edges[0])

    def dratio(self, E):
        """``d/dE Pi_B/A`` (analytic)."""
        return self.ratio(E) * self.dlog(E)

    def residues(self):
        """Residues of ``Pi_B/A`` at its poles ``a_edges``."""
        a, b = self.a_edges, self.b_edges
        out = np.empty(len(a))
        for i, e in enumerate(a):
            others = np.delete(a, i)
            out[i] = np.prod(e - b) / np.prod(e - others)
        return out

    # -- sheets -----------------------------------------------------------
    def region(self, x):
        """+1 where real ``x`` lies in a band, -1 in a gap (incl. below E_A0)."""
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.edges, x, side="right")
        return np.where(k % 2 == 1, 1, -1)

    def upper_real(self, x):
        """``sqrt(Pi_B/A(x + i0))`` for real ``x``."""
        x = np.asarray(x, dtype=float)
        p = self.ratio(x).real
        d = self.dratio(x).real
        with np.errstate(invalid="ignore"):
            return np.where(p >= 0, np.sqrt(np.abs(p)) + 0j,
                            1j * np.sign(d) * np.sqrt(np.abs(p)))

    def phys_sqrt(self, E, npts: int = 160):
        """``sqrt(Pi_B/A)`` on the physical sheet (vertical-ray cuts)."""
        scalar = np.ndim(E) == 0
        E = np.atleast_1d(np.asarray(E, dtype=complex))
        out = np.empty(E.shape, dtype=complex)
        up = E.imag > 0
        out[up] = np.sqrt(self.ratio(E[up]))
        re = E.imag == 0
        out[re] = self.upper_real(E[re].real)
        lo = E.imag < 0
        if np.any(lo):
            out[lo] = self._track_down(E[lo], npts)
        return complex(out[0]) if scalar else out

    def _track_down(self, E, npts):
        x = E.real
        Y = -E.imag
        top = self.upper_real(x)
        s = np.geomspace(1e-10, 1.0, npts)
        for _ in range(5):
            pts = x[:, None] - 1j * Y[:, None] * s[None, :]
            ang0 = 2 * np.angle(top)
            P = self.ratio(pts)
            ang = np.concatenate([ang0[:, None], np.angle(P)], axis=1)
            step = np.diff(ang, axis=1)
            step = (step + np.pi) % (2 * np.pi) - np.pi
            if np.max(np.abs(step)) < 1.5:
                break
            s = np.sort(np.concatenate([s, np.sqrt(s[1:] * s[:-1])]))
        phase = ang0 + step.sum(axis=1)
        return np.sqrt(np.abs(P[:, -1])) * np.exp(0.5j * phase)

    def phys_floquet(self, E):
        """Floquet multiplier ``exp(i pi q)`` continued on the physical sheet.

        Inside the unit circle above the axis and below gaps, outside below
        bands (the continuation through a band crosses ``|lam| = 1``).
        """
        mu, outside = self.phys_floquet_parts(E)
        with np.errstate(divide="ignore"):
            return np.where(outside, 1.0 / mu, mu)

    def phys_floquet_parts(self, E):
        """``(mu, outside)``: the inside multiplier and whether the physical
        one is ``1/mu``. Stays finite deep in the lower half-plane."""
        E = np.asarray(E, dtype=complex)
        outside = (E.imag < 0) & (self.region(E.real) > 0)
        with np.errstate(over="ignore", invalid="ignore"):
            mu = _floquet_inside(product_T(self.spectrum, E))
        return mu, outside

    def ray_sign_profile(self, edge, side, zmin=1e-10, zmax=1e6, npts=2000):
        """Ratio physical/principal root along one side of an edge ray.

        Parameters
        ----------
        edge : float
        side : {-1, +1}
            Left (-1) or right (+1) lip of the vertical ray below ``edge``.

        Returns
        -------
        zs, signs : ndarray
            Log-spaced depths and the integer sign (+1 or -1) at each.
        """
        zs = np.geomspace(zmin, zmax, npts)
        x = edge + side * 1e-11 * max(1.0, abs(edge))
        vals = self._track_path(x, zs)
        prin = np.sqrt(self.ratio(x - 1j * zs))
        return zs, np.rint((vals / prin).real).astype(int)

    def _track_path(self, x, zs):
        top = self.upper_real(np.array([x]))[0]
        P = self.ratio(x - 1j * zs)
        ang = np.unwrap(np.concatenate([[2 * np.angle(top)], np.angle(P)]))
        return np.sqrt(np.abs(P)) * np.exp(0.5j * ang[1:])


def gtilde_tight(products: GapProducts, E, site_sep: int = 0,
                 kappa: float = 1.0, a_ho: float | None = None):
    """Tight-emitter bath correlation ``hbar G_d(E) = kappa sqrt(Pi) lam^|d|``.

    Parameters
    ----------
    products : GapProducts
    E : complex or array_like
        Real energies are read as ``E + i0``.
    site_sep : int
        ``d = j - J``.
    kappa : float
    a_ho : float, optional
        Only used to warn when the emitters are not tight (``a_ho k > 0.3``).
    """
    if a_ho is not None and a_ho > 0.3:
        warnings.warn(f"a_ho k = {a_ho:.3g} is not small; tight form is crude",
                      stacklevel=2)
    g = kappa * products.phys_sqrt(E)
    if site_sep == 0:
        return g
    lam = products.phys_floquet(E)
    return g * lam ** abs(site_sep)


def _erfc_times_gauss(X, G):
    """``exp(-G) erfc(X)`` without overflow."""
    X = np.asarray(X, dtype=complex)
    pos = X.real >= 0
    with np.errstate(over="ignore", invalid="ignore"):
        a = erfcx(np.where(pos, X, -X)) * np.exp(-G - X * X)
        return np.where(pos, a, 2 * np.exp(-G) - a)


def gtilde_exact(spectrum: VacuumSpectrum, arr: EmitterArray, E, j: int = 0,
                 J: int = 0, products: GapProducts | None = None,
                 tol: float = 1e-14):
    """Finite-width bath correlation ``hbar G_{j-J}(E)`` as an erfc double sum.

    With ``A = q + 2m``, ``B = q + 2r``, ``K = q + m + r`` and
    ``d = z_j - z_J``::

        hbar G = (Omega^2 a pi^(3/2) / 8) rho psi^2(0) sum_{m,r} u_m u_r
                 exp(-(A^2 + B^2) a^2 / 2)
                 [exp(iqd) erfc(-iKa - d/2a) + exp(-iqd) erfc(-iKa + d/2a)]

    where ``rho psi^2(0) = sqrt(Pi_B/A) / pi`` on the physical sheet and
    ``u`` are the plane-wave coefficients at ``E``. Valid for ``Im E >= 0``.
    """
    E = complex(E)
    if products is None:
        products = GapProducts(spectrum, min_gap=0.0)
    a = arr.a_ho
    d = (j - J) * math.pi
    rp = products.phys_sqrt(E) / math.pi
    coef = fourier_coeffs(spectrum, E)
    q = coef.q
    u = coef.coeffs
    n = coef.indices
    # the Gaussian envelope makes far coefficients irrelevant
    env = np.abs(u) * np.exp(-((q + 2 * n).real * a) ** 2 / 2)
    keep = env > tol * 1e-3 * env.max()
    u, n = u[keep], n[keep]
    A = q + 2 * n[:, None]
    B = q + 2 * n[None, :]
    K = q + n[:, None] + n[None, :]
    G = (A * A + B * B) * a * a / 2
    w = u[:, None] * u[None, :]
    tot = 0j
    for sgn in (1.0, -1.0):
        X = -1j * K * a - sgn * d / (2 * a)
        tot = tot + np.exp(1j * q * sgn * d) * np.sum(w * _erfc_times_gauss(X, G))
    return arr.rabi ** 2 * a * math.pi ** 1.5 / 8 * rp * tot


def gtilde_matrix(spectrum: VacuumSpectrum, arr: EmitterArray, E,
                  mode: str = "tight", products: GapProducts | None = None):
    """Toeplitz matrix ``hbar G_{j-J}(E)`` over the finite array.

    Parameters
    ----------
    mode : {'tight', 'exact'}
    """
    if not np.isfinite(arr.n_sites):
        raise ValueError("gtilde_matrix needs a finite array")
    if products is None:
        products = GapProducts(spectrum)
    pos = arr.positions
    seps = np.unique(np.abs(pos[:, None] - pos[None, :]))
    if mode == "tight":
        kap = coupling_kappa(arr)
        vals = {int(d): gtilde_tight(products, E, int(d), kap) for d in seps}
    elif mode == "exact":
        vals = {int(d): gtilde_exact(spectrum, arr, E, 0, int(d), products)
                for d in seps}
    else:
        raise ValueError("mode must be 'tight' or 'exact'")
    d = np.abs(pos[:, None] - pos[None, :])
    out = np.empty(d.shape, dtype=complex)
    for k, v in vals.items():
        out[d == k] = v
    return out
