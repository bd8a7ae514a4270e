"""Band structure of the sinusoidal lattice and its complex-energy extension.

Units are fixed throughout the package: hbar = k = E_r = 1, so the mass is
1/2, the lattice period is pi and the Schroedinger equation reads
``-psi'' + V sin^2(z) psi = E psi``. Bloch waves are normalized to one per
lattice cell.

The lattice functions (discriminant, lattice momentum, density of states and
Bloch amplitudes at the origin) are evaluated from infinite products over
the characteristic energies of the lattice:

* ``E_An`` band edges hosting even (Mathieu cosine) waves, n = 0..cutoff,
* ``E_Bn`` band edges hosting odd (Mathieu sine) waves, n = 1..cutoff,
* ``E_Cn`` zeros of the discriminant (one per band),
* ``E_Dn`` extrema of the discriminant (one per gap).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq
from scipy.special import digamma, polygamma

from . import kernels

__all__ = [
    "LatticeParams", "VacuumSpectrum", "BlochCoefficients", "SingularEdgeError",
    "IntegrationError", "BracketError",
    "discriminant_ode", "characteristic_energies", "choose_cutoff", "product_T",
    "lattice_momentum", "density_of_states", "bloch_at_origin",
    "bloch_deriv_at_origin", "fourier_coeffs", "mathieu_cs", "bloch_wave",
    "band_energy", "franck_condon", "bloch_coefficients_q", "hill_bands",
]

#: gaps narrower than this are treated as closed (coincident edges)
DEGENERATE_GAP = 1e-12


class IntegrationError(RuntimeError):
    """Adaptive ODE integration failed to meet its tolerance."""


class BracketError(RuntimeError):
    """A characteristic root could not be isolated inside its band or gap."""


class SingularEdgeError(ValueError):
    """Plane-wave expansion is singular (odd band edge, psi(0) = 0)."""


@dataclass(frozen=True)
class LatticeParams:
    """Depth of one sinusoidal lattice ``V sin^2(kz)`` in recoil units.

    Parameters
    ----------
    depth : float
        Lattice depth in units of E_r. Negative depths are allowed; zero is
        the free particle.
    """

    depth: float
    recoil_momentum: float = field(default=1.0, init=False)
    recoil_energy: float = field(default=1.0, init=False)

    def __post_init__(self):
        if not np.isfinite(self.depth):
            raise ValueError("lattice depth must be finite")
        object.__setattr__(self, "depth", float(self.depth))


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VacuumSpectrum:
    """Characteristic energies of one lattice up to the gap cutoff.

    Attributes
    ----------
    params : LatticeParams
    cutoff : int
        Number of retained gaps (Lambda).
    even_edges : ndarray, shape (cutoff + 1,)
        ``E_A0 .. E_A(cutoff)``.
    odd_edges : ndarray, shape (cutoff,)
        ``E_B1 .. E_B(cutoff)``.
    zeros : ndarray, shape (cutoff,)
        ``E_C1 .. E_C(cutoff)``.
    extrema : ndarray, shape (cutoff,)
        ``E_D1 .. E_D(cutoff)``.
    product_zeros : ndarray
        Zeros of the discriminant used inside :func:`product_T`; this list
        is longer than ``zeros`` so that the product converges fast.
    """

    params: LatticeParams
    cutoff: int
    even_edges: np.ndarray
    odd_edges: np.ndarray
    zeros: np.ndarray
    extrema: np.ndarray
    product_zeros: np.ndarray

    @property
    def depth(self) -> float:
        return self.params.depth

    def gap(self, n: int) -> tuple[float, float]:
        """Lower and upper edge of gap ``n`` (1-based)."""
        if not 1 <= n <= self.cutoff:
            raise IndexError(f"gap index {n} outside 1..{self.cutoff}")
        a, b = self.even_edges[n], self.odd_edges[n - 1]
        return (min(a, b), max(a, b))

    def lower_label(self, n: int) -> str:
        """'A' or 'B': parity label of the lower edge of gap ``n``."""
        return "A" if self.even_edges[n] <= self.odd_edges[n - 1] else "B"

    def band(self, n: int) -> tuple[float, float]:
        """Energy interval of band ``n`` (1-based, n <= cutoff)."""
        if not 1 <= n <= self.cutoff:
            raise IndexError(f"band index {n} outside 1..{self.cutoff}")
        lo = self.even_edges[0] if n == 1 else self.gap(n - 1)[1]
        return (lo, self.gap(n)[0])

    @property
    def gap_widths(self) -> np.ndarray:
        return np.abs(self.even_edges[1:] - self.odd_edges)

    @property
    def sorted_edges(self) -> np.ndarray:
        """All band edges in ascending order (E_A0 first)."""
        return np.sort(np.concatenate([self.even_edges, self.odd_edges]))

    def locate(self, x: float) -> tuple[str, int]:
        """Classify a real energy as ``('gap', n)`` or ``('band', n)``.

        Gap 0 is the region below ``E_A0``. Energies above the last retained
        gap are reported in band ``cutoff + 1``.
        """
        if x < self.even_edges[0]:
            return ("gap", 0)
        for n in range(1, self.cutoff + 1):
            lo, hi = self.gap(n)
            if x < lo:
                return ("band", n)
            if x <= hi:
                return ("gap", n)
        return ("band", self.cutoff + 1)


@dataclass(frozen=True)
class BlochCoefficients:
    """Plane-wave coefficients ``upsilon_n`` with ``sum(upsilon) == 1``.

    ``coeffs[M + n]`` holds ``upsilon_n`` for ``n`` in ``[-M, M]``.
    """

    energy: complex
    q: complex
    coeffs: np.ndarray

    @property
    def M(self) -> int:
        return (len(self.coeffs) - 1) // 2

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    def __getitem__(self, n: int) -> complex:
        return self.coeffs[self.M + n]


# --------------------------------------------------------------------------
# ODE oracles


def _mathieu_rhs(V, E):
    def rhs(z, y):
        w = (V * math.sin(z) ** 2 - E)
        out = np.empty_like(y)
        out[0::4] = y[1::4]
        out[1::4] = w * y[0::4]
        out[2::4] = y[3::4]
        out[3::4] = w * y[2::4]
        return out
    return rhs


def _fundamental(V, E, zs, rtol):
    """Integrate C, C', S, S' for a vector of energies up to the points ``zs``."""
    E = np.atleast_1d(np.asarray(E, dtype=complex))
    y0 = np.tile(np.array([1, 0, 0, 1], dtype=complex), E.size)
    zs = np.atleast_1d(np.asarray(zs, dtype=float))
    zmax = float(zs.max())
    if zmax == 0.0:
        return np.tile(y0.reshape(-1, 4)[:, :, None], (1, 1, zs.size))
    sol = solve_ivp(_mathieu_rhs(V, E), (0.0, zmax), y0, method="DOP853",
                    t_eval=zs, rtol=rtol, atol=rtol * 1e-3)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol.y.reshape(E.size, 4, zs.size)


def discriminant_ode(params: LatticeParams, E, rtol: float = 1e-12):
    """Hill discriminant from direct integration over one lattice period.

    Parameters
    ----------
    params : LatticeParams
    E : complex or array_like
        Energies in E_r.
    rtol : float
        Relative tolerance of the DOP853 integrator.

    Returns
    -------
    complex or ndarray
        ``T(E) = (C(E, pi) + S'(E, pi)) / 2``.
    """
    scalar = np.ndim(E) == 0
    E = np.atleast_1d(np.asarray(E, dtype=complex))
    out = np.empty(E.size, dtype=complex)
    # modest batches keep the shared step size close to the per-energy one
    for s in range(0, E.size, 16):
        Y = _fundamental(params.depth, E[s:s + 16], [math.pi], rtol)
        out[s:s + 16] = 0.5 * (Y[:, 0, -1] + Y[:, 3, -1])
    return out[0] if scalar else out.reshape(np.shape(E))


def mathieu_cs(spectrum, E, z, derivatives: bool = False, rtol: float = 1e-12):
    """Unnormalized Mathieu cosine and sine at complex energy.

    Parameters
    ----------
    spectrum : VacuumSpectrum or LatticeParams
    E : complex
    z : float or array_like
        Positions in units of 1/k (any sign).
    derivatives : bool
        Also return ``C'`` and ``S'``.

    Returns
    -------
    C, S : ndarray
        Fundamental solutions with C(0)=1, C'(0)=0, S(0)=0, S'(0)=1.
    """
    params = getattr(spectrum, "params", spectrum)
    z = np.asarray(z, dtype=float)
    az = np.abs(z.ravel())
    order = np.argsort(az)
    uz, inv = np.unique(az[order], return_inverse=True)
    Y = _fundamental(params.depth, complex(E), uz, rtol)[0][:, inv]
    vals = np.empty((4, az.size), dtype=complex)
    vals[:, order] = Y
    sgn = np.sign(z.ravel())
    C, Cp, S, Sp = vals
    # C is even, S is odd in z
    Cp = Cp * np.where(sgn < 0, -1.0, 1.0)
    S = S * np.where(sgn < 0, -1.0, 1.0)
    shape = z.shape
    if derivatives:
        return (C.reshape(shape), S.reshape(shape), Cp.reshape(shape),
                Sp.reshape(shape))
    return C.reshape(shape), S.reshape(shape)


# --------------------------------------------------------------------------
# Matrix oracles and characteristic energies


def _parity_edges(V, count, size):
    """Band-edge energies from the four parity-resolved Fourier matrices."""
    m = np.arange(size, dtype=float)
    quarter = -V / 4.0
    off = np.full(size - 1, quarter)
    # q = 0 even: cos(2mz), the m=0 basis vector carries a sqrt(2)
    off_c = off.copy()
    off_c[0] *= math.sqrt(2.0)
    a_even = eigh_tridiagonal(4 * m ** 2 + V / 2, off_c, eigvals_only=True)
    # q = 0 odd: sin(2mz), m >= 1
    b_even = eigh_tridiagonal(4 * (m[1:]) ** 2 + V / 2, off[1:],
                              eigvals_only=True)
    # q = 1: cos((2m+1)z) and sin((2m+1)z); cos z sin^2 z folds back on itself
    d = (2 * m + 1) ** 2 + V / 2
    dc = d.copy()
    dc[0] -= V / 4
    ds = d.copy()
    ds[0] += V / 4
    a_odd = eigh_tridiagonal(dc, off, eigvals_only=True)
    b_odd = eigh_tridiagonal(ds, off, eigvals_only=True)
    EA = np.empty(count + 1)
    EB = np.empty(count)
    EA[0::2] = a_even[: len(EA[0::2])]
    EA[1::2] = a_odd[: len(EA[1::2])]
    # EB[n-1] is E_Bn: odd n from the q=1 sine block, even n from the q=0 one
    EB[0::2] = b_odd[: len(EB[0::2])]
    EB[1::2] = b_even[: len(EB[1::2])]
    return EA, EB


def hill_bands(V, q, n_bands, size=None, vectors=False):
    """Band energies at quasi-momentum ``q`` from the full Fourier matrix.

    Parameters
    ----------
    V : float
        Lattice depth.
    q : float
        Quasi-momentum; any real value (only ``q mod 2`` matters).
    n_bands : int
    size : int, optional
        Half-width M of the plane-wave window ``[-M, M]``.
    vectors : bool
        Also return per-cell normalized coefficient vectors.

    Returns
    -------
    E : ndarray, shape (n_bands,)
    c : ndarray, shape (2M + 1, n_bands), optional
        Coefficients of ``exp(i(q_r + 2n)z)`` with ``q_r`` the reduced
        quasi-momentum in ``[-1, 1)``.
    """
    if size is None:
        size = n_bands + 12 + int(math.sqrt(abs(V)))
    qr = (q + 1.0) % 2.0 - 1.0
    n = np.arange(-size, size + 1)
    sel = (0, n_bands - 1)
    d = (qr + 2 * n) ** 2 + V / 2
    off = np.full(2 * size, -V / 4)
    if not vectors:
        return eigh_tridiagonal(d, off, eigvals_only=True, select="i",
                                select_range=sel)
    w, v = eigh_tridiagonal(d, off, select="i", select_range=sel)
    v = v / math.sqrt(math.pi)
    return w, v


def _complex_step_dT(spectrum, x, h=1e-30):
    return product_T(spectrum, complex(x, h)).imag / h


def characteristic_energies(params: LatticeParams, cutoff: int = 10,
                            n_product_zeros: int | None = None,
                            matrix_size: int | None = None) -> VacuumSpectrum:
    """Compute the characteristic energies of the lattice.

    Parameters
    ----------
    params : LatticeParams
    cutoff : int
        Number of gaps Lambda >= 1.
    n_product_zeros : int, optional
        Number of discriminant zeros kept explicitly in :func:`product_T`
        (default ``max(4 * cutoff, 40)``).
    matrix_size : int, optional
        Size of the parity-resolved Fourier matrices.

    Returns
    -------
    VacuumSpectrum
    """
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    V = params.depth
    nz = max(4 * cutoff, 40) if n_product_zeros is None else int(n_product_zeros)
    nz = max(nz, cutoff)
    size = matrix_size or (max(nz, cutoff) + 30 + int(2 * math.sqrt(abs(V))))
    EA, EB = _parity_edges(V, cutoff, size)
    # zeros of T are the band energies at q = 1/2, one per band
    EC = hill_bands(V, 0.5, nz, size=size + 2)
    spec = VacuumSpectrum(params, cutoff, _frozen(EA), _frozen(EB),
                          _frozen(EC[:cutoff]), _frozen(np.zeros(cutoff)),
                          _frozen(EC))
    ED = np.empty(cutoff)
    for n in range(1, cutoff + 1):
        lo, hi = spec.gap(n)
        if hi - lo < 1e-9 * max(1.0, abs(lo)):
            ED[n - 1] = 0.5 * (lo + hi)
            continue
        f = lambda x: _complex_step_dT(spec, x)
        flo, fhi = f(lo), f(hi)
        if flo * fhi > 0:
            raise BracketError(f"no extremum of T bracketed in gap {n}")
        ED[n - 1] = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
    return VacuumSpectrum(params, cutoff, spec.even_edges, spec.odd_edges,
                          spec.zeros, _frozen(ED), spec.product_zeros)


def choose_cutoff(params: LatticeParams, start: int = 10, tol: float = 1e-8,
                  probes=None, max_cutoff: int = 80) -> VacuumSpectrum:
    """Double the cutoff until the gap-product ratio settles.

    The probe quantity is ``prod (E - E_Bn)/(E - E_An)`` at a few complex
    energies; the loop stops when it changes by less than ``tol``.
    """
    if probes is None:
        probes = np.array([-1 + 1j, 1 + 0.5j, 5 + 2j, 20 + 5j])
    L = start
    spec = characteristic_energies(params, L)
    prev = kernels.paired_product(probes, spec.odd_edges, spec.even_edges[1:])
    while L < max_cutoff:
        L *= 2
        spec = characteristic_energies(params, L)
        cur = kernels.paired_product(probes, spec.odd_edges, spec.even_edges[1:])
        if np.max(np.abs(cur - prev) / np.abs(cur)) < tol:
            return spec
        prev = cur
    return spec


# --------------------------------------------------------------------------
# Infinite products


def _tail_factor(V, L, w):
    """Second-order correction of the discriminant zeros beyond index L.

    The n-th zero sits at ``V/2 + x^2 - V^2 / (32 (x^2 - 1))`` with
    ``x = n - 1/2`` up to O(V^4 / x^6); the product of the remaining factors
    is summed with digamma functions.
    """
    if V == 0.0:
        return np.ones_like(w)
    def S(u):
        s = np.sqrt(u + 0j)
        small = np.abs(s) < 1e-7
        s = np.where(small, 1.0, s)
        val = (digamma(L + 0.5 + s) - digamma(L + 0.5 - s)) / (2 * s)
        return np.where(small, polygamma(1, L + 0.5), val)
    near = np.abs(w - 1.0) < 1e-6
    wl = np.where(near, 1.0 + 1e-6, w)
    tot = (S(wl) - S(np.ones_like(wl))) / (wl - 1.0)
    return np.exp(V * V / 32.0 * tot)


def product_T(spectrum: VacuumSpectrum, E):
    """Hill discriminant from its product over the zeros.

    ``T(E) = cos(pi sqrt(E - V/2)) prod_n (E - E_Cn) / (E - V/2 - (n-1/2)^2)``.
    Numerator and denominator are paired factor by factor; the factors beyond
    the explicit zeros use the asymptotic zero positions.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    E : complex or array_like

    Returns
    -------
    complex or ndarray
    """
    scalar = np.ndim(E) == 0
    E = np.atleast_1d(np.asarray(E, dtype=complex))
    V = spectrum.depth
    zc = spectrum.product_zeros
    x2 = (np.arange(1, len(zc) + 1) - 0.5) ** 2 + V / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        res = _bare_product(spectrum, E, x2)
    # a zero of the cosine meets a paired denominator: removable, average
    hit = np.min(np.abs(E[..., None] - x2), axis=-1) < 1e-12
    if np.any(hit):
        h = 1e-6
        res = np.where(hit, 0.5 * (_bare_product(spectrum, E - h, x2)
                                   + _bare_product(spectrum, E + h, x2)), res)
    res = res * _tail_factor(V, len(zc), E - V / 2)
    return complex(res[0]) if scalar else res


def _bare_product(spectrum, E, x2):
    V = spectrum.depth
    return np.cos(np.pi * np.sqrt(E - V / 2)) * kernels.paired_product(
        E, spectrum.product_zeros, x2)


def _as_complex(E):
    return np.ndim(E) == 0, np.asarray(E, dtype=complex)


def _ret(scalar, a):
    return complex(a) if scalar else a


def _open(spectrum):
    """Mask of gaps that are open; closed gaps contribute factors of one."""
    return spectrum.gap_widths > DEGENERATE_GAP * np.maximum(1.0, np.abs(spectrum.extrema))


def density_of_states(spectrum: VacuumSpectrum, E):
    """Density of Bloch states ``rho(E) = 2 dq/dE`` from its product form.

    Principal square root. Real and positive on bands, zero at ``E_Dn``
    and divergent at band edges.
    """
    scalar, E = _as_complex(E)
    g = _open(spectrum)
    num = np.repeat(spectrum.extrema[g], 2)
    den = np.ravel(np.column_stack([spectrum.even_edges[1:][g],
                                    spectrum.odd_edges[g]]))
    with np.errstate(divide="ignore", invalid="ignore"):
        X = kernels.paired_product(E, num, den) / (E - spectrum.even_edges[0])
    return _ret(scalar, np.sqrt(X))


def psi0_squared(spectrum: VacuumSpectrum, E):
    """``psi_q(E)(0)^2`` as the rational product (no branch)."""
    scalar, E = _as_complex(E)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = _open(spectrum)
        val = kernels.paired_product(E, spectrum.odd_edges[g],
                                     spectrum.extrema[g]) / math.pi
    return _ret(scalar, val)


def bloch_at_origin(spectrum: VacuumSpectrum, E):
    """Bloch wave at the emitter site, ``psi_q(E)(0)``.

    Principal square root of ``(1/pi) prod (E - E_Bn)/(E - E_Dn)``; real
    positive on band interiors, zero at odd edges, pole at ``E_Dn``.
    """
    scalar, E = _as_complex(E)
    return _ret(scalar, np.sqrt(psi0_squared(spectrum, E)))


def bloch_deriv_at_origin(spectrum: VacuumSpectrum, E):
    """Slope of the Bloch wave at the origin, ``psi'_q(E)(0)``.

    ``i sqrt((E - E_A0)/pi prod (E - E_An)/(E - E_Dn))`` with the principal
    root. The ratio to :func:`bloch_at_origin` for the outgoing wave is
    ``i / sqrt(Pi_B/A)`` on the physical sheet; see :func:`bloch_wave`.
    """
    scalar, E = _as_complex(E)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = _open(spectrum)
        X = (E - spectrum.even_edges[0]) / math.pi * kernels.paired_product(
            E, spectrum.even_edges[1:][g], spectrum.extrema[g])
    return _ret(scalar, 1j * np.sqrt(X))


# --------------------------------------------------------------------------
# Lattice momentum


def _q_real(spectrum, x):
    """Extended-zone q(x + i0) for real x."""
    edges = spectrum.sorted_edges
    j = int(np.argmin(np.abs(edges - x)))
    if abs(edges[j] - x) <= 1e-12 * max(1.0, abs(x)):
        # exactly on an edge: q is the integer index of that edge
        return complex((j + 1) // 2, 0)
    T = product_T(spectrum, complex(x)).real
    kind, n = spectrum.locate(x)
    if kind == "gap":
        kap = math.acosh(max(1.0, (-1) ** n * T)) / math.pi
        return complex(n, kap)
    if n <= spectrum.cutoff:
        s = (-1) ** (n - 1)
        return complex(n - 1 + math.acos(min(1.0, max(-1.0, s * T))) / math.pi, 0)
    # above the retained gaps: pick the band nearest to the free estimate
    qf = math.sqrt(max(x - spectrum.depth / 2, 0.0))
    best = None
    for m in (int(qf), int(qf) + 1, int(qf) + 2):
        if m < 1:
            continue
        s = (-1) ** (m - 1)
        qa = m - 1 + math.acos(min(1.0, max(-1.0, s * T))) / math.pi
        if best is None or abs(qa - qf) < abs(best - qf):
            best = qa
    return complex(best, 0)


def _floquet_inside(T):
    """Floquet multiplier with |lambda| <= 1 for each T."""
    r = np.sqrt(T * T - 1 + 0j)
    l1, l2 = T - r, T + r
    return np.where(np.abs(l1) <= np.abs(l2), l1, l2)


def _q_upper_half(spectrum, E):
    """q(E) for Im E > 0 by continuation of arg(lambda) from the real axis."""
    x, y = E.real, E.imag
    q0 = _q_real(spectrum, x)
    ys = np.unique(np.concatenate([np.geomspace(1e-9 * max(1.0, y), y, 120),
                                   np.linspace(0, y, 80)[1:]]))
    for _ in range(6):
        lam = _floquet_inside(product_T(spectrum, x + 1j * ys))
        ph = np.angle(lam)
        start = math.pi * q0.real
        dph = np.diff(np.concatenate([[start], ph]))
        dph = (dph + np.pi) % (2 * np.pi) - np.pi
        if np.max(np.abs(dph)) < 0.5:
            break
        ys = np.unique(np.concatenate([ys, 0.5 * (ys[1:] + ys[:-1])]))
    re = (start + np.sum(dph)) / math.pi
    im = -math.log(abs(lam[-1])) / math.pi
    return complex(re, im)


def lattice_momentum(spectrum: VacuumSpectrum, E, sheet: str = "upper"):
    """Extended-zone lattice momentum q(E) in units of k.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    E : complex or array_like
        Real inputs are read as the limit ``E + i0``.
    sheet : {'upper', 'lower'}
        Upper sheet has ``Im q >= 0`` (branch cuts on the band segments);
        the lower sheet returns the other Floquet root with ``Im q <= 0``.

    Returns
    -------
    complex or ndarray
        On band n, ``Re q`` lies in ``[n-1, n]``; in gap n, ``Re q = n``.

    Notes
    -----
    In the lower half-plane only ``exp(i pi q)`` is unambiguous; ``Re q``
    is reported modulo 2 by reflecting the value at ``conj(E)``.
    """
    if sheet not in ("upper", "lower"):
        raise ValueError("sheet must be 'upper' or 'lower'")
    scalar = np.ndim(E) == 0
    Ea = np.atleast_1d(np.asarray(E, dtype=complex))
    out = np.empty(Ea.shape, dtype=complex)
    for i, e in enumerate(Ea.flat):
        if e.imag == 0:
            q = _q_real(spectrum, e.real)
        elif e.imag > 0:
            q = _q_upper_half(spectrum, e)
        else:
            qc = _q_upper_half(spectrum, e.conjugate())
            q = -qc.conjugate() + 2 * round(qc.real)
        if sheet == "lower":
            q = -q + 2 * round(q.real)
        out.flat[i] = q
    return complex(out.flat[0]) if scalar else out


# --------------------------------------------------------------------------
# Plane-wave expansion


def _recurrence_solution(V, q, E, M):
    """Null vector c_n, n in [-M, M], of the truncated three-term recurrence.

    The pivot (most resonant index) is fixed to 1 and the two outer chains
    are solved as tridiagonal systems.
    """
    n = np.arange(-M, M + 1)
    d = (E - V / 2) - (q + 2 * n) ** 2
    p = int(np.argmin(np.abs(d)))
    c = np.zeros(2 * M + 1, dtype=complex)
    c[p] = 1.0
    if V == 0.0:
        return c, p
    u = V / 4
    # right chain: rows p+1..2M
    if p < 2 * M:
        k = 2 * M - p
        dr = d[p + 1:]
        rhs = np.zeros(k, dtype=complex)
        rhs[0] = -u
        c[p + 1:] = kernels.thomas_solve(np.full(k, u, complex), dr,
                                         np.full(k, u, complex), rhs)
    if p > 0:
        k = p
        dl = d[:p]
        rhs = np.zeros(k, dtype=complex)
        rhs[-1] = -u
        c[:p] = kernels.thomas_solve(np.full(k, u, complex), dl,
                                     np.full(k, u, complex), rhs)
    return c, p


def _window(V, q):
    return int(abs(q.real) / 2) + 12 + int(2 * math.sqrt(abs(V)))


def fourier_coeffs(spectrum: VacuumSpectrum, E, M: int | None = None,
                   q=None, tol: float = 1e-13) -> BlochCoefficients:
    """Plane-wave coefficients of the Bloch wave at complex energy.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    E : complex
    M : int, optional
        Initial half-width of the window; grown until the edge
        coefficients fall below ``tol`` relative to the largest one.
    q : complex, optional
        Override of the lattice momentum (default: upper-sheet q(E)).

    Returns
    -------
    BlochCoefficients
        ``upsilon_n = c_n / sum(c)``.

    Raises
    ------
    SingularEdgeError
        If ``sum(c)`` vanishes (odd band edge).
    """
    E = complex(E)
    V = spectrum.depth
    q = lattice_momentum(spectrum, E) if q is None else complex(q)
    M = M or _window(V, q)
    while True:
        c, p = _recurrence_solution(V, q, E, M)
        mx = np.max(np.abs(c))
        if max(abs(c[0]), abs(c[-1])) <= tol * mx or M > 4000:
            break
        M *= 2
    s = c.sum()
    if abs(s) < 1e-10 * np.linalg.norm(c):
        raise SingularEdgeError(f"plane-wave sum vanishes at E={E}")
    return BlochCoefficients(E, q, c / s)


def bloch_coefficients_q(V: float, q, M: int | None = None):
    """Per-cell normalized plane-wave coefficients of the Bloch wave at real q.

    Returns ``(E, n, c)`` with ``psi_q(z) = sum_n c_n exp(i(q + 2n)z)``,
    ``pi sum |c_n|^2 = 1`` and ``sum c_n >= 0``. Works at odd edges too.
    """
    q = float(q)
    M = M or (int(abs(q) / 2) + 14 + int(2 * math.sqrt(abs(V))))
    n = np.arange(-M, M + 1)
    band = max(1, int(math.ceil(abs(q) - 1e-12)))
    # the band containing |q| in the extended zone; reduced q picks the row
    E = hill_bands(V, q, band, size=M + band)[band - 1]
    c, _ = _recurrence_solution(V, q, complex(E), M)
    c = c / math.sqrt(math.pi * np.sum(np.abs(c) ** 2))
    s = c.sum()
    if abs(s) > 1e-14:
        c = c * (abs(s) / s)
    else:
        # odd edge: fix the phase on the largest coefficient
        j = int(np.argmax(np.abs(c)))
        c = c * (abs(c[j]) / c[j])
    return E, n, c


def bloch_wave(spectrum: VacuumSpectrum, E, z, sqrt_pi=None):
    """Outgoing Bloch wave psi_q(E)(z) at complex energy.

    ``psi(z) = psi(0) [C(E, z) + r S(E, z)]`` with ``psi(0)`` from the
    product formula and ``r = psi'(0)/psi(0) = i / sqrt(Pi_B/A(E))`` on the
    physical sheet. ``sqrt_pi`` may supply that root directly.
    """
    E = complex(E)
    if sqrt_pi is None:
        from .bath import GapProducts
        sqrt_pi = GapProducts(spectrum, min_gap=0.0).phys_sqrt(E)
    C, S = mathieu_cs(spectrum, E, z)
    return bloch_at_origin(spectrum, E) * (C + 1j / sqrt_pi * S)


# --------------------------------------------------------------------------
# Band energies and Franck-Condon overlaps


def band_energy(spectrum: VacuumSpectrum, n: int, q):
    """Band energy eps_n(q) by inverting the product discriminant.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    n : int
        Band index, ``1 <= n <= cutoff``.
    q : float or array_like
        Real momenta; only ``cos(pi q)`` enters.
    """
    lo, hi = spectrum.band(n)
    scalar = np.ndim(q) == 0
    target = np.cos(np.pi * np.atleast_1d(np.asarray(q, dtype=float)))
    a = np.full(target.shape, lo)
    b = np.full(target.shape, hi)
    # T runs from (-1)^(n-1) at the lower edge to (-1)^n at the upper one
    s = (-1.0) ** (n - 1)
    for _ in range(64):
        m = 0.5 * (a + b)
        f = s * (product_T(spectrum, m).real - target)
        a = np.where(f > 0, m, a)
        b = np.where(f > 0, b, m)
    out = 0.5 * (a + b)
    return float(out[0]) if scalar else out


def franck_condon(spectrum, a_ho: float, q):
    """Overlap gamma_q = <psi_q | phi_0> with the Gaussian emitter state.

    ``gamma_q = conj(psi_q(0)) (4 pi a^2)^(1/4) sum_n conj(upsilon_n)
    exp(-(q + 2n)^2 a^2 / 2)``, evaluated with per-cell normalized
    coefficients so that odd band edges are handled without division.

    Parameters
    ----------
    spectrum : VacuumSpectrum or LatticeParams
    a_ho : float
        Harmonic-oscillator length of the emitter, > 0.
    q : float or array_like
        Extended-zone momenta.
    """
    if a_ho <= 0:
        raise ValueError("a_ho must be positive")
    V = getattr(spectrum, "depth", None)
    if V is None:
        V = spectrum.params.depth
    scalar = np.ndim(q) == 0
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    pref = (4 * math.pi * a_ho ** 2) ** 0.25
    out = np.empty(qs.shape, dtype=complex)
    for i, qq in enumerate(qs.flat):
        _, n, c = bloch_coefficients_q(V, qq)
        out.flat[i] = pref * np.sum(np.conj(c) * np.exp(-(qq + 2 * n) ** 2
                                                         * a_ho ** 2 / 2))
    return complex(out.flat[0]) if scalar else out
