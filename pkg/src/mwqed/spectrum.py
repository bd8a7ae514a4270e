"""Resolvent poles of a single emitter and their Riemann-sheet bookkeeping.

The single-emitter resolvent ``1 / (E - Delta + i kappa sqrt(Pi_B/A(E)))``
has its poles among the zeros of ``(E - Delta)^2 Pi_A(E) + kappa^2 Pi_B(E)``.
Only the zeros that also solve the unsquared equation on the physical sheet
contribute to the dynamics; the others belong to the unphysical sheet.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .bath import GapProducts, coupling_kappa, EmitterArray
from .vacuum import VacuumSpectrum

__all__ = ["SheetPole", "PhaseMap", "OnCutError", "pole_polynomial_roots",
           "sheet_classify", "residue_alpha", "weak_coupling_estimates",
           "physical_poles", "phase_maps"]

#: distance (E_r) below which a complex root counts as sitting on an edge ray
CUT_TOL = 1e-10
#: roots with |Im E| below this fraction of max(1, |E|) are snapped to the axis
REAL_TOL = 1e-11


class OnCutError(ValueError):
    """A pole sits on a branch cut; its contribution is ill defined."""


@dataclass(frozen=True)
class SheetPole:
    """A resolvent pole tagged with its sheet and residue.

    Attributes
    ----------
    energy : complex
    sheet : {'upper', 'lower'}
        'upper' is the physical sheet.
    kind : {'bound-state', 'Markovian', 'conjugate', 'in-gap'}
        Real physical poles are bound states and real unphysical ones are
        'in-gap'. Complex poles below the axis are 'Markovian' on either
        sheet, and their partners above the axis are 'conjugate'.
    residue : complex
        ``alpha(E)``.
    gap_index : int or None
        Gap hosting a real pole (0 is the region below E_A0).
    double : bool
        True when the pole is (numerically) confluent with another root.
    """

    energy: complex
    sheet: str
    kind: str
    residue: complex
    gap_index: int | None = None
    double: bool = False

    @property
    def physical(self) -> bool:
        return self.sheet == "upper"


def _newton(products: GapProducts, delta, kappa, E, steps=30, found=()):
    """Polish a root of ``(E - Delta)^2 (E - E_Ak) + kappa^2 Pi (E - E_Ak)``.

    Multiplying by the nearest pole factor keeps Newton away from it.
    Roots already in ``found`` are deflated (Maehly) so that nearly double
    roots do not collapse onto one. The polished value is kept only if it
    lowers the deflated residual.
    """
    a, b = products.a_edges, products.b_edges
    k = int(np.argmin(np.abs(a - E)))
    others = np.delete(a, k)
    k2 = kappa * kappa
    found = np.asarray(found, dtype=complex)

    def fd(E):
        R = np.prod(E - b) / np.prod(E - others)
        dR = R * (np.sum(1 / (E - b)) - np.sum(1 / (E - others)))
        x = E - delta
        f = x * x * (E - a[k]) + k2 * R
        return f, 2 * x * (E - a[k]) + x * x + k2 * dR

    def defl(E):
        d = E - found
        if np.any(d == 0):
            return math.inf, 0.0
        return np.prod(d), np.sum(1 / d)

    f0, _ = fd(E)
    p0, _ = defl(E)
    best, fbest = E, abs(f0 / p0)
    for _ in range(steps):
        f, df = fd(E)
        _, s = defl(E)
        den = df - f * s
        if den == 0 or not np.isfinite(den):
            break
        step = f / den
        E = E - step
        fa, _ = fd(E)
        pa, _ = defl(E)
        r = abs(fa / pa)
        if r < fbest:
            best, fbest = E, r
        if abs(step) <= 1e-15 * max(1.0, abs(E)):
            break
    return complex(best)


def pole_polynomial_roots(products: GapProducts, delta: float, kappa: float):
    """All zeros of ``(E - Delta)^2 Pi_A(E) + kappa^2 Pi_B(E)``.

    The rational form ``(E - Delta)^2 + kappa^2 sum_n c_n / (E - E_An)``
    (``c_n`` are the residues of ``Pi_B/A``) is linearized into an arrowhead
    matrix whose eigenvalues are the roots; each is then Newton-polished.

    Returns
    -------
    ndarray of complex
        ``len(products.a_edges) + 2`` roots sorted by real part.
    """
    a = products.a_edges
    c = products.residues()
    n = len(a)
    if kappa == 0:
        return np.sort_complex(np.concatenate([[delta, delta], a]).astype(complex))
    M = np.zeros((n + 2, n + 2))
    M[0, 0] = delta
    M[0, 1] = 1.0
    M[1, 1] = delta
    M[1, 2:] = -1.0
    M[2:, 0] = kappa ** 2 * c
    M[2:, 2:] = np.diag(a)
    roots = _split_clusters(products, delta, kappa, np.linalg.eigvals(M))
    out = []
    for r in roots:
        r = _newton(products, delta, kappa, complex(r), found=out)
        if abs(r.imag) < REAL_TOL * max(1.0, abs(r)):
            r = complex(r.real, 0.0)
        out.append(r)
    return np.sort_complex(np.array(out))


def _split_clusters(products, delta, kappa, roots, tol=1e-6):
    """Re-seed eigenvalue pairs that sit on a near-double root.

    Newton started at the midpoint of two close roots (where the derivative
    vanishes) jumps far away; ``m +- sqrt(-2 F / F'')`` of
    ``F = (E - Delta)^2 + kappa^2 Pi_B/A`` starts on either side instead.
    """
    roots = np.array(roots, dtype=complex)
    done = np.zeros(len(roots), dtype=bool)
    for i in range(len(roots)):
        if done[i]:
            continue
        d = np.abs(roots - roots[i])
        d[i] = np.inf
        d[done] = np.inf
        j = int(np.argmin(d))
        if d[j] < tol * max(1.0, abs(roots[i])):
            m = 0.5 * (roots[i] + roots[j])
            h = 1e-5 * max(1.0, abs(m))
            with np.errstate(all="ignore"):
                F = (m - delta) ** 2 + kappa ** 2 * complex(products.ratio(m))
                d2 = 2 + kappa ** 2 * complex(products.dratio(m + h) - products.dratio(m - h)) / (2 * h)
                w = np.sqrt(complex(-2 * F / d2))
            if np.isfinite(w) and w != 0:
                roots[i], roots[j] = m + w, m - w
            done[i] = done[j] = True
    return roots


def residue_alpha(products: GapProducts, delta: float, kappa: float, E):
    """Residue ``alpha(E) = 2(E - Delta) / (2(E - Delta) + kappa^2 dPi/dE)``."""
    E = complex(E)
    x = 2 * (E - delta)
    with np.errstate(all="ignore"):
        a = x / (x + kappa ** 2 * complex(products.dratio(E)))
    # a root numerically on top of an A edge: dPi/dE diverges there
    return a if np.isfinite(a) else 0j


def _gap_index(products: GapProducts, x: float):
    spec = products.spectrum
    kind, n = spec.locate(x)
    return n if kind == "gap" else None


def sheet_classify(root, products: GapProducts, delta: float, kappa: float,
                   ) -> SheetPole:
    """Decide on which sheet a polynomial root lives and attach its residue.

    A root is physical when ``E - Delta + i kappa sqrt(Pi)`` vanishes with the
    physical-sheet root (:meth:`GapProducts.phys_sqrt`) rather than with its
    negative.

    Raises
    ------
    OnCutError
        For a complex root within ``CUT_TOL`` of a vertical edge ray.
    """
    E = complex(root)
    scale = max(1.0, abs(E))
    if E.imag < 0 and np.min(np.abs(products.edges - E.real)) < CUT_TOL:
        raise OnCutError(f"pole {E:.6g} lies on the branch cut of an edge")
    if E.imag > 0:
        return SheetPole(E, "lower", "conjugate",
                         residue_alpha(products, delta, kappa, E))
    with np.errstate(all="ignore"):
        s = products.phys_sqrt(E)
        # the root solves the squared equation, so exactly one sign of the
        # root vanishes; comparing both survives roots pressed onto an edge
        phys = bool(abs(E - delta + 1j * kappa * s)
                    < abs(E - delta - 1j * kappa * s))
    alpha = residue_alpha(products, delta, kappa, E)
    with np.errstate(all="ignore"):
        denom = 2 * (E - delta) + kappa ** 2 * complex(products.dratio(E))
    double = bool(abs(denom) < 1e-7 * scale)
    if E.imag == 0:
        kind = "bound-state" if phys else "in-gap"
        gap = _gap_index(products, E.real)
        if phys and gap is None:
            # a physical real pole inside a band would be a bound state in
            # the continuum; it cannot occur for a single emitter
            kind = "in-gap"
        return SheetPole(E, "upper" if phys else "lower", kind, alpha, gap,
                         double)
    return SheetPole(E, "upper" if phys else "lower", "Markovian", alpha, None,
                     double)


def physical_poles(products: GapProducts, delta: float, kappa: float,
                   roots=None):
    """Classified poles; returns ``(upper, all)`` lists of :class:`SheetPole`."""
    if roots is None:
        roots = pole_polynomial_roots(products, delta, kappa)
    allp = [sheet_classify(r, products, delta, kappa) for r in roots]
    return [p for p in allp if p.physical], allp


def weak_coupling_estimates(products: GapProducts, delta: float, kappa: float):
    """Perturbative pole positions for small ``kappa``.

    Returns
    -------
    in_gap : ndarray
        ``E_An - kappa^2 Pi_B(E_An) / [(E_An - Delta)^2 prod_{m != n}
        (E_An - E_Am)]`` for every retained A edge.
    pair : ndarray, shape (2,)
        ``Delta - i kappa sqrt(Pi(Delta))`` and its conjugate.
    """
    a = products.a_edges
    c = products.residues()
    with np.errstate(divide="ignore"):
        in_gap = a - kappa ** 2 * c / (a - delta) ** 2
    s = complex(products.upper_real(np.array([float(delta)]))[0])
    pair = np.array([delta - 1j * kappa * s, delta + 1j * kappa * np.conj(s)])
    return in_gap, pair


@dataclass
class PhaseMap:
    """Bound-state and Markovian residue maps on a (Delta, Omega) grid.

    ``bound_sum[i, j]`` and friends are indexed by ``(rabi[i], detuning[j])``.
    ``markov_upper`` is False where no Markovian pole sits on the physical
    sheet; ``markov_norm`` is then 0.
    """

    detunings: np.ndarray
    rabis: np.ndarray
    bound_sum: np.ndarray
    markov_norm: np.ndarray
    n_bound: np.ndarray
    markov_upper: np.ndarray
    errors: list = field(default_factory=list)


def _markov(upper):
    cands = [p for p in upper if p.kind == "Markovian"]
    if not cands:
        return None
    return max(cands, key=lambda p: abs(p.residue))


def phase_maps(spectrum: VacuumSpectrum, a_ho: float, detunings, rabis,
               products: GapProducts | None = None) -> PhaseMap:
    """Residue maps of the bound-state and Markovian poles.

    Parameters
    ----------
    spectrum : VacuumSpectrum
    a_ho : float
        Emitter confinement, sets ``kappa`` from each ``hbar Omega``.
    detunings, rabis : array_like
        Grid axes (E_r).
    """
    if products is None:
        products = GapProducts(spectrum)
    dets = np.asarray(detunings, dtype=float)
    rabs = np.asarray(rabis, dtype=float)
    if dets.size < 2 or rabs.size < 2:
        raise ValueError("phase maps need at least a 2x2 grid")
    shape = (rabs.size, dets.size)
    bound = np.zeros(shape)
    markov = np.zeros(shape)
    nb = np.zeros(shape, dtype=int)
    mup = np.zeros(shape, dtype=bool)
    errors = []
    for i, om in enumerate(rabs):
        kap = coupling_kappa(EmitterArray(None, a_ho, om, 0.0))
        for j, dl in enumerate(dets):
            try:
                upper, _ = physical_poles(products, dl, kap)
            except OnCutError as exc:
                errors.append((i, j, str(exc)))
                bound[i, j] = markov[i, j] = math.nan
                continue
            bs = [p for p in upper if p.kind == "bound-state"]
            bound[i, j] = sum(abs(p.residue) ** 2 for p in bs)
            nb[i, j] = len(bs)
            m = _markov(upper)
            if m is not None:
                markov[i, j] = abs(m.residue) ** 2
                mup[i, j] = True
    return PhaseMap(dets, rabs, bound, markov, nb, mup, errors)
