"""Data builders for the command line and the figure presets.

Every builder returns a list of written paths. Files are CSV with a
``#``-prefixed header (preset, parameters, package version, tolerances);
rows use a fixed float format so reruns are byte-identical.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import math
import os
import warnings

import numpy as np

from . import __version__
from .bath import EmitterArray, GapProducts, a_ho_from_depth, rabi_for_kappa
from .boundstates import (appendix_integrand, bs_momentum_distribution,
                          bs_spatial_profile, find_bound_states)
from .dynamics import (amplitude_evolution, emitted_modes, eom_oracle,
                       resolvent_dynamics_N)
from .polaritons import (band_center_offset, engineered_detuning_bands,
                         hopping_rates, photon_window, polariton_bands,
                         polariton_dynamics)
from .spectrum import phase_maps, physical_poles, pole_polynomial_roots
from .vacuum import (LatticeParams, characteristic_energies, density_of_states,
                     hill_bands, lattice_momentum, product_T)

__all__ = ["PRESETS", "write_csv", "run_figure", "vacuum_dump", "spectrum_map",
           "decay_run", "boundstate_run", "polariton_run"]

PRESETS = ("fig2", "fig3b", "fig3c", "fig4a", "fig4b", "fig4c", "fig5a", "fig5b",
           "fig5d", "fig6", "fig-bs")

# parameters shared by the fig3* and fig4* presets
V_A, V_B, KAPPA, DELTA_4B = 20.0, 2.5, 0.082, 1.32


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == 0.0:
        return "0"  # no signed zeros
    return format(x, ".12g") if math.isfinite(x) else ("nan" if x != x else ("inf" if x > 0 else "-inf"))


def write_csv(path, header: dict, columns, rows) -> str:
    """Write ``rows`` (2-D) under a ``#`` header; returns ``path``."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [f"# mwqed {__version__}"]
    for k in sorted(header):
        v = header[k]
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(_fmt(x) if not isinstance(x, str) else x for x in v)
        elif isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool):
            v = _fmt(v)
        lines.append(f"# {k}: {v}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _pmap(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))  # order preserved
    return [fn(x) for x in items]


def _spec(V, cutoff=10):
    return characteristic_energies(LatticeParams(V), cutoff)


# --------------------------------------------------------------------------
# vacuum


def vacuum_dump(out, V=V_B, cutoff=10, E_grid=None, name="vacuum.csv", extra=None):
    """T(E), q(E), rho(E) on the real axis plus the characteristic energies."""
    sp = _spec(V, cutoff)
    E = np.linspace(-5, 30, 701) if E_grid is None else np.asarray(E_grid, float)
    T = product_T(sp, E)
    q = lattice_momentum(sp, E)
    rho = density_of_states(sp, E)
    asym = np.cos(np.pi * np.sqrt(E - V / 2 + 0j)).real
    hdr = {"depth_b": V, "cutoff": cutoff, "units": "E in E_r, q in k, rho in k/E_r"}
    hdr.update(extra or {})
    rows = np.column_stack([E, T.real, T.imag, q.real, q.imag, rho.real, rho.imag, asym])
    p1 = write_csv(os.path.join(out, name), hdr,
                   ["E", "re_T", "im_T", "re_q", "im_q", "re_rho", "im_rho", "cos_asymptote"], rows)
    tab = [("A", 0, sp.even_edges[0])]
    for n in range(1, sp.cutoff + 1):
        tab += [("A", n, sp.even_edges[n]), ("B", n, sp.odd_edges[n - 1]),
                ("C", n, sp.zeros[n - 1]), ("D", n, sp.extrema[n - 1])]
    path = os.path.join(out, name.replace(".csv", "_energies.csv"))
    os.makedirs(out, exist_ok=True)
    lines = [f"# mwqed {__version__}", f"# depth_b: {_fmt(V)}", f"# cutoff: {cutoff}",
             "label,n,energy"] + [f"E_{l}{n},{n},{_fmt(e)}" for l, n, e in tab]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return [p1, path]


# --------------------------------------------------------------------------
# spectrum


def spectrum_map(out, V=V_B, V_a=V_A, detunings=None, rabis=None, threads=1,
                 name="phase_map.csv", extra=None):
    """Bound-state and Markov residue maps on a (Delta, Omega) grid."""
    sp = _spec(V)
    gp = GapProducts(sp)
    a = a_ho_from_depth(V_a)
    D = np.linspace(-1.0, 8.0, 46) if detunings is None else np.asarray(detunings, float)
    R = np.linspace(0.1, 4.0, 40) if rabis is None else np.asarray(rabis, float)
    # contiguous row blocks of >= 2 couplings, reassembled in order
    blocks = np.array_split(R, max(1, min(threads, R.size // 2)))
    maps = _pmap(lambda r: phase_maps(sp, a, D, r, gp), blocks, threads)
    rows = []
    for blk, pm in zip(blocks, maps):
        for i, r in enumerate(blk):
            for j, d in enumerate(D):
                rows.append([d, r, pm.bound_sum[i, j], pm.markov_norm[i, j],
                             pm.n_bound[i, j], int(pm.markov_upper[i, j])])
    hdr = {"depth_a": V_a, "depth_b": V, "a_ho": a,
           "E_B": sp.odd_edges[:5], "grid": f"{D.size} detunings x {R.size} couplings"}
    hdr.update(extra or {})
    return [write_csv(os.path.join(out, name), hdr,
                      ["detuning", "rabi", "bound_sum", "markov_norm", "n_bound", "markov_upper"],
                      rows)]


# --------------------------------------------------------------------------
# decay


def _bound_fraction(gp, delta, kappa):
    roots = pole_polynomial_roots(gp, delta, kappa)
    upper, _ = physical_poles(gp, delta, kappa, roots)
    return float(sum(abs(p.residue) ** 2 for p in upper if p.kind == "bound-state"))


def decay_run(out, cfg, name="decay.csv", extra=None, mode_name="modes.csv"):
    """Population traces for a finite or infinite array (config driven)."""
    sp = _spec(cfg.depth_b, cfg.cutoff)
    t = np.linspace(0, cfg.t_max, cfg.n_t)
    arr = cfg.emitters()
    hdr = dict(cfg.echo())
    hdr.update(extra or {})
    files = []
    if cfg.polariton:
        bands = polariton_bands(sp, arr, np.linspace(-1, 1, cfg.n_q if cfg.n_q % 2 else cfg.n_q + 1),
                                mode=cfg.mode)
        tr = polariton_dynamics(bands, arr, t)
        sites = tr.metadata["positions"]
        keep = np.abs(sites) <= 5
        cols = ["t"] + [f"A{j}_sq" for j in sites[keep]] + ["emitted"]
        P = np.abs(tr.amplitudes[:, keep]) ** 2
        emitted = 1.0 - tr.emitter_norm
        hdr["route"] = tr.metadata["route"]
        files.append(write_csv(os.path.join(out, name), hdr, cols,
                               np.column_stack([t, P, emitted])))
        return files
    gp = GapProducts(sp)
    if cfg.oracle:
        tr = eom_oracle(sp, arr, t, mode=cfg.mode)
    elif arr.n_sites == 1 and cfg.mode == "tight":
        tr = amplitude_evolution(gp, sp, cfg.detuning, cfg.kappa, t)
    else:
        if cfg.mode != "tight":
            raise ValueError("the finite-N resolvent route is tight-binding only; use --oracle")
        tr = resolvent_dynamics_N(sp, arr, t, gp)
    P = tr.populations
    cols = ["t"] + [f"A{j}_sq" for j in arr.positions] + ["emitted"]
    hdr["route"] = tr.metadata.get("route", "")
    files.append(write_csv(os.path.join(out, name), hdr, cols,
                           np.column_stack([t, P, 1.0 - P.sum(axis=1)])))
    if cfg.mode_time is not None and arr.n_sites == 1:
        q = np.linspace(-cfg.q_max, cfg.q_max, 2 * int(cfg.n_q) + 1)
        B = emitted_modes(gp, sp, arr, q, cfg.mode_time)[0]
        hdr2 = dict(hdr, mode_time=cfg.mode_time)
        files.append(write_csv(os.path.join(out, mode_name), hdr2, ["q", "B_sq"],
                               np.column_stack([q, np.abs(B) ** 2])))
    return files


# --------------------------------------------------------------------------
# bound states


def boundstate_run(out, cfg, name="boundstate", extra=None):
    """Bound-state profile and momentum distribution for every gap state
    (or only ``cfg.gap``)."""
    sp = _spec(cfg.depth_b, cfg.cutoff)
    gp = GapProducts(sp)
    arr = EmitterArray.chain(1, cfg.a_ho, cfg.rabi, cfg.detuning)
    states = find_bound_states(sp, arr, gp, mode=cfg.mode)
    if cfg.gap is not None:
        states = [s for s in states if s.gap_index == cfg.gap]
        if not states:
            raise ValueError(f"no bound state in gap {cfg.gap}")
    z = np.linspace(-cfg.z_max, cfg.z_max, cfg.n_z) * math.pi
    q = np.linspace(-cfg.q_max, cfg.q_max, 2 * int(cfg.n_q) + 1)
    files = []
    summary = []
    for s in states:
        B = bs_spatial_profile(sp, arr, s.energy, z, A0=s.norm_A0, products=gp)
        Bq = bs_momentum_distribution(sp, arr, s.energy, q, A0=s.norm_A0, mode=cfg.mode)
        hdr = dict(cfg.echo(), energy=s.energy, gap_index=s.gap_index, norm_A0=s.norm_A0,
                   decay_rate=s.decay_length_inv, carrier=s.carrier_wavenumber)
        hdr.update(extra or {})
        files.append(write_csv(os.path.join(out, f"{name}_gap{s.gap_index}_profile.csv"), hdr,
                               ["z_cells", "re_B", "im_B", "B_sq"],
                               np.column_stack([z / math.pi, B.real, B.imag, np.abs(B) ** 2])))
        files.append(write_csv(os.path.join(out, f"{name}_gap{s.gap_index}_momentum.csv"), hdr,
                               ["q", "B_sq"], np.column_stack([q, Bq])))
        summary.append([s.gap_index, s.energy, s.norm_A0 ** 2, s.decay_length_inv,
                        s.carrier_wavenumber])
    files.append(write_csv(os.path.join(out, f"{name}_states.csv"), dict(cfg.echo()),
                           ["gap", "energy", "A0_sq", "decay_rate", "carrier"], summary))
    return files


# --------------------------------------------------------------------------
# polaritons


def polariton_run(out, cfg, n_show=6, j_max=8, name="polariton", extra=None):
    """Polariton bands, residues and hopping rates on ``[-1, 1]``."""
    sp = _spec(cfg.depth_b, cfg.cutoff)
    arr = EmitterArray(None, cfg.a_ho, cfg.rabi, cfg.detuning)
    nq = cfg.n_q if cfg.n_q % 2 else cfg.n_q + 1
    b = polariton_bands(sp, arr, np.linspace(-1, 1, nq), mode=cfg.mode)
    return _write_bands(out, b, dict(cfg.echo(), **(extra or {})), n_show, j_max, name)


def _write_bands(out, b, hdr, n_show, j_max, name):
    n = min(n_show, b.band_count)
    cols = ["q", "detuning"] + [f"E{k + 1}" for k in range(n)] + [f"r{k + 1}" for k in range(n)] \
        + [f"eps{k + 1}" for k in range(n)]
    rows = np.column_stack([b.q_grid, b.detuning_fn, b.energies[:, :n], b.residues[:, :n],
                            b.photon_energies[:, :n]])
    f1 = write_csv(os.path.join(out, f"{name}_bands.csv"), hdr, cols, rows)
    J = np.array([np.real_if_close(hopping_rates(b, k + 1, j_max)) for k in range(min(n, 3))])
    rows2 = np.column_stack([np.arange(j_max + 1)] + [np.real(J[k]) for k in range(J.shape[0])])
    f2 = write_csv(os.path.join(out, f"{name}_hopping.csv"), hdr,
                   ["j"] + [f"J_band{k + 1}" for k in range(J.shape[0])], rows2)
    return [f1, f2]


# --------------------------------------------------------------------------
# presets


def _fig4_arr(n, delta=DELTA_4B, kappa=KAPPA):
    a = a_ho_from_depth(V_A)
    if n == math.inf:
        return EmitterArray(None, a, rabi_for_kappa(kappa, a), delta)
    return EmitterArray.chain(n, a, rabi_for_kappa(kappa, a), delta)


def _fig2(out, threads):
    return vacuum_dump(out, V_B, 10, name="fig2.csv",
                       extra={"preset": "fig2", "source": "T(E) example lattice"})


def _fig3(out, threads, which):
    files = spectrum_map(out, V_B, V_A, threads=threads, name=f"{which}.csv",
                         extra={"preset": which, "tolerance_root_residual": 1e-10})
    return files


def _fig4a(out, threads):
    sp = _spec(V_B)
    gp = GapProducts(sp)
    D = np.linspace(-1.0, 6.0, 71)
    t = np.linspace(0, 10, 101)

    def one(d):
        tr = amplitude_evolution(gp, sp, d, KAPPA, t)
        return np.abs(tr.amplitudes[:, 0]) ** 2, _bound_fraction(gp, d, KAPPA)

    res = _pmap(one, list(D), threads)
    rows = []
    for d, (P, bf) in zip(D, res):
        rows += [[d, ti, p] for ti, p in zip(t, P)]
        rows.append([d, math.inf, bf])
    gaps = [sp.gap(n) for n in range(1, 4)]
    hdr = {"preset": "fig4a", "depth_a": V_A, "depth_b": V_B, "kappa": KAPPA,
           "gaps": [x for g in gaps for x in g], "E_A0": sp.even_edges[0],
           "note": "t = inf rows hold the bound fraction sum |alpha|^2"}
    return [write_csv(os.path.join(out, "fig4a.csv"), hdr, ["detuning", "t", "A_sq"], rows)]


def _fig4b(out, threads):
    sp = _spec(V_B)
    gp = GapProducts(sp)
    t = np.linspace(0, 10, 101)
    tr1 = amplitude_evolution(gp, sp, DELTA_4B, KAPPA, t)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr3 = resolvent_dynamics_N(sp, _fig4_arr(3), t, gp)
    arr_inf = _fig4_arr(math.inf)
    trI = polariton_dynamics(polariton_bands(sp, arr_inf, mode="tight"), arr_inf, t)
    j0 = int(np.flatnonzero(trI.metadata["positions"] == 0)[0])
    hdr = {"preset": "fig4b", "depth_a": V_A, "depth_b": V_B, "kappa": KAPPA,
           "detuning": DELTA_4B, "routes": [tr1.metadata["route"], tr3.metadata["route"],
                                            trI.metadata["route"]]}
    rows = np.column_stack([t, np.abs(tr1.amplitudes[:, 0]) ** 2,
                            np.abs(tr3.amplitudes[:, 1]) ** 2, np.abs(trI.amplitudes[:, j0]) ** 2])
    return [write_csv(os.path.join(out, "fig4b.csv"), hdr, ["t", "N1", "N3", "Ninf"], rows)]


def _fig4c(out, threads):
    tau = 9.24
    files = []
    for V, kap in ((2.5, 0.015), (0.0, 0.032), (-2.6, 0.015)):
        sp = _spec(V)
        gp = GapProducts(sp)
        # emitter tuned to the centre of the first band
        delta = 0.5 * (sp.even_edges[0] + sp.band(1)[1])
        arr = _fig4_arr(1, delta, kap)
        q = np.linspace(-3, 3, 601)
        B = emitted_modes(gp, sp, arr, q, tau)[0]
        hdr = {"preset": "fig4c", "depth_b": V, "kappa": kap, "tau": tau, "detuning": delta,
               "detuning_rule": "centre of the first band"}
        files.append(write_csv(os.path.join(out, f"fig4c_V{_fmt(V)}.csv"), hdr, ["q", "B_sq"],
                               np.column_stack([q, np.abs(B) ** 2])))
    return files


def _fig5a(out, threads):
    sp = _spec(V_B)
    arr = _fig4_arr(math.inf)
    q0 = -2.3
    eps, w = photon_window(V_B, q0, arr.a_ho, arr.rabi, 24)
    E = np.linspace(-1, 30, 3101)
    with np.errstate(divide="ignore"):
        g = np.array([np.sum(w / (eps - e)) for e in E])
    g[np.min(np.abs(eps[None, :] - E[:, None]), axis=1) < 1e-9] = np.nan
    b = polariton_bands(sp, arr, np.array([q0]))
    hdr = {"preset": "fig5a", "q": q0, "depth_b": V_B, "kappa": KAPPA, "detuning": DELTA_4B,
           "curves": "left = E - detuning, right = -sum w/(eps - E)",
           "roots": b.energies[0, :8]}
    f1 = write_csv(os.path.join(out, "fig5a.csv"), hdr, ["E", "left", "right"],
                   np.column_stack([E, E - DELTA_4B, -g]))
    f2 = write_csv(os.path.join(out, "fig5a_roots.csv"), hdr, ["n", "E", "r"],
                   np.column_stack([np.arange(1, 9), b.energies[0, :8], b.residues[0, :8]]))
    return [f1, f2]


def _fig5b(out, threads):
    sp = _spec(V_B)
    arr = _fig4_arr(math.inf)
    b = polariton_bands(sp, arr)
    hdr = {"preset": "fig5b", "depth_b": V_B, "kappa": KAPPA, "detuning": DELTA_4B}
    return _write_bands(out, b, hdr, 6, 8, "fig5b")


def _fig5d(out, threads):
    spa, spb = _spec(12.0), _spec(-0.4949)
    off = band_center_offset(spb, spa, 2, 1, 0.0742)
    b = engineered_detuning_bands(spb, spa, 2, 0.626, off)
    hdr = {"preset": "fig5d", "depth_a": 12.0, "depth_b": -0.4949, "rabi": 0.626,
           "centre_detuning": 0.0742, "offset": off, "band_a": 2,
           "centre_rule": "mid-point of each band's energy range"}
    q = b.q_grid
    ea = np.array([hill_bands(12.0, x, 2)[1] for x in q])
    files = _write_bands(out, b, hdr, 4, 8, "fig5d")
    files.append(write_csv(os.path.join(out, "fig5d_emitter_band.csv"), hdr, ["q", "eps_a2"],
                           np.column_stack([q, ea])))
    return files


def _fig6(out, threads):
    sp = _spec(4.0)
    # even point counts keep the grid off the pole at E0 and off Im E = 0
    re = np.linspace(-2, 8, 100)
    im = np.linspace(-4, 4, 80)
    E = (re[None, :] + 1j * im[:, None]).ravel()
    f = appendix_integrand(sp, 0.5, 0.7, 1 + 2j, E)
    hdr = {"preset": "fig6", "depth_b": 4.0, "z1": 0.5, "z2": 0.7, "E0": "1+2i", "j": 0, "J": 0}
    return [write_csv(os.path.join(out, "fig6.csv"), hdr, ["re_E", "im_E", "re_f", "im_f"],
                      np.column_stack([E.real, E.imag, f.real, f.imag]))]


def _figbs(out, threads):
    sp = _spec(V_B)
    files = []
    # one state per gap below, in, and above the first band pair
    targets = {0: sp.even_edges[0] - 0.5, 1: sum(sp.gap(1)) / 2, 2: sum(sp.gap(2)) / 2}
    E = np.linspace(-1, 10, 1101)
    q = lattice_momentum(sp, E)
    files.append(write_csv(os.path.join(out, "figbs_q.csv"), {"preset": "fig-bs", "depth_b": V_B},
                           ["E", "re_q", "im_q"], np.column_stack([E, q.real, q.imag])))
    from .config import ScenarioConfig
    for g, d in targets.items():
        cfg = ScenarioConfig(depth_a=V_A, depth_b=V_B, kappa=KAPPA,
                             rabi=rabi_for_kappa(KAPPA, a_ho_from_depth(V_A)), detuning=d,
                             a_ho=a_ho_from_depth(V_A), gap=g, z_max=6.0, n_z=601)
        files += boundstate_run(out, cfg, name=f"figbs_D{g}", extra={"preset": "fig-bs"})
    return files


_RUNNERS = {"fig2": _fig2, "fig3b": lambda o, t: _fig3(o, t, "fig3b"),
            "fig3c": lambda o, t: _fig3(o, t, "fig3c"), "fig4a": _fig4a, "fig4b": _fig4b,
            "fig4c": _fig4c, "fig5a": _fig5a, "fig5b": _fig5b, "fig5d": _fig5d, "fig6": _fig6,
            "fig-bs": _figbs}


def run_figure(preset: str, out: str = "out", threads: int = 1) -> list[str]:
    """Write the data files of one figure preset into ``out``."""
    if preset not in _RUNNERS:
        raise KeyError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    return _RUNNERS[preset](out, threads)
