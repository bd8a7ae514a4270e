"""Command-line front end: ``mwqed <command> ...``.

Exit codes: 0 success, 1 validation failure or runtime error, 2 input error
(bad config, unknown preset, invalid arguments).
"""
from __future__ import annotations

import argparse
from dataclasses import replace
import json
import math
import sys

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .figures import (PRESETS, boundstate_run, decay_run, polariton_run, run_figure,
                      spectrum_map, vacuum_dump)
from .validation import run_suite

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

_SUB_PRESETS = {"decay": ("fig4a", "fig4b", "fig4c"), "boundstate": ("fig-bs",),
                "polariton": ("fig5a", "fig5b", "fig5d")}


class InputError(Exception):
    """User input that cannot be acted on (exit code 2)."""


def _common(p, figure=None):
    p.add_argument("--config", metavar="FILE", help="scenario file ([lattice], [emitters], [run])")
    p.add_argument("--out", metavar="DIR", help="output directory (default: config run.out or ./out)")
    p.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for sweeps")
    p.add_argument("--tol", metavar="X", help="tolerance override, echoed in output headers")
    if figure:
        p.add_argument("--figure", choices=figure, help="run a figure preset instead of a config")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwqed",
                                 description="Matter-wave emitters in optical lattices.")
    ap.add_argument("--version", action="version", version=f"mwqed {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    vac = sub.add_parser("vacuum", help="vacuum lattice diagnostics")
    vsub = vac.add_subparsers(dest="action", required=True)
    d = vsub.add_parser("dump", help="T(E), q(E), rho(E) and characteristic energies")
    _common(d)
    d.add_argument("--depth", type=float, help="vacuum lattice depth V_b (E_r)")
    d.add_argument("--cutoff", type=int, help="band cutoff")

    spc = sub.add_parser("spectrum", help="pole structure of the single-emitter resolvent")
    ssub = spc.add_subparsers(dest="action", required=True)
    m = ssub.add_parser("map", help="bound-state and Markov residue maps over (Delta, Omega)")
    _common(m)
    m.add_argument("--detuning", type=float, nargs=3, metavar=("LO", "HI", "N"),
                   help="detuning grid (E_r)")
    m.add_argument("--rabi", type=float, nargs=3, metavar=("LO", "HI", "N"),
                   help="Rabi frequency grid (E_r)")

    for name, hlp in (("decay", "emitter populations in time"),
                      ("boundstate", "bound-state profiles"),
                      ("polariton", "polariton bands and hopping rates")):
        p = sub.add_parser(name, help=hlp)
        _common(p, _SUB_PRESETS[name])
        if name == "decay":
            p.add_argument("--oracle", action="store_true",
                           help="force the equations-of-motion route")

    f = sub.add_parser("figure", help="write the data of a figure preset")
    f.add_argument("preset", help=f"one of {', '.join(PRESETS)}")
    _common(f)

    v = sub.add_parser("validate", help="oracle-equivalence and invariant suites")
    v.add_argument("suite", nargs="?", default="fast", choices=("fast", "full"))
    v.add_argument("--tol", action="append", default=[], metavar="X|NAME=X",
                   help="replace every tolerance with X, or one check's with NAME=X")
    v.add_argument("--report", metavar="FILE", help="also write the JSON report here")
    return ap


def _config(args, required=True) -> ScenarioConfig | None:
    if args.config:
        try:
            return load_config(args.config)
        except OSError as exc:
            raise InputError(f"cannot read config: {exc}") from None
    if required:
        raise InputError("--config FILE is required (or use --figure)")
    return None


def _out(args, cfg) -> str:
    return args.out or (cfg.out if cfg is not None else "out")


def _tol_header(args) -> dict:
    return {"tol": args.tol} if getattr(args, "tol", None) else {}


def _parse_tols(items) -> dict:
    tols = {}
    for item in items:
        name, _, val = item.rpartition("=")
        try:
            x = float(val)
        except ValueError:
            raise InputError(f"bad --tol value {item!r}") from None
        if not math.isfinite(x) or x < 0:
            raise InputError(f"bad --tol value {item!r}")
        tols[name or "*"] = x
    return tols


def _grid(spec):
    if spec is None:
        return None
    import numpy as np
    lo, hi, n = spec
    if n < 2 or n != int(n):
        raise InputError("grid needs an integer N >= 2")
    return np.linspace(lo, hi, int(n))


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "validate":
        report = run_suite(args.suite, _parse_tols(args.tol))
        text = json.dumps(report, indent=2)
        print(text)
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return EXIT_OK if report["ok"] else EXIT_FAIL

    if cmd == "figure":
        if args.preset not in PRESETS:
            raise InputError(f"unknown preset {args.preset!r}; choose from {', '.join(PRESETS)}")
        files = run_figure(args.preset, args.out or "out", args.threads)
    elif getattr(args, "figure", None):
        files = run_figure(args.figure, args.out or "out", args.threads)
    elif cmd == "vacuum":
        cfg = _config(args, required=False)
        depth = args.depth if args.depth is not None else (cfg.depth_b if cfg else 2.5)
        cutoff = args.cutoff if args.cutoff is not None else (cfg.cutoff if cfg else 10)
        if cutoff < 1:
            raise InputError("--cutoff must be at least 1")
        files = vacuum_dump(_out(args, cfg), depth, cutoff, extra=_tol_header(args))
    elif cmd == "spectrum":
        cfg = _config(args, required=False)
        kw = dict(detunings=_grid(args.detuning), rabis=_grid(args.rabi),
                  threads=args.threads, extra=_tol_header(args))
        if cfg:
            kw.update(V=cfg.depth_b, V_a=cfg.depth_a)
        files = spectrum_map(_out(args, cfg), **kw)
    else:
        cfg = _config(args)
        if cmd == "decay" and args.oracle:
            cfg = replace(cfg, oracle=True)
        runner = {"decay": decay_run, "boundstate": boundstate_run,
                  "polariton": polariton_run}[cmd]
        files = runner(_out(args, cfg), cfg, extra=_tol_header(args))
    for path in files:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for bad usage
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        where = f" (line {exc.line}, column {exc.column})" if exc.line else ""
        field = f" [{exc.field}]" if exc.field else ""
        print(f"mwqed: config error{field}{where}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, KeyError) as exc:
        print(f"mwqed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # module errors propagate as a failed run
        print(f"mwqed: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
