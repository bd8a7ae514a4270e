"""Time the compiled kernels against the numpy fallback.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Both backends
are called through :mod:`mwqed.kernels` with an explicit ``impl`` on the
same inputs; the script also reports their largest relative disagreement.
"""
import argparse
import timeit

import numpy as np

from mwqed import _kernels_py, kernels

try:
    from mwqed import _kernels as _cy
except ImportError:
    _cy = None


def _cases(rng):
    # gap products: many energies against ~20 edge pairs (a spectrum with cutoff 10)
    E = rng.uniform(-5, 400, 20000) + 1j * rng.uniform(-3, 3, 20000)
    num = np.sort(rng.uniform(0, 400, 20))
    den = np.sort(rng.uniform(0, 400, 20))
    # tridiagonal batches: finite arrays of 31 sites at 2000 energies
    n, b = 31, 2000
    lo = rng.normal(size=(b, n)) + 1j * rng.normal(size=(b, n))
    up = rng.normal(size=(b, n)) + 1j * rng.normal(size=(b, n))
    d = rng.normal(size=(b, n)) + 6 + 1j * rng.normal(size=(b, n))
    lo[:, 0] = up[:, -1] = 0
    rhs = rng.normal(size=(b, n)) + 0j
    # quadrature integrands evaluate one energy per call
    Es = E[:2000]

    def scalar_calls(impl):
        return np.array([kernels.paired_product(e, num, den, impl=impl) for e in Es])

    return {
        "scalar x2000": scalar_calls,
        "paired_product": lambda impl: kernels.paired_product(E, num, den, impl=impl),
        "paired_logderiv": lambda impl: kernels.paired_logderiv(E, num, den, impl=impl),
        "thomas_solve": lambda impl: kernels.thomas_solve(lo, d, up, rhs, impl=impl),
        "tridiag_det": lambda impl: kernels.tridiag_det(lo, d, up, impl=impl),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    cases = _cases(np.random.default_rng(0))
    impls = [("python", _kernels_py)] + ([("cython", _cy)] if _cy is not None else [])
    print(f"selected backend: {kernels.BACKEND}")
    print(f"{'kernel':<18}" + "".join(f"{name + ' [ms]':>14}" for name, _ in impls)
          + f"{'speed-up':>10}{'max rel diff':>14}")
    for label, fn in cases.items():
        times, outs = [], []
        for _, impl in impls:
            outs.append(fn(impl))
            t = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
            times.append(1e3 * t)
        row = f"{label:<18}" + "".join(f"{t:>14.3f}" for t in times)
        if len(impls) == 2:
            a, b = outs
            diff = np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300))
            row += f"{times[0] / times[1]:>10.1f}{diff:>14.2e}"
        print(row)
    if _cy is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
