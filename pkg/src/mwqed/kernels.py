"""Backend selection for the hot numerical kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``MWQED_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("MWQED_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"

__all__ = ["BACKEND", "paired_product", "paired_logderiv", "thomas_solve",
           "tridiag_det"]


def _flat(E):
    E = np.asarray(E, dtype=complex)
    return E, np.ascontiguousarray(E.ravel())


def _real(a):
    return np.ascontiguousarray(np.asarray(a, dtype=float).ravel())


def paired_product(E, num, den, impl=None):
    """Return prod_k (E - num[k]) / (E - den[k]), shaped like ``E``."""
    impl = impl or _impl
    E, flat = _flat(E)
    return impl.paired_product(flat, _real(num), _real(den)).reshape(E.shape)


def paired_logderiv(E, num, den, impl=None):
    """Return sum_k [1/(E - num[k]) - 1/(E - den[k])], shaped like ``E``."""
    impl = impl or _impl
    E, flat = _flat(E)
    return impl.paired_logderiv(flat, _real(num), _real(den)).reshape(E.shape)


def _batch(a):
    a = np.asarray(a, dtype=complex)
    return np.ascontiguousarray(np.atleast_2d(a))


def thomas_solve(lower, diag, upper, rhs, impl=None):
    """Solve a batch of tridiagonal systems (last axis is the system)."""
    impl = impl or _impl
    squeeze = np.ndim(diag) == 1
    x = impl.thomas_solve(_batch(lower), _batch(diag), _batch(upper),
                          _batch(rhs))
    return x[0] if squeeze else x


def tridiag_det(lower, diag, upper, impl=None):
    """Determinants of a batch of tridiagonal matrices."""
    impl = impl or _impl
    squeeze = np.ndim(diag) == 1
    d = impl.tridiag_det(_batch(lower), _batch(diag), _batch(upper))
    return d[0] if squeeze else d
