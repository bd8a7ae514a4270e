# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the lattice products and tridiagonal algebra.

The pure-numpy twins live in ``_kernels_py``; both expose the same
signatures and are selected in ``mwqed.kernels``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def paired_product(const double complex[::1] E, const double[::1] num,
                   const double[::1] den):
    """prod_k (E - num[k]) / (E - den[k]) for every entry of ``E``."""
    cdef Py_ssize_t i, k, n = E.shape[0], m = num.shape[0]
    cdef double complex acc, e
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    for i in range(n):
        e = E[i]
        acc = 1.0
        for k in range(m):
            acc = acc * ((e - num[k]) / (e - den[k]))
        o[i] = acc
    return out


def paired_logderiv(const double complex[::1] E, const double[::1] num,
                    const double[::1] den):
    """sum_k 1/(E - num[k]) - 1/(E - den[k]) for every entry of ``E``."""
    cdef Py_ssize_t i, k, n = E.shape[0], m = num.shape[0]
    cdef double complex acc, e
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    for i in range(n):
        e = E[i]
        acc = 0.0
        for k in range(m):
            acc = acc + 1.0 / (e - num[k]) - 1.0 / (e - den[k])
        o[i] = acc
    return out


def thomas_solve(const double complex[:, ::1] lower,
                 const double complex[:, ::1] diag,
                 const double complex[:, ::1] upper,
                 const double complex[:, ::1] rhs):
    """Batched tridiagonal solve without pivoting.

    Row ``b`` holds one system; ``lower[b, i]`` couples row i to i-1 and
    ``upper[b, i]`` couples row i to i+1 (first/last entries unused).
    """
    cdef Py_ssize_t nb = diag.shape[0], n = diag.shape[1], b, i
    cdef double complex w
    out = np.empty((nb, n), dtype=np.complex128)
    cp = np.empty(n, dtype=np.complex128)
    cdef double complex[:, ::1] x = out
    cdef double complex[::1] c = cp
    for b in range(nb):
        c[0] = upper[b, 0] / diag[b, 0]
        x[b, 0] = rhs[b, 0] / diag[b, 0]
        for i in range(1, n):
            w = diag[b, i] - lower[b, i] * c[i - 1]
            c[i] = upper[b, i] / w
            x[b, i] = (rhs[b, i] - lower[b, i] * x[b, i - 1]) / w
        for i in range(n - 2, -1, -1):
            x[b, i] = x[b, i] - c[i] * x[b, i + 1]
    return out


def tridiag_det(const double complex[:, ::1] lower,
                const double complex[:, ::1] diag,
                const double complex[:, ::1] upper):
    """Batched determinant by the three-term continuant recurrence."""
    cdef Py_ssize_t nb = diag.shape[0], n = diag.shape[1], b, i
    cdef double complex f0, f1, f2
    out = np.empty(nb, dtype=np.complex128)
    cdef double complex[::1] o = out
    for b in range(nb):
        f0 = 1.0
        f1 = diag[b, 0]
        for i in range(1, n):
            f2 = diag[b, i] * f1 - lower[b, i] * upper[b, i - 1] * f0
            f0 = f1
            f1 = f2
        o[b] = f1
    return out
