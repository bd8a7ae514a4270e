"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def paired_product(E, num, den):
    """prod_k (E - num[k]) / (E - den[k]) for every entry of ``E``."""
    E = np.asarray(E, dtype=complex)
    acc = np.ones_like(E)
    for a, b in zip(num, den):
        acc *= (E - a) / (E - b)
    return acc


def paired_logderiv(E, num, den):
    """sum_k 1/(E - num[k]) - 1/(E - den[k]) for every entry of ``E``."""
    E = np.asarray(E, dtype=complex)
    acc = np.zeros_like(E)
    for a, b in zip(num, den):
        acc += 1.0 / (E - a) - 1.0 / (E - b)
    return acc


def thomas_solve(lower, diag, upper, rhs):
    """Batched tridiagonal solve without pivoting (rows are systems)."""
    lower, diag, upper, rhs = (np.asarray(a, dtype=complex)
                               for a in (lower, diag, upper, rhs))
    n = diag.shape[1]
    c = np.empty_like(diag)
    x = np.empty_like(rhs)
    c[:, 0] = upper[:, 0] / diag[:, 0]
    x[:, 0] = rhs[:, 0] / diag[:, 0]
    for i in range(1, n):
        w = diag[:, i] - lower[:, i] * c[:, i - 1]
        c[:, i] = upper[:, i] / w
        x[:, i] = (rhs[:, i] - lower[:, i] * x[:, i - 1]) / w
    for i in range(n - 2, -1, -1):
        x[:, i] -= c[:, i] * x[:, i + 1]
    return x


def tridiag_det(lower, diag, upper):
    """Batched determinant by the three-term continuant recurrence."""
    lower, diag, upper = (np.asarray(a, dtype=complex)
                          for a in (lower, diag, upper))
    f0 = np.ones(diag.shape[0], dtype=complex)
    f1 = diag[:, 0].copy()
    for i in range(1, diag.shape[1]):
        f0, f1 = f1, diag[:, i] * f1 - lower[:, i] * upper[:, i - 1] * f0
    return f1
