import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mwqed import _kernels_py, kernels

try:
    from mwqed import _kernels as _cy
except ImportError:  # extension not built
    _cy = None

finite = st.floats(-50, 50, allow_nan=False)
BACKENDS = [_kernels_py] + ([_cy] if _cy is not None else [])


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("impl", BACKENDS)
def test_paired_product_matches_direct(impl):
    E = np.array([0.3 + 0.1j, -2.0, 7.5 - 3j])
    num, den = np.array([1.0, 4.0, 9.0]), np.array([1.5, 3.0, 8.0])
    ref = np.prod((E[:, None] - num) / (E[:, None] - den), axis=1)
    assert np.allclose(kernels.paired_product(E, num, den, impl=impl), ref, rtol=1e-14)
    dl = np.sum(1 / (E[:, None] - num) - 1 / (E[:, None] - den), axis=1)
    assert np.allclose(kernels.paired_logderiv(E, num, den, impl=impl), dl, rtol=1e-14)


@pytest.mark.parametrize("impl", BACKENDS)
def test_thomas_and_determinant_match_dense(impl):
    rng = np.random.default_rng(3)
    n = 7
    lo, up = rng.normal(size=n) + 0j, rng.normal(size=n) + 0j
    d = rng.normal(size=n) + 4 + 1j
    lo[0] = up[-1] = 0
    A = np.diag(d) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.allclose(kernels.thomas_solve(lo, d, up, b, impl=impl), np.linalg.solve(A, b))
    assert np.isclose(kernels.tridiag_det(lo, d, up, impl=impl), np.linalg.det(A))


@pytest.mark.skipif(_cy is None, reason="compiled kernels not built")
@settings(max_examples=60, deadline=None)
@given(E_re=arrays(float, 5, elements=finite), E_im=arrays(float, 5, elements=finite),
       num=arrays(float, 4, elements=finite), den=arrays(float, 4, elements=finite))
def test_backends_agree(E_re, E_im, num, den):
    E = E_re + 1j * E_im
    with np.errstate(all="ignore"):
        a = kernels.paired_product(E, num, den, impl=_cy)
        b = kernels.paired_product(E, num, den, impl=_kernels_py)
    ok = np.isfinite(a) & np.isfinite(b)
    assert np.allclose(a[ok], b[ok], rtol=1e-12, atol=0)
