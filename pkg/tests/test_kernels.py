import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tame_ldjt import _kernels_py, kernels

try:
    from tame_ldjt import _kernels_c
except ImportError:
    _kernels_c = None

BACKENDS = [_kernels_py] + ([_kernels_c] if _kernels_c is not None else [])
ids = [b.BACKEND for b in BACKENDS]


def strides(shape):
    out = [1] * len(shape)
    for i in range(len(shape) - 2, -1, -1):
        out[i] = out[i + 1] * shape[i + 1]
    return out


@st.composite
def product_case(draw):
    n = draw(st.integers(1, 4))
    shape = draw(st.lists(st.integers(1, 3), min_size=n, max_size=n))
    in_a = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    in_b = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    axes_a = [i for i in range(n) if in_a[i]]
    axes_b = [i for i in range(n) if in_b[i]]
    a = draw(arrays(np.float64, int(np.prod([shape[i] for i in axes_a])), elements=st.floats(0, 10)))
    b = draw(arrays(np.float64, int(np.prod([shape[i] for i in axes_b])), elements=st.floats(0, 10)))
    return shape, axes_a, axes_b, a, b


def placed(shape, axes):
    own = dict(zip(axes, strides([shape[i] for i in axes])))
    return [own.get(i, 0) for i in range(len(shape))]


@pytest.mark.parametrize("k", BACKENDS, ids=ids)
@given(product_case())
def test_product_matches_broadcasting(k, case):
    shape, axes_a, axes_b, a, b = case
    got = k.product(a, b, shape, placed(shape, axes_a), placed(shape, axes_b))
    ta = a.reshape([shape[i] if i in axes_a else 1 for i in range(len(shape))])
    tb = b.reshape([shape[i] if i in axes_b else 1 for i in range(len(shape))])
    want = np.broadcast_to(ta * tb, shape)
    np.testing.assert_allclose(got, want.ravel(), rtol=1e-12, atol=0)


@pytest.mark.parametrize("k", BACKENDS, ids=ids)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=4), st.data())
def test_sum_out_and_take(k, shape, data):
    a = data.draw(arrays(np.float64, int(np.prod(shape)), elements=st.floats(0, 10)))
    axis = data.draw(st.integers(0, len(shape) - 1))
    index = data.draw(st.integers(0, shape[axis] - 1))
    t = a.reshape(shape)
    np.testing.assert_allclose(k.sum_out(a, shape, axis), t.sum(axis=axis).ravel(), rtol=1e-12)
    np.testing.assert_array_equal(k.take(a, shape, axis, index), np.take(t, index, axis=axis).ravel())



@pytest.mark.parametrize("k", BACKENDS, ids=ids)
@given(st.data())
def test_rsim_kernels_agree_with_formula(k, data):
    n = data.draw(st.integers(1, 8))
    m = data.draw(st.integers(1, 6))
    v = data.draw(arrays(np.float64, (m, n), elements=st.floats(0.01, 100)))
    mat = k.rsim_matrix(np.ascontiguousarray(v))
    for i in range(m):
        for j in range(m):
            cos = float(v[i] @ v[j]) / (np.linalg.norm(v[i]) * np.linalg.norm(v[j]))
            assert mat[i, j] == pytest.approx(min(max(1 - cos, 0.0), 1.0), abs=1e-12)
            assert k.rsim(v[i], v[j]) == pytest.approx(mat[i, j], abs=1e-12)


@pytest.mark.parametrize("k", BACKENDS, ids=ids)
def test_rsim_zero_vector(k):
    with pytest.raises(ZeroDivisionError):
        k.rsim(np.zeros(2), np.ones(2))
    with pytest.raises(ZeroDivisionError):
        k.rsim_matrix(np.array([[1.0, 2.0], [0.0, 0.0]]))


@pytest.mark.parametrize("k", BACKENDS, ids=ids)
def test_weighted_mean(k):
    v = np.array([[2.0, 1.0], [3.9, 1.9], [8.1, 4.0]])
    w = np.array([2.0, 5.0, 1.0])
    np.testing.assert_allclose(k.weighted_mean(v, w), [3.95, 1.9375], rtol=1e-14)


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
@given(st.data())
def test_backends_agree(data):
    n = data.draw(st.integers(1, 6))
    m = data.draw(st.integers(1, 5))
    v = np.ascontiguousarray(data.draw(arrays(np.float64, (m, n), elements=st.floats(0.01, 100))))
    np.testing.assert_allclose(_kernels_c.rsim_matrix(v), _kernels_py.rsim_matrix(v), atol=1e-12)
    w = np.arange(1.0, m + 1)
    np.testing.assert_allclose(_kernels_c.weighted_mean(v, w), _kernels_py.weighted_mean(v, w), rtol=1e-12)


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    forced = os.environ.get("TAME_LDJT_PURE_PYTHON", "") not in ("", "0")
    if forced:
        assert kernels.BACKEND == "python"
    elif _kernels_c is not None:
        assert kernels.BACKEND == "cython"
