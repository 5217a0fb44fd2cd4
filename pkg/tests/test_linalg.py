import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gorp.errors import NumericInputError, ShapeError
from gorp.linalg import frobenius_norm_sq, matmul, orthonormalize, thin_svd


def naive_matmul(a, b):
    out = [[0.0] * len(b[0]) for _ in a]
    for i in range(len(a)):
        for j in range(len(b[0])):
            for k in range(len(b)):
                out[i][j] += a[i][k] * b[k][j]
    return out


def test_matmul_identity():
    a = [[1.0, 2.0], [3.0, 4.0]]
    np.testing.assert_array_equal(matmul(a, np.eye(2)), a)


def test_matmul_against_triple_loop():
    a, b = [[1.0, 2.0], [3.0, 4.0]], [[5.0], [6.0]]
    assert naive_matmul(a, b) == [[17.0], [39.0]]
    np.testing.assert_array_equal(matmul(a, b), naive_matmul(a, b))


def test_matmul_zero():
    a = np.random.default_rng(0).normal(size=(3, 4))
    np.testing.assert_array_equal(matmul(a, np.zeros((4, 2))), np.zeros((3, 2)))


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match="2x3.*2x2"):
        matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_frobenius():
    assert frobenius_norm_sq([[3.0, 4.0]]) == 25.0
    assert frobenius_norm_sq(np.zeros((3, 3))) == 0.0
    assert frobenius_norm_sq(np.eye(5)) == 5.0


def check_svd(a, res):
    p = min(a.shape)
    s = res.singular_values
    assert res.U.shape == (a.shape[0], p) and res.Vt.shape == (p, a.shape[1])
    assert np.all(s >= 0) and np.all(np.diff(s) <= 0)
    assert np.max(np.abs(res.U.T @ res.U - np.eye(p))) <= 1e-10
    assert np.max(np.abs(res.Vt @ res.Vt.T - np.eye(p))) <= 1e-10
    scale = max(np.linalg.norm(a), 1e-300)
    assert np.linalg.norm(res.reconstruct() - a) / scale <= 1e-8


def test_svd_diagonal():
    res = thin_svd(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(res.singular_values, [3.0, 2.0], atol=1e-14)


def test_svd_rank_one_matches_gram_eigenvalues():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    oracle = np.sqrt(np.clip(np.sort(np.linalg.eigvalsh(m.T @ m))[::-1], 0, None))
    np.testing.assert_allclose(oracle, [2.0, 0.0], atol=1e-12)
    res = thin_svd(m)
    np.testing.assert_allclose(res.singular_values, oracle, atol=1e-12)
    check_svd(m, res)


def test_svd_random_reconstruction():
    a = np.random.default_rng(5).normal(size=(5, 3))
    check_svd(a, thin_svd(a))


@pytest.mark.parametrize("shape", [(1, 1), (1, 7), (7, 1), (6, 6), (9, 4), (4, 9), (33, 17)])
def test_svd_shapes_and_lapack_agreement(shape):
    a = np.random.default_rng(sum(shape)).normal(size=shape)
    res = thin_svd(a)
    check_svd(a, res)
    np.testing.assert_allclose(res.singular_values, np.linalg.svd(a, compute_uv=False), rtol=1e-10, atol=1e-12)


def test_svd_rank_deficient_still_orthonormal():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(20, 3)) @ rng.normal(size=(3, 12))
    res = thin_svd(a)
    check_svd(a, res)
    assert np.all(res.singular_values[3:] < 1e-10 * res.singular_values[0])


def test_svd_zero_matrix():
    res = thin_svd(np.zeros((4, 3)))
    check_svd(np.zeros((4, 3)), res)
    np.testing.assert_array_equal(res.singular_values, 0.0)


def test_svd_sign_convention_and_determinism():
    a = np.random.default_rng(2).normal(size=(8, 5))
    r1, r2 = thin_svd(a), thin_svd(a)
    np.testing.assert_array_equal(r1.U, r2.U)
    np.testing.assert_array_equal(r1.Vt, r2.Vt)
    for j in range(r1.U.shape[1]):
        col = r1.U[:, j]
        assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0


def test_svd_rejects_non_finite():
    with pytest.raises(NumericInputError):
        thin_svd([[1.0, np.nan]])
    with pytest.raises(NumericInputError):
        thin_svd([[np.inf]])


def test_orthonormalize_drops_dependent_column():
    e1, e2 = np.eye(3)[:, 0], np.eye(3)[:, 1]
    basis = orthonormalize(np.column_stack([e1, 2 * e1, e2]), 1e-10)
    np.testing.assert_allclose(basis, np.column_stack([e1, e2]), atol=1e-15)


def test_orthonormalize_random_full_rank():
    b = orthonormalize(np.random.default_rng(3).normal(size=(8, 4)), 1e-10)
    assert b.shape == (8, 4)
    assert np.max(np.abs(b.T @ b - np.eye(4))) <= 1e-10


def test_orthonormalize_empty():
    assert orthonormalize(np.zeros((5, 0)), 1e-10).shape == (5, 0)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
dims = st.integers(1, 6)


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_matmul_associative(data):
    m, k, l, n = (data.draw(dims) for _ in range(4))
    a = data.draw(arrays(np.float64, (m, k), elements=finite))
    b = data.draw(arrays(np.float64, (k, l), elements=finite))
    c = data.draw(arrays(np.float64, (l, n), elements=finite))
    left, right = matmul(matmul(a, b), c), matmul(a, matmul(b, c))
    # rounding of both groupings is bounded by the product of magnitudes
    bound = np.abs(a) @ np.abs(b) @ np.abs(c)
    assert np.all(np.abs(left - right) <= 1e-9 * np.maximum(bound, 1e-300) + 1e-300)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=finite))
def test_svd_invariants_property(a):
    res = thin_svd(a)
    check_svd(a, res)
    total = frobenius_norm_sq(a)
    assert abs(total - float(np.sum(res.singular_values**2))) <= 1e-8 * max(total, 1e-300)
