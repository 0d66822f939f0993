import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anderson_fp.linalg import (
    EUCLIDEAN,
    InnerProduct,
    SingularMatrixError,
    TridiagonalMatrix,
    back_substitute,
    economy_qr,
    least_squares,
    thomas_solve,
)


def _spd(rng, n):
    B = rng.standard_normal((n, n))
    return B @ B.T + n * np.eye(n)


@pytest.mark.parametrize("weighted", [False, True])
def test_qr_reconstructs_and_is_orthonormal(weighted):
    rng = np.random.default_rng(3)
    F = rng.standard_normal((7, 4))
    ip = InnerProduct(_spd(rng, 7)) if weighted else EUCLIDEAN
    Q, R, kept = economy_qr(F, ip)
    assert kept == [0, 1, 2, 3]
    gram = Q.T @ ip.apply(Q)
    assert np.allclose(gram, np.eye(4), atol=1e-13)
    assert np.allclose(Q @ R, F, atol=1e-13)
    assert np.allclose(R, np.triu(R))


def test_qr_drops_dependent_column():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    F = np.column_stack([a, b, 2.0 * a - b, rng.standard_normal(5)])
    Q, R, kept = economy_qr(F)
    assert kept == [0, 1, 3]
    assert Q.shape == (5, 3)


def test_qr_empty_and_zero_columns():
    Q, R, kept = economy_qr(np.zeros((4, 2)))
    assert kept == [] and Q.shape == (4, 0) and R.shape == (0, 0)


def test_qr_reorthogonalizes_nearly_parallel_columns():
    a = np.array([1.0, 0.0, 0.0, 0.0])
    F = np.column_stack([a, a + 1e-7 * np.array([0.0, 1.0, 1.0, 0.0])])
    Q, R, kept = economy_qr(F)
    assert kept == [0, 1]
    assert abs(Q[:, 0] @ Q[:, 1]) < 1e-15


def test_least_squares_matches_lstsq():
    rng = np.random.default_rng(1)
    F = rng.standard_normal((6, 3))
    w = rng.standard_normal(6)
    Q, R, _ = economy_qr(F)
    x, rn = least_squares(Q, R, w)
    ref, *_ = np.linalg.lstsq(F, w, rcond=None)
    assert np.allclose(x, ref, atol=1e-12)
    assert rn == pytest.approx(np.linalg.norm(w - F @ ref), rel=1e-12)


def test_least_squares_exact_fit_residual_is_tiny():
    rng = np.random.default_rng(2)
    F = rng.standard_normal((5, 2))
    w = F @ np.array([0.3, -1.2])
    Q, R, _ = economy_qr(F)
    _, rn = least_squares(Q, R, w)
    assert rn < 1e-14


def test_back_substitute_zero_diagonal():
    with pytest.raises(SingularMatrixError):
        back_substitute(np.array([[1.0, 2.0], [0.0, 0.0]]), np.ones(2))


def test_tridiagonal_matvec_and_dense():
    T = TridiagonalMatrix(np.array([1.0, 2.0]), np.array([4.0, 5.0, 6.0]), np.array([-1.0, 3.0]))
    v = np.array([1.0, -2.0, 0.5])
    assert np.allclose(T.matvec(v), T.to_dense() @ v)
    V = np.column_stack([v, 2 * v])
    assert np.allclose(T.matvec(V), T.to_dense() @ V)


def test_tridiagonal_rejects_bad_bands():
    with pytest.raises(ValueError):
        TridiagonalMatrix(np.ones(1), np.ones(3), np.ones(2))


def test_thomas_singular():
    T = TridiagonalMatrix(np.array([1.0]), np.array([1.0, 1.0]), np.array([1.0]))
    with pytest.raises(SingularMatrixError):
        thomas_solve(T, np.ones(2))


def test_thomas_rhs_shape():
    T = TridiagonalMatrix(np.zeros(1), np.ones(2), np.zeros(1))
    with pytest.raises(ValueError):
        thomas_solve(T, np.ones(3))


def test_inner_product_forms_agree():
    rng = np.random.default_rng(4)
    W = _spd(rng, 4)
    u, v = rng.standard_normal(4), rng.standard_normal(4)
    dense = InnerProduct(W)
    op = InnerProduct(lambda x: W @ x)
    assert dense.dot(u, v) == pytest.approx(u @ W @ v)
    assert op.norm(u) == pytest.approx(np.sqrt(u @ W @ u))
    with pytest.raises(ValueError):
        InnerProduct(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 8), p=st.integers(1, 4), seed=st.integers(0, 10**6))
def test_qr_invariants_property(n, p, seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((n, p))
    Q, R, kept = economy_qr(F)
    r = len(kept)
    assert r <= min(n, p)
    assert np.allclose(Q.T @ Q, np.eye(r), atol=1e-12)
    assert np.all(np.diag(R) > 0)
    # kept columns are reproduced
    assert np.allclose(Q @ R, F[:, kept], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 10**6))
def test_thomas_matches_dense_property(n, seed):
    rng = np.random.default_rng(seed)
    sub, sup = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    diag = np.abs(rng.standard_normal(n)) + 3.0  # diagonally dominant
    T = TridiagonalMatrix(sub, diag, sup)
    b = rng.standard_normal(n)
    assert np.allclose(thomas_solve(T, b), np.linalg.solve(T.to_dense(), b), atol=1e-12)
