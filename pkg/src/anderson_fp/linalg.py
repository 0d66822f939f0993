"""Small dense linear algebra used by the mixing step and the 1D FEM problem.

Vectors and matrices are plain numpy arrays; a matrix with columns
``F[:, j]`` plays the role of the dense column-major matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

# loss of orthogonality that triggers a second Gram-Schmidt pass
REORTH_TOL = 1e-8


class SingularMatrixError(ArithmeticError):
    """Raised when elimination meets a (numerically) zero pivot."""


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Tridiagonal matrix stored by diagonals.

    ``sub[i]`` is entry (i+1, i), ``sup[i]`` is entry (i, i+1).
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray

    def __post_init__(self):
        n = len(self.diag)
        if n < 1 or len(self.sub) != n - 1 or len(self.sup) != n - 1:
            raise ValueError("tridiagonal bands must have lengths n-1, n, n-1")

    @property
    def n(self) -> int:
        return len(self.diag)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """Product with a vector, or column-wise with an (n, p) array."""
        v = np.asarray(v, dtype=float)
        out = self.diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        if self.n > 1:
            sub = self.sub.reshape((-1,) + (1,) * (v.ndim - 1))
            sup = self.sup.reshape((-1,) + (1,) * (v.ndim - 1))
            out[1:] += sub * v[:-1]
            out[:-1] += sup * v[1:]
        return out

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        if self.n > 1:
            a += np.diag(self.sub, -1) + np.diag(self.sup, 1)
        return a


class InnerProduct:
    """Symmetric positive-definite bilinear form ``(u, v) = u^T W v``.

    ``weight`` may be ``None`` (Euclidean), a dense SPD array, a
    :class:`TridiagonalMatrix`, or a callable applying ``W``.
    """

    def __init__(self, weight=None, name: str | None = None):
        self.weight = weight
        if weight is None:
            self._apply = None
            self.name = name or "euclidean"
        elif isinstance(weight, TridiagonalMatrix):
            self._apply = weight.matvec
            self.name = name or "tridiagonal"
        elif callable(weight):
            self._apply = weight
            self.name = name or "operator"
        else:
            w = np.asarray(weight, dtype=float)
            if w.ndim != 2 or w.shape[0] != w.shape[1]:
                raise ValueError("dense weight must be square")
            if not np.allclose(w, w.T, rtol=1e-12, atol=0.0):
                raise ValueError("weight matrix must be symmetric")
            self.weight = w
            self._apply = w.__matmul__
            self.name = name or "dense"

    @property
    def is_euclidean(self) -> bool:
        return self._apply is None

    def apply(self, v: np.ndarray) -> np.ndarray:
        if self._apply is None:
            return np.asarray(v, dtype=float)
        return np.asarray(self._apply(v), dtype=float)

    def dot(self, u: np.ndarray, v: np.ndarray) -> float:
        if self._apply is None:
            return float(np.dot(u, v))
        return float(np.dot(u, self.apply(v)))

    def norm(self, v: np.ndarray) -> float:
        if self._apply is None:
            return float(np.linalg.norm(v))
        return float(np.sqrt(max(self.dot(v, v), 0.0)))

    def project_coefficients(self, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        """``Q^T W v`` for an (n, p) array ``q``."""
        if q.shape[1] == 0:
            return np.zeros(0)
        return q.T @ self.apply(v)

    def __repr__(self):
        return f"InnerProduct({self.name})"


EUCLIDEAN = InnerProduct()


def economy_qr(F, inner_product: InnerProduct = EUCLIDEAN, rank_drop_tol: float = 1e-10):
    """Economy QR of ``F`` by modified Gram-Schmidt in a weighted inner product.

    A column whose norm after orthogonalization falls to ``rank_drop_tol``
    times its original norm (or below) is discarded.

    Returns
    -------
    Q : (n, r) array, columns orthonormal in ``inner_product``
    R : (r, r) upper triangular array
    kept : list of the r column indices of ``F`` that were retained
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    n, p = F.shape
    qs: list[np.ndarray] = []
    rcols: list[np.ndarray] = []
    kept: list[int] = []
    for j in range(p):
        v = F[:, j].copy()
        pre = inner_product.norm(v)
        if pre == 0.0 or not np.isfinite(pre):
            continue
        coef = np.zeros(len(qs))
        for i, q in enumerate(qs):
            r = inner_product.dot(q, v)
            v -= r * q
            coef[i] += r
        post = inner_product.norm(v)
        if qs and post > 0.0:
            loss = max(abs(inner_product.dot(q, v)) for q in qs) / post
            if loss > REORTH_TOL:
                for i, q in enumerate(qs):
                    r = inner_product.dot(q, v)
                    v -= r * q
                    coef[i] += r
                post = inner_product.norm(v)
        if post <= rank_drop_tol * pre:
            continue
        qs.append(v / post)
        rcols.append(np.append(coef, post))
        kept.append(j)
    r = len(qs)
    Q = np.column_stack(qs) if qs else np.zeros((n, 0))
    R = np.zeros((r, r))
    for j, col in enumerate(rcols):
        R[: j + 1, j] = col
    return Q, R, kept


def back_substitute(R: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Solve ``R x = c`` for upper-triangular ``R``."""
    r = R.shape[0]
    x = np.zeros(r)
    for i in range(r - 1, -1, -1):
        if R[i, i] == 0.0:
            raise SingularMatrixError(f"zero diagonal in R at {i}")
        x[i] = (c[i] - R[i, i + 1 :] @ x[i + 1 :]) / R[i, i]
    return x


def least_squares(Q: np.ndarray, R: np.ndarray, w: np.ndarray,
                  inner_product: InnerProduct = EUCLIDEAN):
    """Minimize ``||w - (QR) x||`` given an economy QR.

    The residual norm is taken from the explicit residual vector
    ``w - Q Q^T W w`` rather than from ``||w||^2 - ||Q^T W w||^2``, which
    cancels catastrophically when ``w`` is nearly in the range.

    Returns ``(coefficients, residual_norm)``.
    """
    w = np.asarray(w, dtype=float)
    c = inner_product.project_coefficients(Q, w)
    if len(c) == 0:
        return np.zeros(0), inner_product.norm(w)
    x = back_substitute(R, c)
    resid = w - Q @ c
    return x, inner_product.norm(resid)


def thomas_solve(T: TridiagonalMatrix, rhs) -> np.ndarray:
    """Solve ``T x = rhs`` without pivoting.

    Raises :class:`SingularMatrixError` when a pivot is at most 1e-14 times
    the magnitude of its row.
    """
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if rhs.shape != (T.n,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({T.n},)")
    x, bad = kernels.thomas_solve(
        np.ascontiguousarray(T.sub, dtype=float),
        np.ascontiguousarray(T.diag, dtype=float),
        np.ascontiguousarray(T.sup, dtype=float),
        rhs,
    )
    if x is None:
        raise SingularMatrixError(f"pivot breakdown at row {bad}")
    return np.asarray(x)
