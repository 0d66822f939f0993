"""Test problems: three scalar maps, affine contractions, and a 1D quasilinear Picard map."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import FixedPointProblem
from .linalg import EUCLIDEAN, InnerProduct, TridiagonalMatrix, thomas_solve

GAUSS_2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class DomainError(ValueError):
    """The map is undefined at the requested point."""


# --------------------------------------------------------------------------
# scalar maps


class ScalarProblemKind(str, enum.Enum):
    FPP1 = "FPP1"  # 1 + 2/x, linear convergence to 2
    FPP2 = "FPP2"  # Newton's method for cos x - sin x
    FPP3 = "FPP3"  # x^2 - 2, expansive at 2

    @property
    def fixed_point(self) -> float:
        return {"FPP1": 2.0, "FPP2": math.pi / 4, "FPP3": 2.0}[self.value]

    @property
    def derivative_at_fixed_point(self) -> float:
        """|g'(x*)|."""
        return {"FPP1": 0.5, "FPP2": 0.0, "FPP3": 4.0}[self.value]

    @property
    def default_x0(self) -> float:
        return {"FPP1": 2.1, "FPP2": 1.0, "FPP3": 4.0}[self.value]


def scalar_g(kind: ScalarProblemKind | str, x: float) -> float:
    kind = ScalarProblemKind(kind)
    x = float(x)
    if kind is ScalarProblemKind.FPP1:
        if x == 0.0:
            raise DomainError("1 + 2/x is undefined at x = 0")
        return 1.0 + 2.0 / x
    if kind is ScalarProblemKind.FPP2:
        s, c = math.sin(x), math.cos(x)
        if abs(s + c) <= 1e-15:
            raise DomainError("Newton step undefined where sin x + cos x = 0")
        return x - (c - s) / (-s - c)
    return x * x - 2.0


def scalar_problem(kind: ScalarProblemKind | str) -> FixedPointProblem:
    kind = ScalarProblemKind(kind)
    kappa = kind.derivative_at_fixed_point
    return FixedPointProblem(
        dimension=1,
        eval_g=lambda x: np.array([scalar_g(kind, x[0])]),
        fixed_point=np.array([kind.fixed_point]),
        kappa=kappa if kappa < 1.0 else None,
        name=kind.value,
    )


# --------------------------------------------------------------------------
# affine contractions g(x) = A x + b


def spectral_norm(A: np.ndarray, tol: float = 1e-13, max_iter: int = 20000) -> float:
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    v = np.ones(n) / math.sqrt(n) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = A.T @ (A @ v)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(nu - lam) <= tol * nu:
            lam = nu
            break
        lam = nu
    return math.sqrt(lam)


@dataclass(frozen=True)
class AffineContraction:
    """``g(x) = A x + b`` with ``||A||_2 <= kappa < 1``."""

    matrix: np.ndarray
    offset: np.ndarray
    kappa: float
    fixed_point: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.matrix, dtype=float)
        b = np.asarray(self.offset, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != b.size:
            raise ValueError("matrix must be square and match the offset length")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if spectral_norm(A) > self.kappa + 1e-6:
            raise ValueError("matrix norm exceeds the declared kappa")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "offset", b)
        xs = np.linalg.solve(np.eye(b.size) - A, b)
        object.__setattr__(self, "fixed_point", xs)

    @property
    def dimension(self) -> int:
        return self.offset.size

    def __call__(self, x):
        return self.matrix @ x + self.offset

    def as_problem(self, name: str | None = None) -> FixedPointProblem:
        return FixedPointProblem(
            dimension=self.dimension,
            eval_g=self,
            fixed_point=self.fixed_point,
            kappa=self.kappa,
            name=name or f"affine(n={self.dimension}, kappa={self.kappa:g})",
        )


def _random_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def make_affine(dimension: int, target_kappa: float, seed: int = 0) -> AffineContraction:
    """Random ``A = U diag(s) V^T`` with largest singular value ``target_kappa``."""
    if not 0.0 < target_kappa < 1.0:
        raise ValueError("target_kappa must lie in (0, 1)")
    if dimension < 1:
        raise ValueError("dimension must be positive")
    rng = np.random.default_rng(seed)
    U = _random_orthogonal(rng, dimension)
    V = _random_orthogonal(rng, dimension)
    s = target_kappa * np.sort(rng.uniform(0.1, 1.0, dimension))[::-1]
    s[0] = target_kappa
    A = (U * s) @ V.T
    b = rng.standard_normal(dimension)
    return AffineContraction(A, b, target_kappa)


# --------------------------------------------------------------------------
# quasilinear -(a(u) u')' = f on (0, 1), P1 elements, homogeneous Dirichlet


@dataclass(frozen=True)
class QuasilinearSpec:
    """Coefficient ``a(u) = k + tanh((u - u0)/eps)``, exact solution ``amp sin(pi x)``."""

    mesh_n: int = 1024
    k_coef: float = 1.01
    u0_coef: float = 0.5
    epsilon: float = 0.1
    exact_amp: float = 10.0
    # if set, a(u) is this constant instead (a linear reference problem)
    constant_coefficient: float | None = None

    def __post_init__(self):
        if self.mesh_n < 2:
            raise ValueError("mesh_n must be at least 2")
        if not self.k_coef > 1.0:
            raise ValueError("k_coef must exceed 1 so that a(u) > 0")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.constant_coefficient is not None and not self.constant_coefficient > 0.0:
            raise ValueError("constant_coefficient must be positive")

    @property
    def h(self) -> float:
        return 1.0 / self.mesh_n

    @property
    def n_interior(self) -> int:
        return self.mesh_n - 1

    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return np.arange(1, self.mesh_n) * self.h

    def coefficient(self, u):
        if self.constant_coefficient is not None:
            return np.full(np.shape(u), float(self.constant_coefficient))
        return self.k_coef + np.tanh((np.asarray(u) - self.u0_coef) / self.epsilon)

    def exact(self, x):
        return self.exact_amp * np.sin(np.pi * np.asarray(x))


def manufactured_load(spec: QuasilinearSpec, x):
    """``f = -(a(u*) u*')'`` for ``u* = amp sin(pi x)``, by the chain rule."""
    x = np.asarray(x, dtype=float)
    amp, pi = spec.exact_amp, np.pi
    u = amp * np.sin(pi * x)
    du = amp * pi * np.cos(pi * x)
    d2u = -amp * pi * pi * np.sin(pi * x)
    if spec.constant_coefficient is not None:
        return -spec.constant_coefficient * d2u
    t = np.tanh((u - spec.u0_coef) / spec.epsilon)
    a = spec.k_coef + t
    da = (1.0 - t * t) / spec.epsilon
    return -(da * du * du + a * d2u)


def load_vector(spec: QuasilinearSpec) -> np.ndarray:
    """``(f, phi_i)`` for interior hat functions, 2-point Gauss per element."""
    h = spec.h
    left = np.arange(spec.mesh_n) * h
    b = np.zeros(spec.mesh_n + 1)
    for gq in GAUSS_2:
        fq = manufactured_load(spec, left + gq * h) * (0.5 * h)
        b[:-1] += fq * (1.0 - gq)
        b[1:] += fq * gq
    return b[1:-1]


def mass_matrix(spec: QuasilinearSpec) -> TridiagonalMatrix:
    n, h = spec.n_interior, spec.h
    off = np.full(n - 1, h / 6.0)
    return TridiagonalMatrix(off, np.full(n, 4.0 * h / 6.0), off.copy())


def stiffness_matrix(spec: QuasilinearSpec, u) -> TridiagonalMatrix:
    """P1 stiffness for ``a(u)`` with ``u`` interpolated linearly on each element."""
    if spec.constant_coefficient is not None:
        n, c = spec.n_interior, spec.constant_coefficient / spec.h
        off = np.full(n - 1, -c)
        return TridiagonalMatrix(off, np.full(n, 2.0 * c), off.copy())
    u_full = np.zeros(spec.mesh_n + 1)
    u_full[1:-1] = u
    diag, off = kernels.assemble_quasilinear(
        u_full, spec.h, spec.k_coef, spec.u0_coef, spec.epsilon
    )
    diag = np.asarray(diag)
    off = np.asarray(off)
    return TridiagonalMatrix(off, diag, off)


def quasilinear_picard_g(spec: QuasilinearSpec, u, load: np.ndarray | None = None) -> np.ndarray:
    """One Picard step: solve ``(a(u) grad g, grad v) = (f, v)`` for ``g``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.n_interior,):
        raise ValueError(f"expected {spec.n_interior} interior values, got {u.shape}")
    if load is None:
        load = load_vector(spec)
    return thomas_solve(stiffness_matrix(spec, u), load)


def quasilinear_problem(spec: QuasilinearSpec | None = None, weighted: bool = False) -> FixedPointProblem:
    """Picard map as a fixed-point problem on the interior nodal values.

    ``weighted=True`` mixes in the L2 inner product given by the mass matrix
    instead of the Euclidean product on coefficient vectors.
    """
    spec = spec or QuasilinearSpec()
    load = load_vector(spec)
    ip = InnerProduct(mass_matrix(spec), name="mass") if weighted else EUCLIDEAN
    return FixedPointProblem(
        dimension=spec.n_interior,
        eval_g=lambda u: quasilinear_picard_g(spec, u, load),
        inner_product=ip,
        name=f"quasilinear(n={spec.mesh_n})",
    )
