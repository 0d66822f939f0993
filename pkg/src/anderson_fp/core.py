"""Anderson acceleration with depth ``m`` and damping, with the gain made explicit.

Notation follows the usual one for Anderson mixing. At step ``k`` the
iterate ``x_k`` is mapped to ``g(x_k)`` and the residual is
``w_{k+1} = g(x_k) - x_k``. The coefficients ``alpha`` (summing to one)
minimize ``|| sum_j alpha_j w_{j+1} ||`` over the last ``m_k + 1``
residuals, and the next iterate is

    x_{k+1} = (1 - beta_k) sum_j alpha_j x_j + beta_k sum_j alpha_j g(x_j).

The gain ``theta_k`` is the ratio of the optimized residual norm to
``||w_{k+1}||``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import EUCLIDEAN, InnerProduct, economy_qr, least_squares

THETA_SLACK = 1e-12


class AndersonError(Exception):
    """Base class for solver failures."""


class NonFiniteError(AndersonError):
    """``g`` produced NaN or Inf."""


class DivergedError(AndersonError):
    """The residual exceeded the divergence guard."""


class MaxItersError(AndersonError):
    """The iteration budget ran out before convergence."""


class ZeroResidualError(AndersonError, ValueError):
    """A gain was requested for a zero residual."""


class Status(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    MAX_ITERS = "max_iters"
    NON_FINITE = "non_finite"


class HistoryPolicy(str, enum.Enum):
    """How many residual differences enter the mixing problem at step ``k``.

    ``TruncateMinKM`` uses ``m_k = min(k, m)``; ``FlushUntilM`` runs plain
    (damped) steps until ``k >= m`` and then uses the full depth.
    """

    TRUNCATE_MIN_KM = "TruncateMinKM"
    FLUSH_UNTIL_M = "FlushUntilM"

    def depth_at(self, k: int, m: int) -> int:
        if self is HistoryPolicy.TRUNCATE_MIN_KM:
            return min(k, m)
        return m if k >= m else 0


@dataclass(frozen=True)
class FixedPointProblem:
    """An operator ``g`` on R^n together with the inner product used for mixing."""

    dimension: int
    eval_g: Callable[[np.ndarray], np.ndarray]
    inner_product: InnerProduct = EUCLIDEAN
    fixed_point: np.ndarray | None = None
    kappa: float | None = None
    name: str = "problem"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    def g(self, x: np.ndarray) -> np.ndarray:
        gx = np.asarray(self.eval_g(x), dtype=float).reshape(self.dimension)
        return gx

    def check_state(self, x) -> np.ndarray:
        x = np.array(x, dtype=float).reshape(-1)
        if x.shape != (self.dimension,):
            raise ValueError(f"state has {x.size} entries, expected {self.dimension}")
        if not np.all(np.isfinite(x)):
            raise ValueError("initial state must be finite")
        return x


@dataclass(frozen=True)
class DampingSchedule:
    """Constant damping ``beta`` or the adaptive rule ``beta = 1 - theta/2``."""

    beta: float = 1.0
    adaptive: bool = False

    def __post_init__(self):
        if not self.adaptive and not 0.0 < self.beta <= 1.0:
            raise ValueError(f"damping factor must lie in (0, 1], got {self.beta}")

    @classmethod
    def constant(cls, beta: float) -> "DampingSchedule":
        return cls(beta=float(beta))

    @classmethod
    def make_adaptive(cls) -> "DampingSchedule":
        return cls(beta=1.0, adaptive=True)

    def __str__(self):
        return "adaptive" if self.adaptive else repr(self.beta)


@dataclass(frozen=True)
class AndersonConfig:
    depth_m: int = 0
    damping: DampingSchedule = field(default_factory=DampingSchedule)
    residual_tol: float = 1e-10
    max_iters: int = 100
    divergence_guard: float = 1e10
    history_policy: HistoryPolicy = HistoryPolicy.TRUNCATE_MIN_KM
    rank_drop_tol: float = 1e-10

    def __post_init__(self):
        if self.depth_m < 0:
            raise ValueError("depth_m must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 0.0 < self.residual_tol < self.divergence_guard:
            raise ValueError("need 0 < residual_tol < divergence_guard")
        if self.rank_drop_tol <= 0.0:
            raise ValueError("rank_drop_tol must be positive")
        object.__setattr__(self, "history_policy", HistoryPolicy(self.history_policy))


@dataclass
class StepReport:
    """Record of one pass through the loop.

    ``alpha`` weights the iterates ``x_{window_start} .. x_k``. A record
    with ``stop`` set ends the run and carries ``x_next = x_k``.
    """

    k: int
    residual_norm: float
    theta: float
    beta: float
    alpha: np.ndarray
    x_next: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta_raw: float = float("nan")
    mixed_residual_norm: float = float("nan")
    depth: int = 0
    window_start: int = 0
    stop: str | None = None
    g_value: np.ndarray | None = field(default=None, repr=False)

    @property
    def accelerated(self) -> bool:
        return self.depth >= 1 and self.stop is None


class IterationHistory:
    """Sliding window of the last ``m + 1`` iterates, ``g`` values and residuals."""

    def __init__(self, depth_m: int):
        self.depth_m = depth_m
        self.iterates: deque = deque(maxlen=depth_m + 1)
        self.g_values: deque = deque(maxlen=depth_m + 1)
        self.residuals: deque = deque(maxlen=depth_m + 1)
        self.k = 0
        self.last_alphas = np.ones(1)
        self.last_gammas = np.zeros(0)
        self.last_theta = 1.0
        self.last_beta = 1.0

    def push(self, x, gx, w):
        self.iterates.append(x)
        self.g_values.append(gx)
        self.residuals.append(w)

    def window(self, depth: int):
        """The newest ``depth + 1`` entries of each buffer, oldest first."""
        n = depth + 1
        if n > len(self.residuals):
            raise ValueError(f"history holds {len(self.residuals)} entries, need {n}")
        sl = slice(len(self.residuals) - n, None)
        return (list(self.iterates)[sl], list(self.g_values)[sl], list(self.residuals)[sl])


@dataclass
class SolveReport:
    """Full trace of a run.

    ``iterates[j]`` is ``x_j``; ``g_values[j] = g(x_j)`` for every evaluated
    iterate. ``steps[k]`` describes the pass that evaluated ``x_k``.
    """

    problem_name: str
    config: AndersonConfig
    status: Status
    steps: list[StepReport]
    iterates: list[np.ndarray]
    g_values: list[np.ndarray]
    message: str = ""
    inner_product: InnerProduct = EUCLIDEAN

    @property
    def iterations(self) -> int:
        """Index of the last evaluated iterate."""
        return self.steps[-1].k if self.steps else 0

    @property
    def residual_norms(self) -> np.ndarray:
        return np.array([s.residual_norm for s in self.steps])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.steps])

    @property
    def betas(self) -> np.ndarray:
        return np.array([s.beta for s in self.steps])

    @property
    def final_residual(self) -> float:
        return self.steps[-1].residual_norm if self.steps else float("nan")

    @property
    def x(self) -> np.ndarray:
        return self.iterates[len(self.g_values) - 1]

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def residual(self, j: int) -> np.ndarray:
        """``w_{j+1} = g(x_j) - x_j``."""
        return self.g_values[j] - self.iterates[j]

    def classification(self):
        """Rate estimate over the positive residuals, or ``None`` if too short."""
        from .analysis import classify_report

        return classify_report(self)

    def raise_for_status(self):
        if self.status is Status.DIVERGED:
            raise DivergedError(self.message)
        if self.status is Status.NON_FINITE:
            raise NonFiniteError(self.message)
        if self.status is Status.MAX_ITERS:
            raise MaxItersError(self.message)


def gamma_to_alpha(gamma) -> np.ndarray:
    """Coefficients summing to one from the cumulative (gamma) form.

    ``gamma_n`` is the partial sum of the first ``n + 1`` alphas, so
    ``alpha_0 = gamma_0``, ``alpha_n = gamma_n - gamma_{n-1}`` and the
    newest coefficient is ``1 - gamma_last``.
    """
    gamma = np.asarray(gamma, dtype=float).reshape(-1)
    if gamma.size == 0:
        return np.ones(1)
    alpha = np.empty(gamma.size + 1)
    alpha[0] = gamma[0]
    alpha[1:-1] = np.diff(gamma)
    alpha[-1] = 1.0 - gamma[-1]
    return alpha


def compute_gain(q_basis, w, inner_product: InnerProduct = EUCLIDEAN, clamp: bool = True) -> float:
    """Direction-sine between ``w`` and the span of the orthonormal ``q_basis``.

    Equal to ``sqrt(1 - ||Q^T W w||^2 / ||w||^2)``; evaluated from the
    explicit projection residual so that values near zero keep full accuracy.
    """
    w = np.asarray(w, dtype=float)
    wn = inner_product.norm(w)
    if wn == 0.0:
        raise ZeroResidualError("gain undefined for a zero residual")
    q_basis = np.asarray(q_basis, dtype=float)
    if q_basis.size == 0:
        return 1.0
    q_basis = q_basis.reshape(w.size, -1)
    resid = w - q_basis @ inner_product.project_coefficients(q_basis, w)
    theta = inner_product.norm(resid) / wn
    if clamp:
        theta = min(max(theta, 0.0), 1.0)
    return theta


def _mixing_ls(residual_window, inner_product, rank_drop_tol):
    ws = [np.asarray(w, dtype=float) for w in residual_window]
    if len(ws) < 2:
        raise ValueError("mixing needs at least two residuals")
    m = len(ws) - 1
    target = ws[-1]
    wn = inner_product.norm(target)
    gamma = np.zeros(m)
    if wn == 0.0:
        return gamma, 0.0, 0.0
    F = np.column_stack([ws[i + 1] - ws[i] for i in range(m)])
    Q, R, kept = economy_qr(F, inner_product, rank_drop_tol)
    if not kept:
        return gamma, 1.0, wn
    coef, _ = least_squares(Q, R, target, inner_product)
    gamma[kept] = coef
    theta_raw = compute_gain(Q, target, inner_product, clamp=False)
    return gamma, theta_raw, wn


def solve_mixing_ls(residual_window, inner_product: InnerProduct = EUCLIDEAN,
                    rank_drop_tol: float = 1e-10):
    """Solve ``min || w_{k+1} - F gamma ||`` with ``F = [w_{n+1} - w_n]``.

    ``residual_window`` lists the residuals oldest first, newest last.
    Nearly dependent difference columns are dropped and get ``gamma = 0``.

    Returns
    -------
    gamma : array of length ``len(residual_window) - 1``
    theta : achieved norm over ``||w_{k+1}||``, clamped to [0, 1]
    mixed_residual_norm : the achieved norm, never above ``||w_{k+1}||``
    """
    gamma, theta_raw, wn = _mixing_ls(residual_window, inner_product, rank_drop_tol)
    theta = min(max(theta_raw, 0.0), 1.0)
    return gamma, theta, theta * wn


def beta_schedule(schedule: DampingSchedule, theta_k: float) -> float:
    if schedule.adaptive:
        theta_k = min(max(theta_k, 0.0), 1.0)
        return 1.0 - 0.5 * theta_k
    return schedule.beta


def _stop_report(k, wn, x, gx, stop, config):
    theta = 0.0 if stop == "converged" else 1.0
    return StepReport(
        k=k, residual_norm=wn, theta=theta, theta_raw=theta,
        beta=beta_schedule(config.damping, theta), alpha=np.ones(1), gamma=np.zeros(0),
        mixed_residual_norm=wn, depth=0, window_start=k, x_next=x, stop=stop, g_value=gx,
    )


def _evaluate(problem, x, k):
    gx = problem.g(x)
    if not np.all(np.isfinite(gx)):
        raise NonFiniteError(f"g returned non-finite values at k={k}")
    w = gx - x
    wn = problem.inner_product.norm(w)
    if not math.isfinite(wn):
        raise NonFiniteError(f"residual norm overflowed at k={k}")
    return gx, w, wn


def anderson_step(problem: FixedPointProblem, history: IterationHistory, x_k, config: AndersonConfig):
    """One pass of the accelerated iteration from ``x_k``.

    Evaluates ``g(x_k)``, pushes it to ``history``, solves the mixing problem
    over the active window and returns ``(x_{k+1}, StepReport)``. At
    ``k = 0`` this is the undamped first step ``x_1 = g(x_0)``. When the
    residual is at or below ``residual_tol`` (or above the divergence guard)
    no update is formed and the report carries ``stop``. ``report.g_value``
    holds ``g(x_k)``.
    """
    k = history.k
    gx, w, wn = _evaluate(problem, x_k, k)
    if wn <= config.residual_tol:
        return x_k, _stop_report(k, wn, x_k, gx, "converged", config)
    if wn > config.divergence_guard:
        return x_k, _stop_report(k, wn, x_k, gx, "diverged", config)

    history.push(x_k, gx, w)
    depth = config.history_policy.depth_at(k, config.depth_m)
    ip = problem.inner_product
    if depth == 0:
        gamma = np.zeros(0)
        theta_raw = 1.0
        alpha = np.ones(1)
    else:
        xs, gs, ws = history.window(depth)
        gamma, theta_raw, _ = _mixing_ls(ws, ip, config.rank_drop_tol)
        alpha = gamma_to_alpha(gamma)
    theta = min(max(theta_raw, 0.0), 1.0)
    beta = 1.0 if k == 0 else beta_schedule(config.damping, theta)

    if depth == 0:
        mixed = wn
        x_next = gx if beta == 1.0 else (1.0 - beta) * x_k + beta * gx
    else:
        g_avg = alpha @ np.asarray(gs)
        w_avg = alpha @ np.asarray(ws)
        mixed = ip.norm(w_avg)
        if beta == 1.0:
            x_next = g_avg
        else:
            x_avg = alpha @ np.asarray(xs)
            x_next = (1.0 - beta) * x_avg + beta * g_avg

    history.k = k + 1
    history.last_alphas = alpha
    history.last_gammas = gamma
    history.last_theta = theta
    history.last_beta = beta
    report = StepReport(
        k=k, residual_norm=wn, theta=theta, theta_raw=theta_raw, beta=beta,
        alpha=alpha, gamma=gamma, mixed_residual_norm=mixed, depth=depth,
        window_start=k - depth, x_next=x_next, g_value=gx,
    )
    return x_next, report


def _finish(problem, config, steps, iterates, g_values, status, message=""):
    return SolveReport(problem.name, config, status, steps, iterates, g_values, message,
                       problem.inner_product)


def _stop_status(stop):
    return Status.CONVERGED if stop == "converged" else Status.DIVERGED


def solve(problem: FixedPointProblem, x0, config: AndersonConfig) -> SolveReport:
    """Run the accelerated iteration from ``x0`` until a stopping rule fires.

    Failures do not raise; they are reported in ``status``. Use
    :meth:`SolveReport.raise_for_status` for exception semantics.
    """
    x = problem.check_state(x0)
    history = IterationHistory(config.depth_m)
    steps: list[StepReport] = []
    iterates = [x]
    g_values: list[np.ndarray] = []
    for _ in range(config.max_iters):
        try:
            x_next, rep = anderson_step(problem, history, x, config)
        except NonFiniteError as exc:
            return _finish(problem, config, steps, iterates, g_values, Status.NON_FINITE, str(exc))
        g_values.append(rep.g_value)
        steps.append(rep)
        if rep.stop is not None:
            return _finish(problem, config, steps, iterates, g_values, _stop_status(rep.stop))
        x = x_next
        iterates.append(x)
    return _finish(problem, config, steps, iterates, g_values, Status.MAX_ITERS,
                   f"no convergence in {config.max_iters} iterations")


def fixed_point_iterate(problem: FixedPointProblem, x0, config: AndersonConfig) -> SolveReport:
    """Plain damped iteration ``x_{k+1} = (1 - beta) x_k + beta g(x_k)``.

    No mixing arithmetic is done; with ``beta = 1`` the next iterate is the
    array returned by ``g``. Damping applies from the first step on.
    """
    if config.depth_m != 0:
        raise ValueError("fixed_point_iterate requires depth_m = 0")
    x = problem.check_state(x0)
    steps: list[StepReport] = []
    iterates = [x]
    g_values: list[np.ndarray] = []
    for k in range(config.max_iters):
        try:
            gx, w, wn = _evaluate(problem, x, k)
        except NonFiniteError as exc:
            return _finish(problem, config, steps, iterates, g_values, Status.NON_FINITE, str(exc))
        g_values.append(gx)
        stop = None
        if wn <= config.residual_tol:
            stop = "converged"
        elif wn > config.divergence_guard:
            stop = "diverged"
        if stop is not None:
            steps.append(_stop_report(k, wn, x, gx, stop, config))
            return _finish(problem, config, steps, iterates, g_values, _stop_status(stop))
        beta = beta_schedule(config.damping, 1.0)
        x_next = gx if beta == 1.0 else (1.0 - beta) * x + beta * gx
        steps.append(StepReport(
            k=k, residual_norm=wn, theta=1.0, theta_raw=1.0, beta=beta, alpha=np.ones(1),
            gamma=np.zeros(0), mixed_residual_norm=wn, depth=0, window_start=k, x_next=x_next,
            g_value=gx,
        ))
        x = x_next
        iterates.append(x)
    return _finish(problem, config, steps, iterates, g_values, Status.MAX_ITERS,
                   f"no convergence in {config.max_iters} iterations")
