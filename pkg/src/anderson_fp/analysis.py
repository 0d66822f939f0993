"""Checks of the algebraic identities and rate bounds on completed traces.

Every audit returns an :class:`AuditResult` whose ``passed`` flag is
``worst_deviation <= tolerance``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import THETA_SLACK, SolveReport, Status
from .linalg import EUCLIDEAN

EPS = np.finfo(float).eps
IDENTITY_TOL = 1e-10
LEMMA_SLACK = 1e-8
# rounding allowance on ||w_{k+1}|| in units of eps * (magnitude of the iterates involved)
NOISE_FACTOR = 16.0
ENVELOPE_TAIL = 0.8


class AuditError(Exception):
    pass


class InsufficientHistoryError(AuditError):
    """The trace has no steps the audit can be evaluated on."""


class NotContractiveError(AuditError, ValueError):
    """A contraction constant of 1 or more was supplied."""


class DegenerateStepError(AuditError):
    """Two consecutive iterates coincide."""


class NonPositiveResidualError(AuditError, ValueError):
    """A residual norm in the fitting window is zero or negative."""


class RateClass(str, enum.Enum):
    LINEAR = "Linear"
    SUPERLINEAR = "Superlinear"
    QUADRATIC = "Quadratic"
    STAGNANT = "Stagnant"
    DIVERGENT = "Divergent"


@dataclass
class AuditResult:
    name: str
    worst_deviation: float
    tolerance: float
    passed: bool
    location: int | None = None
    notes: list[str] = field(default_factory=list)
    value: float | None = None

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        loc = "-" if self.location is None else str(self.location)
        extra = "" if self.value is None else f" value={self.value:.3e}"
        return (f"{flag} {self.name:<16} worst={self.worst_deviation:.3e} "
                f"tol={self.tolerance:.1e} at k={loc}{extra}")


def _result(name, worst, tol, loc, notes=None, value=None):
    return AuditResult(name, float(worst), float(tol), bool(worst <= tol), loc, notes or [], value)


@dataclass
class RateEstimate:
    fitted_rate: float
    window: tuple[int, int]
    r_squared: float
    classification: RateClass
    order: float = float("nan")


def _require_history(trace: SolveReport):
    if not trace.iterates or not trace.g_values:
        raise InsufficientHistoryError("trace carries no iterate history")


def _ip(trace):
    return getattr(trace, "inner_product", None) or EUCLIDEAN


# ---------------------------------------------------------------------------
# audits


def audit_update_identity(trace: SolveReport) -> AuditResult:
    """Check ``sum_j gamma_j e_j = x_k - x^alpha_{k-1} = beta_{k-1} w^alpha_k``.

    For each accelerated step the three vectors are rebuilt from the stored
    iterates, ``g`` values, coefficients and damping. The deviation is the
    largest pairwise difference divided by the magnitude of the vectors the
    three expressions are formed from (``||x_k||`` plus the alpha-weighted
    norms of the window's iterates and ``g`` values), so that cancellation
    near convergence is not counted as a violation.
    """
    _require_history(trace)
    worst, loc, checked = 0.0, None, 0
    n_iter = len(trace.iterates)
    for s, step in enumerate(trace.steps):
        if not step.accelerated or s + 1 >= n_iter:
            continue
        alpha = np.asarray(step.alpha)
        start = step.window_start
        xs = [trace.iterates[j] for j in range(start, s + 1)]
        gs = [trace.g_values[j] for j in range(start, s + 1)]
        x_new = trace.iterates[s + 1]
        gamma = np.cumsum(alpha)
        lhs = sum(gamma[i] * (trace.iterates[start + i + 1] - trace.iterates[start + i])
                  for i in range(len(alpha)))
        mid = x_new - sum(a * x for a, x in zip(alpha, xs))
        rhs = step.beta * sum(a * (g - x) for a, x, g in zip(alpha, xs, gs))
        scale = np.linalg.norm(x_new) + sum(
            abs(a) * (np.linalg.norm(x) + np.linalg.norm(g)) for a, x, g in zip(alpha, xs, gs)
        )
        scale = max(scale, np.linalg.norm(lhs), np.linalg.norm(mid), np.linalg.norm(rhs))
        if scale == 0.0:
            continue
        dev = max(np.linalg.norm(lhs - mid), np.linalg.norm(mid - rhs),
                  np.linalg.norm(lhs - rhs)) / scale
        checked += 1
        if dev > worst or loc is None:
            worst, loc = max(worst, dev), s + 1
    if checked == 0:
        raise InsufficientHistoryError("no accelerated steps to check the update identity on")
    return _result("update_identity", worst, IDENTITY_TOL, loc)


def audit_gain_bound(trace: SolveReport) -> AuditResult:
    """``0 <= theta_k <= 1`` and ``||w^alpha|| <= ||w||`` at every step (slack 1e-12)."""
    worst, loc, notes = -math.inf, None, []
    for step in trace.steps:
        dev = max(-step.theta, step.theta - 1.0)
        mixed = step.mixed_residual_norm
        if step.residual_norm > 0.0 and math.isfinite(mixed):
            dev = max(dev, mixed / step.residual_norm - 1.0)
        raw = step.theta_raw
        if math.isfinite(raw) and (raw < -THETA_SLACK or raw > 1.0 + THETA_SLACK):
            notes.append(f"k={step.k}: unclamped theta {raw!r}")
        if dev > worst:
            worst, loc = dev, step.k
    if loc is None:
        worst = 0.0
    return _result("gain_bound", max(worst, 0.0), THETA_SLACK, loc, notes)


def audit_lemma_m1(trace: SolveReport, kappa: float) -> AuditResult:
    """Depth-one coefficient bounds against the residuals.

    With ``alpha^{j}`` mixing ``w_{j-1}`` and ``w_j``:
    ``|alpha_{j-1}| ||e_{j-1}|| <= ||w_{j-1}|| / (1 - kappa)`` and
    ``|alpha_{j-2}| ||e_{j-1}|| <= ||w_j|| / (1 - kappa)``.
    Deviation is ``max(lhs / rhs) - 1`` with tolerance 1e-8.
    """
    if not kappa < 1.0:
        raise NotContractiveError(f"kappa = {kappa} is not a contraction constant")
    if trace.config.depth_m != 1:
        raise ValueError(f"lemma audit needs a depth-one run, got m = {trace.config.depth_m}")
    _require_history(trace)
    ip = _ip(trace)
    worst, loc, checked = -math.inf, None, 0
    for s, step in enumerate(trace.steps):
        if not step.accelerated or step.depth != 1:
            continue
        a_old, a_new = step.alpha
        e = ip.norm(trace.iterates[s] - trace.iterates[s - 1])
        w_old = ip.norm(trace.residual(s - 1))
        w_new = ip.norm(trace.residual(s))
        for lhs, w in ((abs(a_new) * e, w_old), (abs(a_old) * e, w_new)):
            rhs = w / (1.0 - kappa)
            if rhs > 0.0:
                ratio = lhs / rhs - 1.0
            else:
                ratio = -1.0 if lhs == 0.0 else math.inf
            checked += 1
            if ratio > worst:
                worst, loc = ratio, s + 1
    if checked == 0:
        raise InsufficientHistoryError("no depth-one steps in trace")
    return _result("lemma_m1", worst, LEMMA_SLACK, loc)


def _noise_floor(trace, p, k):
    """Rounding allowance for ``||w_{k+1}||`` given step ``p`` produced ``x_k``."""
    step = trace.steps[p]
    start = step.window_start
    mag = np.linalg.norm(trace.iterates[k])
    if k < len(trace.g_values):
        mag += np.linalg.norm(trace.g_values[k])
    for i, a in enumerate(np.asarray(step.alpha)):
        j = start + i
        mag += abs(a) * (np.linalg.norm(trace.iterates[j]) + np.linalg.norm(trace.g_values[j]))
    return NOISE_FACTOR * EPS * mag


def audit_rate_envelope(trace: SolveReport, kappa: float, fit_constant: bool = True,
                        c_tol: float | None = None) -> AuditResult:
    """Fit ``||w_{k+1}|| <= theta ((1 - beta) + kappa beta) ||w_k|| + C sum_j ||w_{k-j}||^2``.

    ``theta`` and ``beta`` are those of the step that produced ``x_k``; the
    quadratic sum runs over ``j = 0..m``. The smallest ``C >= 0`` is fitted
    on the trailing 80% of the steps; ``value`` holds it. With
    ``fit_constant=False`` the first-order bound alone is checked and the
    deviation is the largest slack relative to ``||w_k||``.

    ``c_tol`` defaults to infinity (any finite C passes) when fitting and to
    1e-10 otherwise.
    """
    if not kappa < 1.0:
        raise NotContractiveError(f"kappa = {kappa} is not a contraction constant")
    _require_history(trace)
    m = trace.config.depth_m
    rows = []
    for k in range(1, len(trace.steps)):
        p = k - 1
        prev = trace.steps[p]
        if prev.stop is not None:
            continue
        wk = prev.residual_norm
        rate = prev.theta * ((1.0 - prev.beta) + kappa * prev.beta)
        slack = trace.steps[k].residual_norm - rate * wk - _noise_floor(trace, p, k)
        quad = sum(trace.steps[p - j].residual_norm ** 2 for j in range(m + 1) if p - j >= 0)
        rows.append((k, slack, wk, quad))
    if not rows:
        raise InsufficientHistoryError("trace too short for a rate envelope")
    rows = rows[len(rows) - max(1, math.ceil(ENVELOPE_TAIL * len(rows))):]
    if not fit_constant:
        worst, loc = -math.inf, None
        for k, slack, wk, _ in rows:
            dev = slack / wk if wk > 0 else (0.0 if slack <= 0 else math.inf)
            if dev > worst:
                worst, loc = dev, k
        return _result("rate_envelope", max(worst, 0.0), 1e-10 if c_tol is None else c_tol, loc)
    C, loc = 0.0, rows[0][0]
    for k, slack, _, quad in rows:
        if slack <= 0.0:
            continue
        ck = slack / quad if quad > 0.0 else math.inf
        if ck > C:
            C, loc = ck, k
    notes = []
    if math.isfinite(C):
        bad = [k for k, slack, _, quad in rows if slack > C * quad * (1.0 + 1e-12)]
        if bad:
            notes.append(f"inconsistent slack at k={bad}")
            C = math.inf
    tol = math.inf if c_tol is None else c_tol
    res = AuditResult("rate_envelope", C, tol, bool(math.isfinite(C) and C <= tol), loc, notes, value=C)
    return res


# ---------------------------------------------------------------------------
# rate estimation


def estimate_rate(residual_norms, window: tuple[int, int] | None = None) -> RateEstimate:
    """Fit ``log r_k`` linearly over ``window = (start, stop)`` and classify.

    Rules, in order: Divergent if the last residual exceeds 10x the first;
    Stagnant if the fitted rate is within 0.005 of one and the local rates
    barely vary; Quadratic if the mean order estimate
    ``log(r_{k+1}/r_k) / log(r_k/r_{k-1})`` is at least 1.8; Superlinear if
    the local rates ``r_{k+1}/r_k`` are non-increasing and end below half
    their initial value; Linear otherwise.
    """
    r = np.asarray(residual_norms, dtype=float)
    start, stop = window if window is not None else (0, len(r))
    seg = r[start:stop]
    if len(seg) < 5:
        raise ValueError(f"need at least 5 residuals in window, got {len(seg)}")
    if np.any(seg <= 0.0) or not np.all(np.isfinite(seg)):
        raise NonPositiveResidualError("residuals in the window must be positive and finite")
    y = np.log(seg)
    t = np.arange(len(seg), dtype=float)
    slope, intercept = np.polyfit(t, y, 1)
    fit = slope * t + intercept
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - fit) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    rho = float(np.exp(slope))

    dec = np.diff(y)
    local = np.exp(dec)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = dec[1:] / dec[:-1]
    orders = orders[np.isfinite(orders)]
    order = float(np.mean(orders)) if orders.size else float("nan")

    if seg[-1] > 10.0 * seg[0]:
        cls = RateClass.DIVERGENT
    elif 0.995 < rho < 1.005 and np.std(dec) < 0.05:
        cls = RateClass.STAGNANT
    elif orders.size and order >= 1.8:
        cls = RateClass.QUADRATIC
    elif np.all(np.diff(local) <= 0.0) and local[-1] < 0.5 * local[0]:
        cls = RateClass.SUPERLINEAR
    else:
        cls = RateClass.LINEAR
    return RateEstimate(rho, (start, start + len(seg)), r2, cls, order)


def classify_report(trace: SolveReport) -> RateEstimate | None:
    """Rate estimate from the first update on, up to the first zero residual.

    Returns ``None`` when fewer than five usable residuals exist.
    """
    r = trace.residual_norms
    start = 1 if len(r) > 1 else 0
    stop = start
    while stop < len(r) and r[stop] > 0.0 and math.isfinite(r[stop]):
        stop += 1
    if stop - start < 5:
        return None
    est = estimate_rate(r, (start, stop))
    if trace.status is Status.DIVERGED:
        est.classification = RateClass.DIVERGENT
    return est


def estimate_kappa(trace: SolveReport) -> float:
    """Largest ``||g(x_k) - g(x_{k-1})|| / ||x_k - x_{k-1}||`` along the trajectory.

    A lower bound for the Lipschitz constant of ``g``.
    """
    _require_history(trace)
    if len(trace.g_values) < 2 or len(trace.iterates) < 3:
        raise InsufficientHistoryError("need at least three iterates")
    ip = _ip(trace)
    best = 0.0
    for k in range(1, len(trace.g_values)):
        dx = ip.norm(trace.iterates[k] - trace.iterates[k - 1])
        if dx == 0.0:
            raise DegenerateStepError(f"x_{k} equals x_{k - 1}")
        best = max(best, ip.norm(trace.g_values[k] - trace.g_values[k - 1]) / dx)
    return best


AUDITS = ("update_identity", "gain_bound", "lemma_m1", "rate_envelope")


def run_audits(trace: SolveReport, names=AUDITS, kappa: float | None = None) -> list[AuditResult]:
    """Run the named audits; ``kappa`` defaults to ``estimate_kappa(trace)``."""
    out = []
    for name in names:
        if name == "update_identity":
            out.append(audit_update_identity(trace))
        elif name == "gain_bound":
            out.append(audit_gain_bound(trace))
        elif name in ("lemma_m1", "rate_envelope"):
            kap = kappa if kappa is not None else estimate_kappa(trace)
            if name == "lemma_m1":
                out.append(audit_lemma_m1(trace, kap))
            else:
                out.append(audit_rate_envelope(trace, kap))
        else:
            raise ValueError(f"unknown audit {name!r}")
    return out
