"""Anderson-accelerated fixed-point iteration with trace audits."""

from .analysis import (
    AuditResult,
    RateClass,
    RateEstimate,
    audit_gain_bound,
    audit_lemma_m1,
    audit_rate_envelope,
    audit_update_identity,
    classify_report,
    estimate_kappa,
    estimate_rate,
)
from .core import (
    AndersonConfig,
    DampingSchedule,
    FixedPointProblem,
    HistoryPolicy,
    SolveReport,
    Status,
    anderson_step,
    fixed_point_iterate,
    gamma_to_alpha,
    solve,
)
from .linalg import EUCLIDEAN, InnerProduct, TridiagonalMatrix, economy_qr
from .problems import (
    AffineContraction,
    QuasilinearSpec,
    ScalarProblemKind,
    make_affine,
    quasilinear_problem,
    scalar_problem,
)

__version__ = "0.1.0"

__all__ = [
    "AuditResult",
    "RateClass",
    "RateEstimate",
    "audit_gain_bound",
    "audit_lemma_m1",
    "audit_rate_envelope",
    "audit_update_identity",
    "classify_report",
    "estimate_kappa",
    "estimate_rate",
    "AndersonConfig",
    "DampingSchedule",
    "FixedPointProblem",
    "HistoryPolicy",
    "SolveReport",
    "Status",
    "anderson_step",
    "fixed_point_iterate",
    "gamma_to_alpha",
    "solve",
    "AffineContraction",
    "QuasilinearSpec",
    "ScalarProblemKind",
    "make_affine",
    "quasilinear_problem",
    "scalar_problem",
    "EUCLIDEAN",
    "InnerProduct",
    "TridiagonalMatrix",
    "economy_qr",
]
