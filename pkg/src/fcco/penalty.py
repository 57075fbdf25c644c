"""Smoothed-hinge penalty front-end for inequality-constrained problems.

A constrained problem min g0(w) s.t. g_i(w) <= 0 becomes the compositional
instance g0(w) + (1/m) sum_i envelope(slope * [.]_+)(g_i(w)); the envelope
gradient of each hinge yields a Lagrange-multiplier estimate, so KKT residuals
come for free at any candidate point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import AdditiveTerm, ConfigError, FccoProblem, OracleError
from .smoothing import ScaledHinge

__all__ = [
    "ConstrainedProblem",
    "KktReport",
    "RegularityReport",
    "build_penalty_problem",
    "kkt_report",
    "regularity_check",
    "suggest_penalty_slope",
]


@dataclass
class ConstrainedProblem:
    """Objective + m scalar inequality-constraint oracles over finite
    populations, with declared constraint constants.  ``known_solution`` /
    ``known_multipliers`` are optional hand-computed KKT data on toy
    instances, used by tests only."""

    d: int
    m: int
    objective: AdditiveTerm
    constraint_value: Callable[[int, np.ndarray, np.ndarray], float]
    constraint_grad: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    populations: Sequence[int]
    constraint_value_exact: Callable[[int, np.ndarray], float] | None = None
    constraint_grad_exact: Callable[[int, np.ndarray], np.ndarray] | None = None
    lipschitz_constraints: float | None = None
    smoothness_constraints: float | None = None
    weak_convexity_constraints: float | None = None
    default_w0: np.ndarray | None = None
    known_solution: np.ndarray | None = None
    known_multipliers: np.ndarray | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("need at least one constraint")
        if len(self.populations) != self.m:
            raise ConfigError("one population per constraint required")


@dataclass
class KktReport:
    stationarity: float  # ||grad g0 + sum nu_i grad g_i||
    max_violation: float  # max_i g_i(w)
    complementarity: float  # sum_i |g_i(w) nu_i|
    multipliers: np.ndarray  # each in [0, slope/m]


@dataclass
class RegularityReport:
    sigma_min: float
    rank_deficient: bool = False


def build_penalty_problem(
    cp: ConstrainedProblem, slope: float, lam: float | None = None
) -> FccoProblem:
    """FCCO instance of the smoothed hinge penalty.

    ``slope`` is the penalty strength; the recommended regime is
    slope > m (C_g + 1) / delta with delta the constraint-Jacobian singular
    value bound (see suggest_penalty_slope), paired with lam = eps/slope.
    That hypothesis involves the usually-unknown delta, so it is not checked
    here.  The result is solvable by the single-loop solver when constraints
    are smooth and by the double-loop solver when merely weakly convex.
    """
    if slope <= 0:
        raise ConfigError("penalty slope must be positive")
    if lam is not None and lam <= 0:
        raise ConfigError("lam must be positive when supplied")
    m, d = cp.m, cp.d

    def inner_value(i, w, batch):
        return np.array([cp.constraint_value(i, w, batch)], dtype=float)

    def inner_vjp(i, w, batch, y):
        return float(y[0]) * np.asarray(cp.constraint_grad(i, w, batch), dtype=float)

    inner_exact = None
    inner_jac = None
    if cp.constraint_value_exact is not None:
        def inner_exact(i, w):  # noqa: F811
            return np.array([cp.constraint_value_exact(i, w)], dtype=float)
    if cp.constraint_grad_exact is not None:
        def inner_jac(i, w):  # noqa: F811
            return np.asarray(cp.constraint_grad_exact(i, w), dtype=float).reshape(1, d)

    return FccoProblem(
        n=m,
        d=d,
        d1=1,
        outers=tuple(ScaledHinge(slope) for _ in range(m)),
        inner_value=inner_value,
        inner_vjp=inner_vjp,
        populations=tuple(cp.populations),
        inner_exact=inner_exact,
        inner_jacobian_exact=inner_jac,
        additive=cp.objective,
        lipschitz_inner=cp.lipschitz_constraints,
        smoothness_inner=cp.smoothness_constraints,
        weak_convexity_inner=cp.weak_convexity_constraints,
        is_penalty=True,
        default_w0=cp.default_w0,
    )


def kkt_report(cp: ConstrainedProblem, w: np.ndarray, slope: float, lam: float) -> KktReport:
    """KKT residuals with multipliers read off the hinge envelope gradient:
    nu_i = min([g_i(w)]_+, lam*slope) / (lam m), each in [0, slope/m].
    Feasibility is evaluated deterministically through the exact oracles (no
    probabilistic certificate)."""
    if cp.constraint_value_exact is None or cp.constraint_grad_exact is None:
        raise OracleError("KKT report needs exact constraint oracles")
    if lam <= 0 or slope <= 0:
        raise ConfigError("lam and slope must be positive")
    w = np.asarray(w, dtype=float)
    g = np.array([cp.constraint_value_exact(i, w) for i in range(cp.m)])
    nu = np.minimum(np.maximum(g, 0.0), lam * slope) / (lam * cp.m)
    resid = cp.objective.exact_gradient(w).astype(float)
    for i in range(cp.m):
        resid = resid + nu[i] * np.asarray(cp.constraint_grad_exact(i, w), dtype=float)
    return KktReport(
        stationarity=float(np.linalg.norm(resid)),
        max_violation=float(np.max(g)),
        complementarity=float(np.sum(np.abs(g * nu))),
        multipliers=nu,
    )


def regularity_check(cp: ConstrainedProblem, w: np.ndarray) -> RegularityReport:
    """Smallest singular value of the d x m stacked constraint-gradient
    matrix; a diagnostic run at candidate solutions, never a precondition
    gate.  m > d is rank-deficient by shape and reports 0."""
    if cp.constraint_grad_exact is None:
        raise OracleError("regularity check needs exact constraint gradients")
    w = np.asarray(w, dtype=float)
    jac = np.column_stack(
        [np.asarray(cp.constraint_grad_exact(i, w), dtype=float) for i in range(cp.m)]
    )
    if cp.m > cp.d:
        return RegularityReport(sigma_min=0.0, rank_deficient=True)
    sigma = np.linalg.svd(jac, compute_uv=False)
    return RegularityReport(sigma_min=float(sigma[-1]), rank_deficient=False)


def suggest_penalty_slope(m: int, lipschitz_constraints: float, delta: float) -> float:
    """1.5x the strict-inequality threshold m (C_g + 1)/delta, given a user
    estimate of the regularity constant delta."""
    if delta <= 0:
        raise ConfigError("delta must be positive")
    return 1.5 * m * (lipschitz_constraints + 1.0) / delta
