"""Exact evaluation, stationarity certificates, and brute-force test oracles.

The grid prox and finite-difference oracles deliberately share no code with
the closed forms they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import FccoProblem, OracleError, UnsupportedOperationError
from .smoothing import moreau_grad, moreau_value

__all__ = [
    "StationarityReport",
    "eval_exact",
    "grad_F_lambda_exact",
    "stationarity_report",
    "finite_difference_gradient",
    "brute_force_prox",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def finite_difference_gradient(
    fn: Callable[[np.ndarray], float], w: np.ndarray, h: float = 1e-6
) -> np.ndarray:
    """Central differences per coordinate; ``fn`` must be deterministic."""
    w = np.asarray(w, dtype=float)
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (fn(w + e) - fn(w - e)) / (2.0 * h)
    return g


def _golden_section(fn, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Minimize a unimodal 1-D function on [lo, hi]."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def _values_on(outer, pts: np.ndarray) -> np.ndarray:
    if hasattr(outer, "value_many"):
        return np.asarray(outer.value_many(pts), dtype=float)
    return np.array([outer.value(p) for p in pts])


def _brute_prox_1d(outer, lam, t, step):
    t0 = float(np.atleast_1d(t)[0])
    radius = max(3.0 * lam * outer.lipschitz, 16.0 * step)

    def grid_argmin(lo, hi, h):
        grid = np.arange(lo, hi + h, h)
        vals = _values_on(outer, grid[:, None]) + (grid - t0) ** 2 / (2.0 * lam)
        return float(grid[int(np.argmin(vals))])

    # coarse pass, then re-grid around the argmin at the requested step; the
    # objective is unimodal (convex f plus strongly convex quadratic) so the
    # zoom cannot lose the minimizer
    coarse = max(step, 2.0 * radius / 8000.0)
    v0 = grid_argmin(t0 - radius, t0 + radius, coarse)
    if coarse > step:
        v0 = grid_argmin(v0 - 2.0 * coarse, v0 + 2.0 * coarse, step)

    def objective(v):
        return outer.value(np.array([v])) + (v - t0) ** 2 / (2.0 * lam)

    v_star = _golden_section(objective, v0 - 2.0 * step, v0 + 2.0 * step)
    return np.array([v_star])


def _brute_prox_2d(outer, lam, t, step):
    t = np.asarray(t, dtype=float)

    def objective(v):
        return outer.value(v) + float(np.sum((v - t) ** 2)) / (2.0 * lam)

    center = t.copy()
    half = max(3.0 * lam * outer.lipschitz, 64.0 * step)
    npts = 121
    # staged zoom: keep a generous box (6 grid spacings) around each stage's
    # argmin; the objective is convex so the zoom tracks the minimizer
    while True:
        xs = np.linspace(center[0] - half, center[0] + half, npts)
        ys = np.linspace(center[1] - half, center[1] + half, npts)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        vals = _values_on(outer, pts) + np.sum((pts - t) ** 2, axis=1) / (2.0 * lam)
        center = pts[int(np.argmin(vals))].copy()
        spacing = 2.0 * half / (npts - 1)
        if spacing <= min(step, 1e-7):
            break
        half = 6.0 * spacing

    # directional golden polish; diagonal directions cover kinks aligned with
    # the gap coordinate, where axis-only sweeps can stall
    dirs = [
        np.array([1.0, 0.0]),
        np.array([0.0, 1.0]),
        np.array([1.0, 1.0]) / math.sqrt(2.0),
        np.array([1.0, -1.0]) / math.sqrt(2.0),
    ]
    v = center
    span = 4.0 * spacing
    for _ in range(3):
        for u in dirs:
            s = _golden_section(lambda a: objective(v + a * u), -span, span, tol=1e-13)
            v = v + s * u
        span = max(span / 8.0, 1e-10)
    return v


def brute_force_prox(outer, lam: float, t, step: float = 1e-5) -> np.ndarray:
    """Grid-search prox oracle for d1 <= 2 catalog entries.

    Searches the box t +- 3*lam*lipschitz (the prox lies within
    lam*lipschitz of t) and finishes with golden-section refinement.
    Independent of the closed-form prox implementations it validates.
    """
    if outer.dim > 2:
        raise UnsupportedOperationError("grid prox oracle supports d1 <= 2 only")
    if lam <= 0 or step <= 0:
        raise OracleError("lam and step must be positive")
    if outer.dim == 1:
        return _brute_prox_1d(outer, lam, t, step)
    return _brute_prox_2d(outer, lam, t, step)


def _require_exact(problem: FccoProblem) -> None:
    if problem.inner_exact is None:
        raise OracleError("exact inner-value oracle unavailable on this problem")


def eval_exact(problem: FccoProblem, w: np.ndarray, lam: float) -> tuple[float, float]:
    """Population objective and its outer-smoothed value at w.

    Returns (F, F_lam) where F averages f_i(g_i(w)) and F_lam averages the
    envelope values, both plus the additive term when present.
    """
    _require_exact(problem)
    w = np.asarray(w, dtype=float)
    total = 0.0
    total_smoothed = 0.0
    for i in range(problem.n):
        g = problem.inner_exact(i, w)
        total += problem.outers[i].value(g)
        total_smoothed += moreau_value(problem.outers[i], lam, g)
    f = total / problem.n
    f_lam = total_smoothed / problem.n
    if problem.additive is not None:
        extra = float(problem.additive.value(w))
        f += extra
        f_lam += extra
    return f, f_lam


def grad_F_lambda_exact(problem: FccoProblem, w: np.ndarray, lam: float) -> np.ndarray:
    """Exact gradient of the outer-smoothed objective:
    average of J_i(w)^T . envelope_grad(g_i(w)) plus the additive gradient."""
    _require_exact(problem)
    if problem.inner_jacobian_exact is None:
        raise OracleError("exact Jacobian oracle unavailable on this problem")
    w = np.asarray(w, dtype=float)
    acc = np.zeros(problem.d)
    for i in range(problem.n):
        g = problem.inner_exact(i, w)
        y = moreau_grad(problem.outers[i], lam, g)
        jac = np.asarray(problem.inner_jacobian_exact(i, w), dtype=float).reshape(
            problem.d1, problem.d
        )
        acc += jac.T @ y
    acc /= problem.n
    if problem.additive is not None:
        acc = acc + problem.additive.exact_gradient(w)
    return acc


@dataclass
class StationarityReport:
    """Computable stationarity surrogates at a candidate solution.

    grad_F_lambda_norm and approx_grad_residual are the same quantity (the
    envelope gradient identity makes the subgradient aggregation equal the
    smoothed gradient); both are reported for trace-schema completeness.
    approx_t_residual is bounded by lam * max outer Lipschitz constant.
    gram_min_eig is the smallest eigenvalue of the stacked-Jacobian Gram
    matrix: a diagnostic for the regularity condition that upgrades these
    surrogates to a nearly-stationary guarantee, not a certificate by itself
    (the theory's threshold constant is existential and cannot be checked).
    """

    grad_F_lambda_norm: float
    approx_t_residual: float
    approx_grad_residual: float
    gram_min_eig: float | None = None
    gram_rank_deficient: bool = False


def stationarity_report(
    problem: FccoProblem, w: np.ndarray, lam: float, with_gram: bool = False
) -> StationarityReport:
    _require_exact(problem)
    if problem.inner_jacobian_exact is None:
        raise OracleError("exact Jacobian oracle unavailable on this problem")
    w = np.asarray(w, dtype=float)
    t_res = 0.0
    acc = np.zeros(problem.d)
    jacs = []
    for i in range(problem.n):
        g = problem.inner_exact(i, w)
        p = problem.outers[i].prox(lam, g)
        t_res = max(t_res, float(np.linalg.norm(g - p)))
        jac = np.asarray(problem.inner_jacobian_exact(i, w), dtype=float).reshape(
            problem.d1, problem.d
        )
        acc += jac.T @ ((np.atleast_1d(g) - p) / lam)
        if with_gram:
            jacs.append(jac)
    acc /= problem.n
    if problem.additive is not None:
        acc = acc + problem.additive.exact_gradient(w)
    grad_norm = float(np.linalg.norm(acc))

    gram_min = None
    deficient = False
    if with_gram:
        stacked = np.vstack(jacs)
        if stacked.shape[0] > problem.d:
            gram_min = 0.0
            deficient = True
        else:
            gram = stacked @ stacked.T
            gram_min = float(np.linalg.eigvalsh(gram)[0])
    return StationarityReport(
        grad_F_lambda_norm=grad_norm,
        approx_t_residual=t_res,
        approx_grad_residual=grad_norm,
        gram_min_eig=gram_min,
        gram_rank_deficient=deficient,
    )
