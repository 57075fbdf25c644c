"""Double-loop solver: an extrapolated primal-dual inner loop approximates the
proximal point of the outer-smoothed objective, and an outer momentum update
descends the resulting doubly-smoothed objective.

The inner loop is a stochastic primal-dual method for the strongly-convex /
strongly-concave proximal saddle problem.  Dual variables are never stored
explicitly: each component keeps an inner-value tracker u_i and reads its dual
off the envelope gradient (see smoothing.dual_tracker_update), which is
equivalent to the Bregman-prox dual step for convex outer functions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    ConfigError,
    FccoProblem,
    NonFiniteError,
    SeededRng,
    SolverAbort,
    SolverResult,
    SolverTrace,
    TraceRow,
    UnsupportedOperationError,
    ensure_finite,
    sample_components,
)
from .sonex import _draw_batch, _metric_row, adam_step
from .smoothing import dual_tracker_update

__all__ = [
    "Alexr2Config",
    "InnerState",
    "rho_outer_smoothed",
    "theory_inner_params",
    "theory_outer_stepsize",
    "stable_extrapolation",
    "extrapolated_inner_value",
    "inner_primal_step",
    "run_inner_alexr",
    "outer_momentum_step",
    "run_alexr2",
    "refine_with_alexr",
]

_INIT, _COMPONENTS, _BATCH_VAL, _BATCH_JAC, _ADDITIVE, _TAU = 10, 11, 12, 13, 14, 15


def rho_outer_smoothed(problem: FccoProblem) -> float:
    """Weak-convexity bound of the outer-smoothed objective, from declared
    problem constants: sqrt(d1) * C_f * L_g for smooth inner maps, and
    sqrt(d1) * C_f * rho_g for merely weakly convex ones."""
    c_f = problem.max_outer_lipschitz()
    if problem.smoothness_inner is not None:
        curv = problem.smoothness_inner
    elif problem.weak_convexity_inner is not None:
        curv = problem.weak_convexity_inner
    else:
        raise ConfigError(
            "problem must declare smoothness_inner or weak_convexity_inner"
        )
    return float(np.sqrt(problem.d1) * c_f * curv)


def smoothed_objective_smoothness(nu: float, rho: float) -> float:
    """Gradient Lipschitz constant (2 - nu rho)/(nu - nu^2 rho) of the
    nested-smoothed objective."""
    if not 0 < nu and (rho == 0 or nu < 1.0 / rho):
        raise ConfigError("need 0 < nu < 1/rho")
    return (2.0 - nu * rho) / (nu - nu * nu * rho)


def theory_inner_params(
    theta: float, nu: float, rho: float, n: int, b1: int
) -> tuple[float, float]:
    """Analysis coupling of the inner step sizes to the extrapolation theta:
    eta = (1-theta)/(theta/nu - rho) and gamma = (1-theta) n / b1."""
    if not 0 < theta < 1:
        raise ConfigError("theta must lie in (0, 1)")
    denom = theta / nu - rho
    if denom <= 0:
        raise ConfigError("need theta/nu > weak-convexity bound; decrease nu")
    return (1.0 - theta) / denom, (1.0 - theta) * n / b1


def stable_extrapolation(
    problem: FccoProblem, lam: float, nu: float, b1: int, safety: float = 1.0
) -> float:
    """Extrapolation theta keeping the primal-dual coupling stable.

    The contraction argument needs roughly eta * gamma <= lam / (8 C_g^2);
    with the theta-couplings of theory_inner_params this pins
    (1-theta)^2 <= lam (1/nu - rho) b1 / (8 C_g^2 n).  The analysis only
    asserts such a theta exists (1-theta shrinking with the target accuracy);
    this helper returns the least aggressive one."""
    if problem.lipschitz_inner is None:
        raise ConfigError("problem must declare lipschitz_inner")
    rho = rho_outer_smoothed(problem)
    mu = 1.0 / nu - rho
    if mu <= 0:
        raise ConfigError("nu too large for this problem's curvature bound")
    bound = lam * mu * b1 / (8.0 * problem.lipschitz_inner**2 * problem.n)
    one_minus = min(0.3, safety * float(np.sqrt(bound)))
    return 1.0 - one_minus


def theory_outer_stepsize(beta: float, nu: float, rho: float) -> float:
    return beta / (2.0 * smoothed_objective_smoothness(nu, rho))


@dataclass
class Alexr2Config:
    """Double-loop solver parameters.

    ``warm_start_dual`` carries the dual trackers across outer iterations;
    the inner-loop guarantee is stated for fresh starts, so this is an
    empirical default (cold restarts cost n extra oracle calls per outer
    iteration).
    """

    lam: float
    nu: float
    eta: float  # inner primal step
    theta: float  # inner extrapolation
    gamma: float  # dual step; applied as gamma/(1+gamma) in the trackers
    beta: float  # outer momentum mixing, <= 1/2
    alpha: float  # outer step size
    k_inner: int = 100
    k_growth: bool = False  # K_t = k_inner * (1 + t) when set
    iters: int = 50
    b1: int = 1
    b2: int = 1
    warm_start_dual: bool = True
    update_kind: str = "momentum"  # momentum | adam (outer update)
    adam_beta2: float = 0.01
    adam_eps: float = 1e-8
    adam_clip: tuple[float, float] | None = None
    literal_step12: bool = False  # reproduce the printed double-beta text
    metric_every: int | None = None
    stop_grad_norm: float | None = None
    record_wall_time: bool = False
    w0: np.ndarray | None = None

    @property
    def gamma_hat(self) -> float:
        return self.gamma / (1.0 + self.gamma)

    def schedule(self, t: int) -> int:
        return self.k_inner * (1 + t) if self.k_growth else self.k_inner

    def validate(self, problem: FccoProblem) -> None:
        if self.lam <= 0 or self.nu <= 0 or self.eta <= 0:
            raise ConfigError("lam, nu, eta must be positive")
        if not 0 <= self.theta < 1:
            raise ConfigError("theta must lie in [0, 1)")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if not 0 < self.beta <= 0.5:
            raise ConfigError("beta must lie in (0, 1/2]")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.k_inner < 0 or self.iters < 0:
            raise ConfigError("iteration budgets must be nonnegative")
        if not 1 <= self.b1 <= problem.n:
            raise ConfigError(f"b1 must lie in [1, n={problem.n}]")
        if self.update_kind not in ("momentum", "adam"):
            raise ConfigError("update_kind must be momentum or adam")
        check_assumptions(problem)
        rho = rho_outer_smoothed(problem)
        if rho > 0 and self.nu >= 1.0 / rho:
            raise ConfigError(
                f"nu={self.nu} must be < 1/weak-convexity-bound = {1.0 / rho:.6g}"
            )


def check_assumptions(problem: FccoProblem) -> None:
    """Reject problems outside the double-loop method's assumptions:
    outer functions must be convex, and when the inner maps are only weakly
    convex (no declared smoothness) every outer must be monotone
    nondecreasing."""
    for o in problem.outers:
        if o.weak_convexity > 0:
            raise UnsupportedOperationError(
                "double-loop solver requires convex outer functions"
            )
    if problem.smoothness_inner is None:
        if problem.weak_convexity_inner is None:
            raise ConfigError(
                "declare smoothness_inner or weak_convexity_inner on the problem"
            )
        if any(not o.monotone_nondecreasing for o in problem.outers):
            raise UnsupportedOperationError(
                "weakly convex inner maps require monotone nondecreasing outer functions"
            )


@dataclass
class InnerState:
    z: np.ndarray
    z_prev: np.ndarray
    u: np.ndarray  # (n, d1) dual trackers


def extrapolated_inner_value(
    g_now: np.ndarray, g_prev: np.ndarray, theta: float
) -> np.ndarray:
    """g_now + theta (g_now - g_prev); both values from the same batch."""
    return g_now + theta * (g_now - g_prev)


def inner_primal_step(
    z_k: np.ndarray, w_t: np.ndarray, grad: np.ndarray, nu: float, eta: float
) -> np.ndarray:
    """Closed-form minimizer of <grad, z> + ||z - w||^2/(2 nu) + ||z - z_k||^2/(2 eta)."""
    z_new = (z_k / eta + w_t / nu - grad) / (1.0 / eta + 1.0 / nu)
    if __debug__:
        foc = grad + (z_new - w_t) / nu + (z_new - z_k) / eta
        scale = 1.0 + np.linalg.norm(grad)
        assert float(np.max(np.abs(foc))) <= 1e-9 * scale
    return z_new


def _cold_start_trackers(problem, w, b2, rng, t):
    u = np.empty((problem.n, problem.d1))
    for i in range(problem.n):
        pop = problem.batch_domain(i)
        batch = _draw_batch(rng, (_INIT, t, i), pop, min(b2, pop))
        u[i] = problem.inner_value(i, w, batch)
    return u


def run_inner_alexr(
    problem: FccoProblem,
    w_t: np.ndarray,
    config: Alexr2Config,
    rng: SeededRng,
    u_init: np.ndarray | None = None,
    k: int | None = None,
    on_step: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Approximate the proximal point of the outer-smoothed objective at w_t.

    Runs ``k`` primal-dual steps from z = w_t.  Each step draws two
    independent data batches per selected component: one for the extrapolated
    inner values feeding the dual trackers, one for the vector-Jacobian
    product.  Returns (z_hat, final trackers, oracle calls) so the outer loop
    can warm-start the duals and keep its accounting.
    """
    check_assumptions(problem)
    k = config.k_inner if k is None else k
    calls = 0
    if u_init is None:
        u = _cold_start_trackers(problem, w_t, config.b2, rng, 0)
        calls += problem.n
    else:
        u = np.array(u_init, dtype=float)
    z = np.array(w_t, dtype=float)
    z_prev = z.copy()
    gamma_hat = config.gamma_hat
    theta = config.theta

    all_components = np.arange(problem.n)
    for step in range(k):
        if config.b1 == problem.n:
            b1_set = all_components
        else:
            b1_set = sample_components(
                rng.spawn(_COMPONENTS, step), problem.n, config.b1
            )
        grad = np.zeros(problem.d)
        for i in b1_set:
            i = int(i)
            pop = problem.batch_domain(i)
            batch_val = _draw_batch(rng, (_BATCH_VAL, step, i), pop, config.b2)
            batch_jac = _draw_batch(rng, (_BATCH_JAC, step, i), pop, config.b2)
            g_now = problem.inner_value(i, z, batch_val)
            calls += 1
            if theta != 0.0 and step > 0:
                g_prev = problem.inner_value(i, z_prev, batch_val)
                calls += 1
            else:
                g_prev = g_now  # z_prev == z at step 0 by initialization
            g_tilde = extrapolated_inner_value(g_now, g_prev, theta)
            u[i], y = dual_tracker_update(
                problem.outers[i], config.lam, u[i], g_tilde, gamma_hat
            )
            grad += problem.inner_vjp(i, z, batch_jac, y)
            calls += 1
        grad /= len(b1_set)
        if problem.additive is not None:
            pop0 = problem.additive.population
            batch0 = _draw_batch(rng, (_ADDITIVE, step), pop0, min(config.b2, pop0))
            grad = grad + problem.additive.grad(z, batch0)
            calls += 1
        ensure_finite(grad, "inner gradient estimate")
        z_prev = z
        z = inner_primal_step(z, w_t, grad, config.nu, config.eta)
        ensure_finite(z, "inner iterate")
        if on_step is not None:
            on_step(step, z)
    return z, u, calls


def outer_momentum_step(
    w_t: np.ndarray,
    z_hat: np.ndarray,
    v_t: np.ndarray,
    beta: float,
    alpha: float,
    nu: float,
    literal_step12: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Momentum step on the nested-smoothed objective using the proximal-point
    residual (w - z_hat)/nu as the gradient surrogate.

    Default follows the analysis recursion v <- (1-beta) v + beta (w-z)/nu;
    ``literal_step12`` reproduces the printed variant that applies beta twice.
    """
    g = (w_t - z_hat) / nu
    if literal_step12:
        g = beta * g
    v_new = (1.0 - beta) * v_t + beta * g
    return w_t - alpha * v_new, v_new


def run_alexr2(
    problem: FccoProblem,
    config: Alexr2Config,
    rng: SeededRng,
    callback: Callable[[TraceRow, np.ndarray], bool | None] | None = None,
) -> SolverResult:
    """Outer momentum loop over inner proximal-point solves."""
    config.validate(problem)
    lam = config.lam
    w = np.array(config.w0, dtype=float) if config.w0 is not None else problem.initial_point()
    ensure_finite(w, "initial point")
    v = np.zeros(problem.d)
    s = np.zeros(problem.d) if config.update_kind == "adam" else None
    u = None
    calls = 0
    draws = 0

    trace = SolverTrace()
    t_start = time.perf_counter()

    def wall():
        return (time.perf_counter() - t_start) * 1e3 if config.record_wall_time else None

    cadence = config.metric_every or max(1, config.iters // 200)
    trace.append(_metric_row(problem, w, lam, 0, calls, draws, wall()))

    iters = config.iters
    if iters == 0:
        return SolverResult(trace, w.copy(), w.copy(), 0, state={'u': u, 'v': v})
    tau = int(rng.spawn(_TAU).gen.integers(1, iters + 1))
    w_sampled = w.copy()
    sampled_iteration = 0
    stopped = False

    for t in range(iters):
        if u is None or not config.warm_start_dual:
            u = _cold_start_trackers(problem, w, config.b2, rng, t)
            calls += problem.n
        k_t = config.schedule(t)
        try:
            z_hat, u, inner_calls = run_inner_alexr(
                problem, w, config, rng.spawn(_COMPONENTS, t), u_init=u, k=k_t
            )
        except NonFiniteError as exc:
            raise SolverAbort(str(exc), trace) from exc
        calls += inner_calls
        draws += k_t * config.b1

        if config.update_kind == "adam":
            g = (w - z_hat) / config.nu
            if config.literal_step12:
                g = config.beta * g
            v, w, s = adam_step(
                v, w, s, g, config.beta, config.adam_beta2,
                config.adam_eps, config.alpha, config.adam_clip,
            )
        else:
            w, v = outer_momentum_step(
                w, z_hat, v, config.beta, config.alpha, config.nu,
                config.literal_step12,
            )
        try:
            ensure_finite(w, "outer iterate")
        except NonFiniteError as exc:
            raise SolverAbort(str(exc), trace) from exc

        it = t + 1
        if it == tau:
            w_sampled = w.copy()
            sampled_iteration = it
        if it % cadence == 0 or it == iters:
            row = _metric_row(problem, w, lam, it, calls, draws, wall())
            trace.append(row)
            if config.stop_grad_norm is not None and row.grad_norm is not None:
                if row.grad_norm <= config.stop_grad_norm:
                    stopped = True
            if callback is not None and callback(row, w):
                stopped = True
            if stopped:
                break

    if sampled_iteration == 0:
        w_sampled = w.copy()
        sampled_iteration = trace.last().iteration
    return SolverResult(trace, w.copy(), w_sampled, sampled_iteration, stopped, state={'u': u, 'v': v})


def refine_with_alexr(
    problem: FccoProblem,
    w_tau: np.ndarray,
    config: Alexr2Config,
    k: int,
    rng: SeededRng,
    lam_refine: float | None = None,
) -> np.ndarray:
    """One long inner run from w_tau; the output approximates the proximal
    point of the smoothed objective and serves as the near-stationary
    certificate point.  Requires smooth inner maps."""
    if problem.smoothness_inner is None:
        raise UnsupportedOperationError("refinement requires smooth inner maps")
    if k == 0:
        return np.array(w_tau, dtype=float)
    cfg = config
    if lam_refine is not None and lam_refine != config.lam:
        from dataclasses import replace

        cfg = replace(config, lam=lam_refine)
    z_hat, _, _ = run_inner_alexr(problem, np.asarray(w_tau, float), cfg, rng, k=k)
    return z_hat
