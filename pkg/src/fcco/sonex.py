"""Single-loop stochastic momentum solver on the outer-smoothed objective.

Per iteration: sample a component subset and one data batch per selected
component, refresh the per-component inner-value trackers with a
variance-reduced correction (the correction re-evaluates the same batch at the
previous iterate), aggregate vector-Jacobian products through the envelope
gradients of the trackers, then take a momentum, Adam-type, or plain-SGD
parameter step.  All metric evaluation happens on a configurable cadence
through the exact oracles.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace
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
    ensure_finite,
    sample_components,
    sample_data_batch,
)
from .metrics import stationarity_report, eval_exact
from .smoothing import moreau_grad

__all__ = [
    "SonexConfig",
    "SonexState",
    "msvr_correction_default",
    "msvr_update",
    "init_trackers",
    "gradient_estimate",
    "momentum_step",
    "adam_step",
    "run_sonex",
    "theory_hyperparams",
]

# stream purposes for child rngs
_INIT, _COMPONENTS, _BATCH, _ADDITIVE, _TAU = 0, 1, 2, 3, 4

UPDATE_KINDS = ("momentum", "adam", "sgd_baseline")


@dataclass
class SonexConfig:
    lam: float
    eta: float
    beta: float = 0.1
    gamma: float = 0.1
    gamma_prime: float | None = None  # None = variance-reduced default
    b1: int = 1
    b2: int = 1
    iters: int = 100
    update_kind: str = "momentum"
    adam_beta2: float = 0.01  # weight on the squared gradient in the EMA
    adam_eps: float = 1e-8
    adam_clip: tuple[float, float] | None = None
    metric_every: int | None = None
    stop_grad_norm: float | None = None
    record_wall_time: bool = False
    w0: np.ndarray | None = None

    def resolved_gamma_prime(self, n: int) -> float:
        if self.gamma_prime is None:
            return msvr_correction_default(n, self.b1, self.gamma)
        return float(self.gamma_prime)

    def validate(self, n: int) -> None:
        if self.lam <= 0:
            raise ConfigError("lam must be positive")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if not 0 < self.beta <= 1:
            raise ConfigError("beta must lie in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.update_kind not in UPDATE_KINDS:
            raise ConfigError(f"update_kind must be one of {UPDATE_KINDS}")
        if not 1 <= self.b1 <= n:
            raise ConfigError(f"b1 must lie in [1, n={n}]")
        if self.iters < 0:
            raise ConfigError("iters must be nonnegative")
        gp = self.resolved_gamma_prime(n)
        if gp < 0:
            raise ConfigError("gamma_prime must be nonnegative")
        if gp > 0 and self.gamma > 0.5:
            raise ConfigError("gamma must be <= 1/2 when the tracker correction is active")
        if self.beta > 2.0 / 7.0:
            warnings.warn(
                "beta > 2/7 leaves the analyzed regime of the momentum recursion",
                stacklevel=2,
            )
        if self.adam_clip is not None:
            lo, hi = self.adam_clip
            if not 0 < lo <= hi:
                raise ConfigError("adam_clip bounds must satisfy 0 < low <= high")
            if not 0 < self.adam_beta2 < 1:
                raise ConfigError("adam_beta2 must lie in (0, 1)")


@dataclass
class SonexState:
    w: np.ndarray
    u: np.ndarray  # (n, d1) inner-value trackers
    v: np.ndarray  # momentum buffer
    prev_w: np.ndarray
    s: np.ndarray | None = None  # Adam second-moment buffer


def msvr_correction_default(n: int, b1: int, gamma: float) -> float:
    """Variance-reduction coefficient 1 - gamma + (n - b1)/(b1 (1 - gamma))."""
    if gamma >= 1:
        raise ConfigError("gamma must be < 1 for the correction default")
    if not 1 <= b1 <= n:
        raise ConfigError("need 1 <= b1 <= n")
    return 1.0 - gamma + (n - b1) / (b1 * (1.0 - gamma))


def msvr_update(
    u_i: np.ndarray,
    g_new: np.ndarray,
    g_prev: np.ndarray,
    gamma: float,
    gamma_prime: float,
) -> np.ndarray:
    """(1-gamma) u + gamma g_new + gamma_prime (g_new - g_prev); both inner
    values must come from the same data batch at the current and previous
    iterate."""
    return (1.0 - gamma) * u_i + gamma * g_new + gamma_prime * (g_new - g_prev)


def _draw_batch(rng_parent: SeededRng, ids: tuple, population: int, b2: int) -> np.ndarray:
    # a full-population "draw" is forced, so skip generator construction
    if b2 == population:
        return np.arange(population)
    return sample_data_batch(rng_parent.spawn(*ids), population, b2)


def init_trackers(
    problem: FccoProblem, w0: np.ndarray, b2: int, rng: SeededRng
) -> np.ndarray:
    """One batch estimate of each inner value at the initial point."""
    u = np.empty((problem.n, problem.d1))
    for i in range(problem.n):
        batch = _draw_batch(rng, (_INIT, i), problem.batch_domain(i), b2)
        u[i] = problem.inner_value(i, w0, batch)
    return u


def gradient_estimate(
    problem: FccoProblem,
    state: SonexState,
    b1_set: np.ndarray,
    batches: dict,
    lam: float,
    outers=None,
    additive_batch: np.ndarray | None = None,
) -> np.ndarray:
    """Average of the vector-Jacobian products through the tracker envelope
    gradients over the sampled components, plus the additive-term gradient."""
    outers = problem.outers if outers is None else outers
    acc = np.zeros(problem.d)
    for i in b1_set:
        y = moreau_grad(outers[i], lam, state.u[i])
        acc += problem.inner_vjp(int(i), state.w, batches[int(i)], y)
    acc /= len(b1_set)
    if problem.additive is not None:
        if additive_batch is None:
            additive_batch = np.arange(problem.additive.population)
        acc = acc + problem.additive.grad(state.w, additive_batch)
    return acc


def momentum_step(
    v: np.ndarray, w: np.ndarray, grad: np.ndarray, beta: float, eta: float
) -> tuple[np.ndarray, np.ndarray]:
    """v <- (1-beta) v + beta grad;  w <- w - eta v."""
    v_new = (1.0 - beta) * v + beta * grad
    return v_new, w - eta * v_new


def adam_step(
    v: np.ndarray,
    w: np.ndarray,
    s: np.ndarray,
    grad: np.ndarray,
    beta: float,
    beta2: float,
    eps: float,
    eta: float,
    clip: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Adam-type update with elementwise rates eta/(sqrt(s)+eps).

    The rate uses the pre-update second moment; ``clip`` clamps every
    effective rate into [eta*low, eta*high], enforcing the bounded-rate
    condition the adaptive analysis assumes instead of assuming it.
    """
    v_new = (1.0 - beta) * v + beta * grad
    rate = eta / (np.sqrt(s) + eps)
    if clip is not None:
        rate = np.clip(rate, eta * clip[0], eta * clip[1])
        if __debug__:
            move = np.abs(rate * v_new)
            assert np.all(move <= eta * clip[1] * np.abs(v_new) + 1e-300)
            assert np.all(move >= eta * clip[0] * np.abs(v_new) - 1e-300)
    w_new = w - rate * v_new
    s_new = (1.0 - beta2) * s + beta2 * grad * grad
    return v_new, w_new, s_new


def theory_hyperparams(
    eps: float,
    n: int,
    b1: int,
    b2: int,
    outer_lipschitz: float,
    scale: float = 1.0,
    iters: int = 1000,
    **overrides,
) -> SonexConfig:
    """Config from the analysis scalings at target accuracy ``eps``:
    lam = eps/outer_lipschitz, beta ~ min(b1,b2) eps^2, gamma ~ b2 eps^4,
    eta ~ b1 sqrt(b2) eps^3 / n, with the variance-reduced correction default.

    The analysis fixes orders, not constants; ``scale`` multiplies beta,
    gamma, eta jointly.  beta and gamma are clamped into their analyzed
    ranges (0, 2/7] and (0, 1/2].
    """
    if eps <= 0 or scale <= 0:
        raise ConfigError("eps and scale must be positive")
    lam = eps / outer_lipschitz
    beta = min(scale * min(b1, b2) * eps**2, 2.0 / 7.0)
    gamma = min(scale * b2 * eps**4, 0.5)
    eta = scale * b1 * np.sqrt(b2) * eps**3 / n
    cfg = SonexConfig(
        lam=lam, eta=eta, beta=beta, gamma=gamma, gamma_prime=None,
        b1=b1, b2=b2, iters=iters,
    )
    return replace(cfg, **overrides) if overrides else cfg


def _metric_row(
    problem, w, lam, iteration, calls, draws, wall_ms
) -> TraceRow:
    f_val = f_lam = grad_norm = t_res = g_res = viol = None
    if problem.has_exact_oracles():
        f_val, f_lam = eval_exact(problem, w, lam)
        rep = stationarity_report(problem, w, lam)
        grad_norm = rep.grad_F_lambda_norm
        t_res = rep.approx_t_residual
        g_res = rep.approx_grad_residual
        if problem.is_penalty:
            viol = max(
                float(problem.inner_exact(i, w)[0]) for i in range(problem.n)
            )
    return TraceRow(
        iteration=iteration,
        inner_oracle_calls=calls,
        component_draws=draws,
        f_value=f_val,
        f_lambda_value=f_lam,
        grad_norm=grad_norm,
        stat_t_residual=t_res,
        stat_grad_residual=g_res,
        max_violation=viol,
        wall_ms=wall_ms,
    )


def run_sonex(
    problem: FccoProblem,
    config: SonexConfig,
    rng: SeededRng,
    callback: Callable[[TraceRow, np.ndarray], bool | None] | None = None,
) -> SolverResult:
    """Run the single-loop solver for config.iters iterations.

    Returns the trace, the final iterate, and one iterate sampled uniformly
    from {1..T} (the output the convergence guarantee concerns).  A non-finite
    gradient or iterate raises SolverAbort carrying the partial trace.
    ``callback(row, w)`` runs at every metric row; a truthy return stops the
    run early, as does ``config.stop_grad_norm``.
    """
    config.validate(problem.n)
    n = problem.n
    lam = config.lam
    gamma_prime = config.resolved_gamma_prime(n)
    # the plain-SGD comparator shares the whole code path: it is the momentum
    # update with full mixing
    beta = 1.0 if config.update_kind == "sgd_baseline" else config.beta

    w = np.array(config.w0, dtype=float) if config.w0 is not None else problem.initial_point()
    ensure_finite(w, "initial point")
    state = SonexState(
        w=w,
        u=init_trackers(problem, w, config.b2, rng),
        v=np.zeros(problem.d),
        prev_w=w.copy(),
        s=np.zeros(problem.d) if config.update_kind == "adam" else None,
    )
    calls = n  # tracker initialization
    draws = 0

    trace = SolverTrace()
    t0 = time.perf_counter()

    def wall():
        return (time.perf_counter() - t0) * 1e3 if config.record_wall_time else None

    cadence = config.metric_every or max(1, config.iters // 200)
    trace.append(_metric_row(problem, state.w, lam, 0, calls, draws, wall()))

    iters = config.iters
    if iters == 0:
        return SolverResult(trace, state.w.copy(), state.w.copy(), 0, state=state)
    tau = int(rng.spawn(_TAU).gen.integers(1, iters + 1))
    w_sampled = state.w.copy()
    sampled_iteration = 0
    stopped = False

    all_components = np.arange(n)
    for t in range(iters):
        if config.b1 == n:
            b1_set = all_components
        else:
            b1_set = sample_components(rng.spawn(_COMPONENTS, t), n, config.b1)
        batches: dict[int, np.ndarray] = {}
        for i in b1_set:
            i = int(i)
            batches[i] = _draw_batch(
                rng, (_BATCH, t, i), problem.batch_domain(i), config.b2
            )
            g_new = problem.inner_value(i, state.w, batches[i])
            calls += 1
            if gamma_prime != 0.0:
                g_prev = problem.inner_value(i, state.prev_w, batches[i])
                calls += 1
            else:
                g_prev = g_new
            state.u[i] = msvr_update(state.u[i], g_new, g_prev, config.gamma, gamma_prime)
        additive_batch = None
        if problem.additive is not None:
            pop0 = problem.additive.population
            additive_batch = _draw_batch(rng, (_ADDITIVE, t), pop0, min(config.b2, pop0))
        grad = gradient_estimate(
            problem, state, b1_set, batches, lam, additive_batch=additive_batch
        )
        calls += len(b1_set) + (1 if problem.additive is not None else 0)
        draws += len(b1_set)
        try:
            ensure_finite(grad, "gradient estimate")
        except NonFiniteError as exc:
            raise SolverAbort(str(exc), trace) from exc

        state.prev_w = state.w
        if config.update_kind == "adam":
            state.v, state.w, state.s = adam_step(
                state.v, state.w, state.s, grad, beta,
                config.adam_beta2, config.adam_eps, config.eta, config.adam_clip,
            )
        else:
            state.v, state.w = momentum_step(state.v, state.w, grad, beta, config.eta)
        try:
            ensure_finite(state.w, "iterate")
        except NonFiniteError as exc:
            raise SolverAbort(str(exc), trace) from exc

        it = t + 1
        if it == tau:
            w_sampled = state.w.copy()
            sampled_iteration = it
        if it % cadence == 0 or it == iters:
            row = _metric_row(problem, state.w, lam, it, calls, draws, wall())
            trace.append(row)
            if config.stop_grad_norm is not None and row.grad_norm is not None:
                if row.grad_norm <= config.stop_grad_norm:
                    stopped = True
            if callback is not None and callback(row, state.w):
                stopped = True
            if stopped:
                break

    if sampled_iteration == 0:
        # run stopped before the drawn output iteration; fall back to the
        # final iterate
        w_sampled = state.w.copy()
        sampled_iteration = trace.last().iteration
    return SolverResult(trace, state.w.copy(), w_sampled, sampled_iteration, stopped, state=state)
