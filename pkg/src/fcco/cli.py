"""Batch experiment driver: ``fcco run|gradcheck|bench``.

Configs are JSON (the only input besides the seed inside them); runs write
``trace.csv`` with a fixed header plus a ``report.json`` summary.  Identical
config+seed reproduces trace.csv byte-for-byte (wall time is only recorded
when asked for, since it would break that contract).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .alexr2 import Alexr2Config, run_alexr2
from .core import ConfigError, OracleError, SeededRng, SolverAbort
from .metrics import (
    brute_force_prox,
    eval_exact,
    finite_difference_gradient,
    grad_F_lambda_exact,
    stationarity_report,
)
from .penalty import build_penalty_problem, kkt_report, regularity_check
from .problems import (
    GdroCvarSpec,
    SyntheticFccoSpec,
    make_gdro_cvar,
    make_roc_fairness_fcco,
    make_roc_fairness_toy,
    make_synthetic_fcco,
    make_toy_constrained,
)
from .sonex import SonexConfig, run_sonex

__all__ = ["RunConfig", "cmd_run", "cmd_gradcheck", "cmd_bench", "main"]

_RUN_KEYS = {"seed", "problem", "solver", "metric_every", "record_wall_time", "out"}


@dataclasses.dataclass
class RunConfig:
    seed: int
    problem: dict
    solver: dict
    metric_every: int | None = None
    record_wall_time: bool = False
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        unknown = set(raw) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("seed", "problem", "solver"):
            if key not in raw:
                raise ConfigError(f"config missing required key {key!r}")
        return cls(
            seed=int(raw["seed"]),
            problem=dict(raw["problem"]),
            solver=dict(raw["solver"]),
            metric_every=raw.get("metric_every"),
            record_wall_time=bool(raw.get("record_wall_time", False)),
            out=raw.get("out"),
        )

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "problem": self.problem, "solver": self.solver}
        if self.metric_every is not None:
            d["metric_every"] = self.metric_every
        if self.record_wall_time:
            d["record_wall_time"] = True
        if self.out is not None:
            d["out"] = self.out
        return d


def _spec_fields(cls, raw: dict, skip=()):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names - set(skip)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return {k: v for k, v in raw.items() if k in names}


def build_problem(problem_cfg: dict):
    """Returns (FccoProblem, extras); extras holds the constrained-problem
    view and penalty parameters when applicable."""
    cfg = dict(problem_cfg)
    kind = cfg.pop("kind", None)
    extras: dict = {}
    if kind == "synthetic":
        spec = SyntheticFccoSpec(**_spec_fields(SyntheticFccoSpec, cfg))
        return make_synthetic_fcco(spec), extras
    if kind == "gdro_cvar":
        spec = GdroCvarSpec(**_spec_fields(GdroCvarSpec, cfg))
        return make_gdro_cvar(spec), extras
    if kind == "toy_constrained":
        slope = float(cfg.pop("penalty_slope", 10.0))
        which = cfg.pop("which", "qp_box")
        cp = make_toy_constrained(which, **cfg)
        extras = {"constrained": cp, "penalty_slope": slope}
        return build_penalty_problem(cp, slope), extras
    if kind == "roc_fairness":
        slope = float(cfg.pop("penalty_slope", 10.0))
        cp = make_roc_fairness_toy(**cfg)
        extras = {"constrained": cp, "penalty_slope": slope}
        return build_penalty_problem(cp, slope), extras
    if kind == "roc_fairness_fcco":
        return make_roc_fairness_fcco(**cfg), extras
    raise ConfigError(f"unknown problem kind {kind!r}")


def _solver_config(solver_cfg: dict, run_cfg: RunConfig):
    cfg = dict(solver_cfg)
    kind = cfg.pop("kind", None)
    if kind not in ("sonex", "sgd_baseline", "alexr2"):
        raise ConfigError(f"unknown solver kind {kind!r}")
    if "adam_clip" in cfg and cfg["adam_clip"] is not None:
        cfg["adam_clip"] = tuple(float(x) for x in cfg["adam_clip"])
    if "w0" in cfg and cfg["w0"] is not None:
        cfg["w0"] = np.asarray(cfg["w0"], dtype=float)
    cfg.setdefault("metric_every", run_cfg.metric_every)
    cfg["record_wall_time"] = run_cfg.record_wall_time
    if kind == "alexr2":
        return kind, Alexr2Config(**_spec_fields(Alexr2Config, cfg))
    if kind == "sgd_baseline":
        cfg["update_kind"] = "sgd_baseline"
    else:
        cfg.setdefault("update_kind", "momentum")
    return kind, SonexConfig(**_spec_fields(SonexConfig, cfg))


def _load_config(path) -> RunConfig:
    with open(path) as f:
        raw = json.load(f)
    return RunConfig.from_dict(raw)


def _write_outputs(out_dir: Path, run_cfg, problem, extras, kind, solver_cfg, result, wall_s):
    out_dir.mkdir(parents=True, exist_ok=True)
    result.trace.to_csv(out_dir / "trace.csv")
    last = result.trace.last()
    report = {
        "config": run_cfg.to_dict(),
        "solver": kind,
        "iterations": last.iteration,
        "inner_oracle_calls": last.inner_oracle_calls,
        "component_draws": last.component_draws,
        "final": {
            "F": last.f_value,
            "F_lambda": last.f_lambda_value,
            "grad_norm": last.grad_norm,
            "stat_t_residual": last.stat_t_residual,
            "stat_grad_residual": last.stat_grad_residual,
            "max_violation": last.max_violation,
        },
        "sampled_iteration": result.sampled_iteration,
        "stopped_early": result.stopped_early,
        "wall_seconds": wall_s,
    }
    lam = solver_cfg.lam
    if problem.has_exact_oracles():
        rep = stationarity_report(problem, result.w_final, lam, with_gram=True)
        report["gram_min_eig"] = rep.gram_min_eig
        report["gram_rank_deficient"] = rep.gram_rank_deficient
    if "constrained" in extras:
        cp = extras["constrained"]
        slope = extras["penalty_slope"]
        kr = kkt_report(cp, result.w_final, slope, lam)
        reg = regularity_check(cp, result.w_final)
        report["kkt"] = {
            "stationarity": kr.stationarity,
            "max_violation": kr.max_violation,
            "complementarity": kr.complementarity,
            "multipliers": kr.multipliers.tolist(),
            "regularity_sigma_min": reg.sigma_min,
            "regularity_rank_deficient": reg.rank_deficient,
        }
    with open(out_dir / "report.json", "w") as f:
        json.dump(report, f, indent=2)
    return report


def cmd_run(config_path, out_dir=None) -> int:
    """Run one config; writes <out>/trace.csv and <out>/report.json."""
    try:
        run_cfg = _load_config(config_path)
        problem, extras = build_problem(run_cfg.problem)
        kind, solver_cfg = _solver_config(run_cfg.solver, run_cfg)
    except (json.JSONDecodeError, OSError, ConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = Path(out_dir or run_cfg.out or (str(Path(config_path).with_suffix("")) + "_out"))
    rng = SeededRng(run_cfg.seed)
    t0 = time.perf_counter()
    try:
        if kind == "alexr2":
            result = run_alexr2(problem, solver_cfg, rng)
        else:
            result = run_sonex(problem, solver_cfg, rng)
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        if exc.trace is not None:
            out.mkdir(parents=True, exist_ok=True)
            exc.trace.to_csv(out / "trace.csv")
        return 2
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3
    wall_s = time.perf_counter() - t0
    try:
        _write_outputs(out, run_cfg, problem, extras, kind, solver_cfg, result, wall_s)
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {out / 'trace.csv'}")
    return 0


def cmd_gradcheck(config_path) -> int:
    """Finite-difference and prox-oracle checks on the configured problem.

    Exit 0 iff the worst relative error is <= 1e-4, else 2 with a per-check
    breakdown.
    """
    try:
        run_cfg = _load_config(config_path)
        problem, _ = build_problem(run_cfg.problem)
        _, solver_cfg = _solver_config(run_cfg.solver, run_cfg)
    except (json.JSONDecodeError, OSError, ConfigError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    lam = solver_cfg.lam
    gen = SeededRng(run_cfg.seed, 999).gen
    worst = 0.0
    if not problem.has_exact_oracles():
        print("gradcheck error: problem lacks exact oracles", file=sys.stderr)
        return 3
    for trial in range(3):
        w = problem.initial_point() + 0.5 * gen.normal(size=problem.d)
        exact = grad_F_lambda_exact(problem, w, lam)
        fd = finite_difference_gradient(lambda v: eval_exact(problem, v, lam)[1], w, h=1e-6)
        err = float(np.linalg.norm(fd - exact) / max(1.0, np.linalg.norm(exact)))
        print(f"grad check {trial}: rel err {err:.3e}")
        worst = max(worst, err)
    seen = set()
    for outer in problem.outers:
        key = (type(outer).__name__, float(outer.lipschitz))
        if key in seen:
            continue
        seen.add(key)
        err = 0.0
        for _ in range(10):
            t = gen.normal(size=outer.dim) * (2.0 * lam * outer.lipschitz + 1.0)
            lam_trial = float(gen.uniform(1e-3, 1.0))
            closed = outer.prox(lam_trial, t)
            brute = brute_force_prox(outer, lam_trial, t, step=1e-5)
            err = max(err, float(np.max(np.abs(closed - brute))))
        print(f"prox check {key[0]}: max abs err {err:.3e}")
        worst = max(worst, err)
    print(f"max error {worst:.3e}")
    if worst <= 1e-4:
        print("gradcheck: pass")
        return 0
    print("gradcheck: FAIL", file=sys.stderr)
    return 2


_BENCH_HEADER = "config,solver,status,final_F,final_F_lambda,final_grad_norm,inner_oracle_calls,component_draws"


def cmd_bench(config_dir) -> int:
    """Run every *.json config in a directory; write a comparison table."""
    config_dir = Path(config_dir)
    if not config_dir.is_dir():
        print(f"not a directory: {config_dir}", file=sys.stderr)
        return 1
    rows = []
    any_failed = False
    for cfg_path in sorted(config_dir.glob("*.json")):
        out = config_dir / f"{cfg_path.stem}_out"
        code = cmd_run(cfg_path, out_dir=out)
        if code == 0:
            with open(out / "report.json") as f:
                rep = json.load(f)
            final = rep["final"]

            def fmt(x):
                return "" if x is None else format(float(x), ".17g")

            rows.append(
                f"{cfg_path.name},{rep['solver']},ok,{fmt(final['F'])},"
                f"{fmt(final['F_lambda'])},{fmt(final['grad_norm'])},"
                f"{rep['inner_oracle_calls']},{rep['component_draws']}"
            )
        else:
            any_failed = True
            rows.append(f"{cfg_path.name},,error:{code},,,,,")
    table = "\n".join([_BENCH_HEADER] + rows) + "\n"
    summary_path = config_dir / "bench_summary.csv"
    summary_path.write_text(table)
    sys.stdout.write(table)
    return 2 if any_failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fcco", description="compositional-optimization benchmark driver"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_grad = sub.add_parser("gradcheck", help="oracle checks for a config")
    p_grad.add_argument("config")
    p_bench = sub.add_parser("bench", help="run every config in a directory")
    p_bench.add_argument("config_dir")
    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "gradcheck":
        return cmd_gradcheck(args.config)
    return cmd_bench(args.config_dir)


if __name__ == "__main__":
    sys.exit(main())
