"""Scenario configuration and the run, sweep and compare drivers.

A scenario is a JSON object::

    {
      "problem":  {"generator": "resource_allocation", "n_agents": 10, "seed": 1}
                  | {"path": "problem.json"} | {"inline": {...problem JSON...}},
      "schedule": {"generator": "ring_partition", "window": 4, "lazy_weight": 0.5}
                  | {"path": "schedule.json"} | {"inline": {...schedule JSON...}},
      "window": 4,
      "algorithm": "bdpp",
      "params": {"bdpp": {"C": 0.27}, "dpp": {"V": null}, "dual_subgrad": {"step_scale": 4.5}},
      "horizon": 10000,
      "seed": 1,
      "stride": 10,
      "dense_until": 1000,
      "out": "out"
    }

Relative paths are resolved against the config file's directory.  ``C``
may be the string ``"C0"`` to use the feasibility threshold from the
bounds calculator.  ``window`` is the declared connectivity window and
defaults to the schedule's own.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from . import baselines, core
from .analysis import OracleResult, bounds_for, kkt_oracle
from .errors import ValidationError
from .network import (
    GraphSchedule,
    load_schedule,
    make_ring_partition_schedule,
    mixing_issues,
    schedule_from_dict,
    verify_b_connectivity,
)
from .problem import CoupledProblem, load_problem, problem_from_dict, random_resource_allocation

DEFAULT_PARAMS = {"bdpp": {"C": 0.27}, "dpp": {"V": None}, "dual_subgrad": {"step_scale": 4.5}}


@dataclass
class ScenarioConfig:
    problem: dict
    schedule: dict
    algorithm: str = "bdpp"
    params: dict = field(default_factory=dict)
    horizon: int = 10_000
    seed: int = 1
    stride: int = 10
    dense_until: int = 1000
    window: int | None = None
    out: str = "out"
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}; known: {sorted(ALGORITHMS)}")
        for section, name in ((self.problem, "problem"), (self.schedule, "schedule")):
            path = section.get("path")
            if path is not None and not self.resolve(path).is_file():
                raise ValidationError(f"{name} file not found: {self.resolve(path)}")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        if "problem" not in data or "schedule" not in data:
            raise ValidationError("config needs 'problem' and 'schedule' sections")
        return cls(**data, base_dir=Path(base_dir))

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ValidationError(f"config not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def params_for(self, algorithm: str) -> dict:
        merged = dict(DEFAULT_PARAMS.get(algorithm, {}))
        merged.update(self.params.get(algorithm, {}))
        return merged

    def policy(self) -> core.RecordPolicy:
        return core.RecordPolicy(stride=self.stride, dense_until=self.dense_until)


def build_problem(cfg: ScenarioConfig) -> CoupledProblem:
    src = cfg.problem
    if "path" in src:
        return load_problem(cfg.resolve(src["path"]))
    if "inline" in src:
        return problem_from_dict(src["inline"])
    gen = src.get("generator")
    if gen != "resource_allocation":
        raise ValidationError(f"unknown problem generator {gen!r}")
    kwargs = {k: v for k, v in src.items() if k != "generator"}
    kwargs.setdefault("seed", cfg.seed)
    for key in ("a_range", "d_range", "capacity_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    try:
        return random_resource_allocation(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"bad problem generator arguments: {exc}") from None


def build_schedule(cfg: ScenarioConfig, n_agents: int) -> GraphSchedule:
    src = cfg.schedule
    if "path" in src:
        sched = load_schedule(cfg.resolve(src["path"]))
    elif "inline" in src:
        sched = schedule_from_dict(src["inline"])
    elif src.get("generator") == "ring_partition":
        sched = make_ring_partition_schedule(
            int(src.get("n_agents", n_agents)), int(src.get("window", 1)), float(src.get("lazy_weight", 0.5))
        )
    else:
        raise ValidationError(f"unknown schedule generator {src.get('generator')!r}")
    if sched.n_agents != n_agents:
        raise ValidationError(f"schedule has {sched.n_agents} agents, problem has {n_agents}")
    return sched


def validate_schedule(schedule: GraphSchedule, window: int) -> list[str]:
    """Every connectivity and mixing problem found; empty means valid."""
    issues = mixing_issues(schedule)
    if not verify_b_connectivity(schedule, window):
        issues.append(f"union of rounds is not connected over every aligned window of {window}")
    return issues


@dataclass
class Scenario:
    """A config with its problem, schedule and optimum materialised."""

    config: ScenarioConfig
    problem: CoupledProblem
    schedule: GraphSchedule
    window: int
    oracle: OracleResult

    @classmethod
    def prepare(cls, cfg: ScenarioConfig) -> "Scenario":
        problem = build_problem(cfg)
        schedule = build_schedule(cfg, problem.n_agents)
        window = cfg.window or schedule.window
        issues = validate_schedule(schedule, window)
        if issues:
            raise ValidationError("schedule rejected:\n  " + "\n  ".join(issues))
        return cls(cfg, problem, schedule, window, kkt_oracle(problem))

    def resolve_c(self, value) -> float:
        if isinstance(value, str):
            if value.strip().upper() != "C0":
                raise ValidationError(f"buffer constant must be a number or 'C0', got {value!r}")
            return bounds_for(self.problem, self.schedule, 0.0, self.window).C0
        c = float(value)
        if not c >= 0:
            raise ValidationError(f"buffer constant must be >= 0, got {value}")
        return c


# -- algorithm registry --------------------------------------------------------

Runner = Callable[..., core.RunResult]


def _run_bdpp(problem, schedule, params, horizon, seed, policy, f_star):
    return core.run(
        problem, schedule, core.ParamSchedule.default(float(params["C"])), horizon,
        seed=seed, x0=params.get("x0"), policy=policy, f_star=f_star,
    )


def _run_dpp(problem, schedule, params, horizon, seed, policy, f_star):
    return baselines.run_dpp(problem, horizon, v=params.get("V"), policy=policy, f_star=f_star)


def _run_dual_subgrad(problem, schedule, params, horizon, seed, policy, f_star):
    return baselines.run_dual_subgrad(
        problem, schedule, horizon, policy=policy, f_star=f_star, step_scale=float(params.get("step_scale", 4.5))
    )


ALGORITHMS: dict[str, Runner] = {"bdpp": _run_bdpp, "dpp": _run_dpp, "dual_subgrad": _run_dual_subgrad}


def register(name: str, runner: Runner) -> None:
    """Make another algorithm available to configs and the comparison driver.

    ``runner(problem, schedule, params, horizon, seed, policy, f_star)``
    must return a :class:`~bdpp.core.RunResult`.
    """
    ALGORITHMS[name] = runner


def run_algorithm(scn: Scenario, algorithm: str, params: dict | None = None, horizon=None, seed=None):
    if algorithm not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algorithm!r}")
    cfg = scn.config
    params = dict(cfg.params_for(algorithm) if params is None else params)
    if "C" in params:
        params["C"] = scn.resolve_c(params["C"])
    return ALGORITHMS[algorithm](
        scn.problem, scn.schedule, params, horizon or cfg.horizon,
        cfg.seed if seed is None else seed, cfg.policy(), scn.oracle.f_star,
    )


def _job(args):
    scn, algorithm, params = args
    return run_algorithm(scn, algorithm, params)


def _map(jobs: list, n_jobs: int) -> list[core.RunResult]:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_job, jobs))


# -- sweep / compare -----------------------------------------------------------


def count_inversions(values: list[float], increasing: bool) -> int:
    """Number of pairs ``i < j`` out of the requested order."""
    bad = 0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if (values[j] < values[i]) if increasing else (values[j] > values[i]):
                bad += 1
    return bad


def tradeoff_report(c_values: list[float], runs: list[core.RunResult], tolerated: int = 1) -> dict:
    """Whether final objective errors rise and max violations fall with ``C``.

    Runs are compared in ascending ``C``; up to ``tolerated`` out-of-order
    pairs per series still count as consistent.
    """
    order = sorted(range(len(c_values)), key=lambda k: c_values[k])
    errs = [runs[k].records[-1].objective_error for k in order]
    viols = [float(runs[k].records[-1].violation.max()) for k in order]
    inv_err = count_inversions(errs, increasing=True)
    inv_viol = count_inversions(viols, increasing=False)
    return {
        "t": runs[0].records[-1].t,
        "C": [c_values[k] for k in order],
        "objective_error": errs,
        "max_violation": viols,
        "objective_error_inversions": inv_err,
        "violation_inversions": inv_viol,
        "consistent": inv_err <= tolerated and inv_viol <= tolerated,
    }


@dataclass
class SweepOutcome:
    c_values: list[float]
    runs: list[core.RunResult]
    report: dict
    feasibility_checks: list[dict]


def sweep(scn: Scenario, c_values: list, n_jobs: int = 1) -> SweepOutcome:
    if len(c_values) < 2:
        raise ValidationError("a sweep needs at least two values of C")
    resolved = [scn.resolve_c(c) for c in c_values]
    base = scn.config.params_for("bdpp")
    runs = _map([(scn, "bdpp", {**base, "C": c}) for c in resolved], n_jobs)
    checks = []
    for raw, c, result in zip(c_values, resolved, runs):
        if not (isinstance(raw, str) and raw.strip().upper() == "C0"):
            continue
        b = bounds_for(scn.problem, scn.schedule, c, scn.window)
        entry = {"C": c, "t1": b.t1 if b.t1_finite else None, "first_feasible_t": result.first_feasible_t,
                 "last_infeasible_t": result.last_infeasible_t}
        if b.vacuous or b.t1 > result.horizon:
            entry["status"] = "skipped: t1 beyond the horizon or vacuous"
        else:
            entry["status"] = "pass" if result.last_infeasible_t < b.t1 else "fail"
        checks.append(entry)
    return SweepOutcome(resolved, runs, tradeoff_report(resolved, runs), checks)


def compare(scn: Scenario, algorithms: list[str], n_jobs: int = 1) -> list[core.RunResult]:
    if not algorithms:
        raise ValidationError("compare needs at least one algorithm")
    unknown = [a for a in algorithms if a not in ALGORITHMS]
    if unknown:
        raise ValidationError(f"unknown algorithms: {unknown}")
    return _map([(scn, a, None) for a in algorithms], n_jobs)


def override(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    """Copy of ``cfg`` with the non-None ``changes`` applied."""
    return replace(cfg, **{k: v for k, v in changes.items() if v is not None})
