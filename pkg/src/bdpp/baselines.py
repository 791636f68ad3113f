"""Comparison algorithms: centralized drift-plus-penalty and distributed dual subgradient."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import FeasibilityTracker, IterationRecord, RecordPolicy, RunResult, queue_update
from .local_solver import solve_all
from .errors import InvalidInputError
from .network import GraphSchedule
from .problem import CoupledProblem


@dataclass
class DppState:
    """Stacked primal iterate, the single global queue (p,) and the constant ``V``."""

    x: np.ndarray
    queue: np.ndarray
    v_param: float
    avg_x: np.ndarray
    t: int = 0
    cum_g: np.ndarray | None = None

    @classmethod
    def initial(cls, problem: CoupledProblem, v: float) -> "DppState":
        lay = problem.layout
        x = np.clip(np.zeros(lay.size), lay.lower, lay.upper)
        p = problem.constraint_dim
        return cls(x=x, queue=np.zeros(p), v_param=float(v), avg_x=np.zeros(lay.size), cum_g=np.zeros(p))


def dpp_step(problem: CoupledProblem, state: DppState, v: float | None = None) -> DppState:
    """``x = argmin_X V f(x) + <mu, g(x)>`` then ``mu <- max(mu + g(x), 0)``.

    ``f`` and ``g`` are sums over agents and ``X`` is a product of boxes, so
    the argmin is taken agent by agent.
    """
    v = state.v_param if v is None else v
    if not v > 0:
        raise InvalidInputError("V must be positive")
    lay = problem.layout
    shared = np.broadcast_to(state.queue, (lay.n_agents, lay.p))
    x = solve_all(problem, v, np.ascontiguousarray(shared), 0.0, state.x, state.t)
    g = lay.constraint_values(x).sum(axis=0)
    k = state.t + 1
    return DppState(
        x=x,
        queue=queue_update(state.queue, g, 0.0),
        v_param=v,
        avg_x=state.avg_x + (x - state.avg_x) / k,
        t=k,
        cum_g=state.cum_g + g,
    )


def run_dpp(
    problem: CoupledProblem,
    horizon: int,
    v: float | None = None,
    policy: RecordPolicy | None = None,
    f_star: float | None = None,
) -> RunResult:
    """Centralized DPP with constant ``V`` (default ``sqrt(horizon)``).

    ``lemma1_slack`` in the records holds ``mu_t - sum_{k<=t} g(x_k)``,
    which the queue recursion keeps nonnegative.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    v = math.sqrt(horizon) if v is None else float(v)
    policy = policy or RecordPolicy()
    lay = problem.layout
    state = DppState.initial(problem, v)
    records, feas = [], FeasibilityTracker()
    min_slack = math.inf
    for _ in range(horizon):
        prev = state.queue
        state = dpp_step(problem, state)
        slack = state.queue - state.cum_g
        min_slack = min(min_slack, float(slack.min()))
        viol = lay.constraint_values(state.avg_x).sum(axis=0)
        feas.update(state.t, viol)
        if policy.keep(state.t, horizon):
            obj = float(lay.objective_values(state.avg_x).sum())
            records.append(
                IterationRecord(
                    t=state.t,
                    objective=obj,
                    objective_error=obj - f_star if f_star is not None else math.nan,
                    violation=viol,
                    queue_sum_norm=float(np.linalg.norm(state.queue)),
                    drift=0.5 * float(state.queue @ state.queue) - 0.5 * float(prev @ prev),
                    lemma1_slack=slack,
                )
            )
    return RunResult(
        algorithm="dpp",
        records=records,
        final_state=state,
        horizon=horizon,
        first_feasible_t=feas.first,
        last_infeasible_t=feas.last_bad,
        min_lemma1_slack=min_slack,
        params={"V": v},
    )


@dataclass
class DualSubgradState:
    x: np.ndarray
    dual: np.ndarray
    avg_x: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, problem: CoupledProblem) -> "DualSubgradState":
        lay = problem.layout
        x = np.clip(np.zeros(lay.size), lay.lower, lay.upper)
        return cls(x=x, dual=np.zeros((lay.n_agents, lay.p)), avg_x=np.zeros(lay.size))


def harmonic_step(scale: float = 4.5) -> Callable[[int], float]:
    """``t -> scale / (t + 1)``."""
    return lambda t: scale / (t + 1)


def dual_subgrad_step(
    problem: CoupledProblem,
    schedule: GraphSchedule,
    state: DualSubgradState,
    t: int,
    step_fn: Callable[[int], float],
) -> DualSubgradState:
    """Mix duals, take the plain local argmin, then projected dual ascent.

    A baseline in the spirit of consensus-based dual subgradient methods,
    not a replication of any particular published variant.
    """
    alpha = step_fn(t)
    if not alpha > 0:
        raise InvalidInputError(f"step size must be positive, got {alpha} at t={t}")
    lay = problem.layout
    lam_hat = schedule.round_at(t).mixing @ state.dual
    x = solve_all(problem, 1.0, lam_hat, 0.0, state.x, t)
    g = lay.constraint_values(x)
    k = state.t + 1
    return DualSubgradState(
        x=x,
        dual=np.maximum(lam_hat + alpha * g, 0.0),
        avg_x=state.avg_x + (x - state.avg_x) / k,
        t=k,
    )


def run_dual_subgrad(
    problem: CoupledProblem,
    schedule: GraphSchedule,
    horizon: int,
    step_fn: Callable[[int], float] | None = None,
    policy: RecordPolicy | None = None,
    f_star: float | None = None,
    step_scale: float = 4.5,
) -> RunResult:
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    step_fn = step_fn or harmonic_step(step_scale)
    policy = policy or RecordPolicy()
    lay = problem.layout
    state = DualSubgradState.initial(problem)
    records, feas = [], FeasibilityTracker()
    for t in range(horizon):
        state = dual_subgrad_step(problem, schedule, state, t, step_fn)
        viol = lay.constraint_values(state.avg_x).sum(axis=0)
        feas.update(state.t, viol)
        if policy.keep(state.t, horizon):
            obj = float(lay.objective_values(state.avg_x).sum())
            records.append(
                IterationRecord(
                    t=state.t,
                    objective=obj,
                    objective_error=obj - f_star if f_star is not None else math.nan,
                    violation=viol,
                    queue_sum_norm=float(np.linalg.norm(state.dual.sum(axis=0))),
                )
            )
    return RunResult(
        algorithm="dual_subgrad",
        records=records,
        final_state=state,
        horizon=horizon,
        first_feasible_t=feas.first,
        last_infeasible_t=feas.last_bad,
        params={"step_scale": step_scale},
    )
