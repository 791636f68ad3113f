"""Buffering drift-plus-penalty iterations.

Per time step ``t`` (starting at 0) every agent

1. mixes neighbour queues: ``mu_hat_i = sum_j W_t[i, j] mu_j``;
2. solves ``min_x V_{t+1} f_i(x) + <mu_hat_i, g_i(x)> + eta_{t+1} ||x - x_i||^2`` over its box;
3. updates its queue ``mu_i <- max(mu_hat_i + g_i(x_i), 0) + gamma_{t+1}``.

Besides the iterates, each step reports the Lyapunov drift of the summed
queue, the drift-plus-penalty bound, and the slack of the cumulative
violation inequality ``sum_k sum_i g_i(x_{i,k}) + N sum_k gamma_k <= sum_i mu_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import local_solver
from .errors import InvalidInputError
from .network import GraphSchedule, Round
from .problem import CoupledProblem

INVARIANT_TOL = 1e-9


@dataclass(frozen=True)
class ParamSchedule:
    """Time-varying scalars ``V_t``, ``eta_t`` and buffer ``gamma_t`` for t >= 1."""

    v_fn: Callable[[int], float]
    eta_fn: Callable[[int], float]
    gamma_fn: Callable[[int], float]
    buffer_c: float = 0.0

    @classmethod
    def default(cls, buffer_c: float) -> "ParamSchedule":
        """``V_t = sqrt(t)``, ``eta_t = t``, ``gamma_t = C / sqrt(t)``."""
        if buffer_c < 0:
            raise InvalidInputError("buffer constant C must be >= 0")
        c = float(buffer_c)
        return cls(v_fn=math.sqrt, eta_fn=float, gamma_fn=lambda t: c / math.sqrt(t), buffer_c=c)

    @classmethod
    def constant(cls, v: float, eta: float, gamma: float = 0.0) -> "ParamSchedule":
        return cls(v_fn=lambda t: v, eta_fn=lambda t: eta, gamma_fn=lambda t: gamma, buffer_c=gamma)

    def at(self, t: int) -> tuple[float, float, float]:
        v, eta, gamma = float(self.v_fn(t)), float(self.eta_fn(t)), float(self.gamma_fn(t))
        if not (v > 0 and eta > 0 and gamma >= 0):
            raise InvalidInputError(f"bad parameters at t={t}: V={v}, eta={eta}, gamma={gamma}")
        return v, eta, gamma


@dataclass(frozen=True)
class AgentState:
    x: np.ndarray
    queue: np.ndarray
    avg_x: np.ndarray
    iter_count: int


@dataclass
class NetworkState:
    """All agents' state, stacked.

    ``x`` and ``avg_x`` are flat vectors in the problem's layout; ``queue``
    is (N, p).  ``cum_g`` and ``cum_gamma`` accumulate the summed
    constraint values and buffers since t = 1 for the invariant checks.
    """

    x: np.ndarray
    queue: np.ndarray
    avg_x: np.ndarray
    t: int = 0
    cum_g: np.ndarray | None = None
    cum_gamma: float = 0.0

    @classmethod
    def initial(cls, problem: CoupledProblem, x0: Sequence) -> "NetworkState":
        lay = problem.layout
        x = lay.stack(x0)
        if np.any(x < lay.lower) or np.any(x > lay.upper):
            raise InvalidInputError("initial point lies outside the boxes")
        p = problem.constraint_dim
        return cls(
            x=x, queue=np.zeros((problem.n_agents, p)), avg_x=np.zeros_like(x), t=0, cum_g=np.zeros(p)
        )

    def agents(self, problem: CoupledProblem) -> list[AgentState]:
        lay = problem.layout
        xs, avgs = lay.split(self.x), lay.split(self.avg_x)
        return [AgentState(xs[i].copy(), self.queue[i].copy(), avgs[i].copy(), self.t) for i in range(lay.n_agents)]


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics after producing iterate ``t``.

    ``objective`` and ``violation`` are ``sum_i f_i`` and ``sum_i g_i`` at the
    running averages; ``objective_error`` subtracts the optimum when it was
    supplied.  ``drift_bound`` is the drift-plus-penalty bound with the
    penalty moved to the right-hand side, so ``drift <= drift_bound`` is the
    bound itself.  Fields that an algorithm does not produce are None.
    """

    t: int
    objective: float
    objective_error: float
    violation: np.ndarray
    queue_sum_norm: float
    drift: float | None = None
    drift_bound: float | None = None
    lemma1_slack: np.ndarray | None = None

    @property
    def lemma1_slack_min(self) -> float | None:
        return None if self.lemma1_slack is None else float(self.lemma1_slack.min())


def mix_queues(states, rnd: Round) -> np.ndarray:
    """``mu_hat_i = sum_j W[i, j] mu_j`` for every agent; returns (N, p).

    ``states`` is either a list of :class:`AgentState` or an (N, p) array.
    """
    if isinstance(states, np.ndarray):
        queues = states
    else:
        queues = np.array([s.queue for s in states], dtype=float)
    if queues.ndim != 2 or queues.shape[0] != rnd.n_agents:
        raise InvalidInputError(f"queues have shape {queues.shape}, round has {rnd.n_agents} agents")
    return rnd.mixing @ queues


def queue_update(mu_hat, g_val, gamma: float) -> np.ndarray:
    """``max(mu_hat + g, 0) + gamma``, componentwise."""
    return np.maximum(np.asarray(mu_hat, dtype=float) + g_val, 0.0) + gamma


def step(
    problem: CoupledProblem,
    schedule: GraphSchedule,
    params: ParamSchedule,
    state: NetworkState,
    t: int | None = None,
    f_star: float | None = None,
) -> tuple[NetworkState, IterationRecord]:
    """Advance from time ``t`` to ``t + 1``; the record describes iterate ``t + 1``."""
    t = state.t if t is None else t
    lay = problem.layout
    n, p = lay.n_agents, lay.p
    F = problem.constants.F
    v, eta, gamma = params.at(t + 1)

    mu_hat = mix_queues(state.queue, schedule.round_at(t))
    x_new = local_solver.solve_all(problem, v, mu_hat, eta, state.x, t)
    g_new = lay.constraint_values(x_new)
    queue = queue_update(mu_hat, g_new, gamma)

    mu_bar = state.queue.sum(axis=0)
    mu_bar_new = queue.sum(axis=0)
    drift = 0.5 * float(mu_bar_new @ mu_bar_new) - 0.5 * float(mu_bar @ mu_bar)
    mix_gap = float(np.linalg.norm(mu_bar - mu_hat, axis=1).sum())
    dx = x_new - state.x
    sqrt_p = math.sqrt(p)
    drift_bound = (
        (F + 2 * sqrt_p * gamma) * mix_gap
        + float((mu_hat * g_new).sum())
        + eta * float(dx @ dx)
        + 2 * n * F**2
        + 4 * n * F * p * gamma
        + 4 * n * p * gamma**2
        + n * gamma * float(mu_bar.sum())
    )

    k = t + 1
    cum_g = state.cum_g + g_new.sum(axis=0)
    cum_gamma = state.cum_gamma + gamma
    lemma1 = mu_bar_new - cum_g - n * cum_gamma
    avg_x = state.avg_x + (x_new - state.avg_x) / k

    new_state = NetworkState(x=x_new, queue=queue, avg_x=avg_x, t=k, cum_g=cum_g, cum_gamma=cum_gamma)
    objective = float(lay.objective_values(avg_x).sum())
    record = IterationRecord(
        t=k,
        objective=objective,
        objective_error=objective - f_star if f_star is not None else math.nan,
        violation=lay.constraint_values(avg_x).sum(axis=0),
        queue_sum_norm=float(np.linalg.norm(mu_bar_new)),
        drift=drift,
        drift_bound=drift_bound,
        lemma1_slack=lemma1,
    )
    return new_state, record


@dataclass
class RecordPolicy:
    """Keep every record up to ``dense_until``, then every ``stride``-th, plus the last."""

    stride: int = 10
    dense_until: int = 1000

    def __post_init__(self):
        if self.stride < 1:
            raise InvalidInputError("stride must be >= 1")

    def keep(self, t: int, horizon: int) -> bool:
        return t <= self.dense_until or t % self.stride == 0 or t == horizon


@dataclass
class RunResult:
    """Recorded diagnostics of one run plus whole-run invariant tracking.

    ``min_lemma1_slack`` and ``max_drift_excess`` are taken over every
    iteration, not just the recorded ones.  ``first_feasible_t`` is the
    first iterate whose averaged point satisfies the coupled constraint and
    ``last_infeasible_t`` the last one that does not (0 if never).
    """

    algorithm: str
    records: list[IterationRecord]
    final_state: object
    horizon: int
    first_feasible_t: int | None = None
    last_infeasible_t: int = 0
    min_lemma1_slack: float | None = None
    max_drift_excess: float | None = None
    drift_violations: list[int] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def summary(self) -> dict:
        last = self.records[-1]
        return {
            "algorithm": self.algorithm,
            "horizon": self.horizon,
            "final_objective_error": last.objective_error,
            "final_violation": last.violation.tolist(),
            "first_feasible_t": self.first_feasible_t,
            "last_infeasible_t": self.last_infeasible_t,
            "min_lemma1_slack": self.min_lemma1_slack,
            "max_drift_excess": self.max_drift_excess,
            "drift_bound_violations": len(self.drift_violations),
            "params": self.params,
        }


class FeasibilityTracker:
    def __init__(self):
        self.first = None
        self.last_bad = 0

    def update(self, t: int, violation: np.ndarray):
        if np.all(violation <= 0):
            if self.first is None:
                self.first = t
        else:
            self.last_bad = t


def initial_point(problem: CoupledProblem, seed: int | None) -> list[np.ndarray]:
    """Uniform draw from each box, in agent order, from ``default_rng(seed)``."""
    rng = np.random.default_rng(seed)
    return [rng.uniform(ag.feasible_set.lower, ag.feasible_set.upper) for ag in problem.agents]


def run(
    problem: CoupledProblem,
    schedule: GraphSchedule,
    params: ParamSchedule,
    horizon: int,
    seed: int | None = 0,
    x0: Sequence | None = None,
    policy: RecordPolicy | None = None,
    f_star: float | None = None,
    strict: bool = False,
) -> RunResult:
    """Run ``horizon`` iterations from ``mu = 0`` and ``x0`` (random from ``seed`` if omitted).

    With ``strict`` any iteration breaking the cumulative-violation
    inequality or the drift bound (beyond ``INVARIANT_TOL``) raises
    AssertionError immediately.
    """
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    if schedule.n_agents != problem.n_agents:
        raise InvalidInputError(f"schedule has {schedule.n_agents} agents, problem has {problem.n_agents}")
    policy = policy or RecordPolicy()
    state = NetworkState.initial(problem, initial_point(problem, seed) if x0 is None else x0)
    records = []
    feas = FeasibilityTracker()
    min_slack = math.inf
    max_excess = -math.inf
    bad_drift = []
    for t in range(horizon):
        state, rec = step(problem, schedule, params, state, t, f_star)
        slack = float(rec.lemma1_slack.min())
        excess = rec.drift - rec.drift_bound
        min_slack = min(min_slack, slack)
        max_excess = max(max_excess, excess)
        if excess > INVARIANT_TOL:
            bad_drift.append(rec.t)
        if strict:
            assert slack >= -INVARIANT_TOL, f"cumulative-violation bound broken at t={rec.t}: {slack}"
            assert excess <= INVARIANT_TOL, f"drift bound broken at t={rec.t}: excess {excess}"
        feas.update(rec.t, rec.violation)
        if policy.keep(rec.t, horizon):
            records.append(rec)
    return RunResult(
        algorithm="bdpp",
        records=records,
        final_state=state,
        horizon=horizon,
        first_feasible_t=feas.first,
        last_infeasible_t=feas.last_bad,
        min_lemma1_slack=min_slack,
        max_drift_excess=max_excess,
        drift_violations=bad_drift,
        params={"C": params.buffer_c},
    )


def with_f_star(result: RunResult, f_star: float) -> RunResult:
    """Copy of ``result`` whose records carry ``objective - f_star`` as the error."""
    recs = [replace(r, objective_error=r.objective - f_star) for r in result.records]
    return replace(result, records=recs)
