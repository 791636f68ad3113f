"""Per-agent primal subproblem.

Each agent minimises, over its box,

    S(x) = v * f(x) + <queue, g(x)> + eta * ||x - anchor||^2

Note the proximal term carries no 1/2, so its gradient is ``2 * eta * (x - anchor)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SolverError, UnsupportedKindError
from .problem import AgentProblem, CoupledProblem, Layout, Quadratic

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000


class SolverAccuracyWarning(RuntimeWarning):
    """The projected solver stopped before certifying its tolerance."""


@dataclass(frozen=True)
class SubproblemSpec:
    agent: AgentProblem
    v: float
    queue: np.ndarray
    eta: float
    anchor: np.ndarray

    def __post_init__(self):
        queue = np.atleast_1d(np.asarray(self.queue, dtype=float))
        anchor = np.atleast_1d(np.asarray(self.anchor, dtype=float))
        if queue.shape != (self.agent.constraint.dim,):
            raise InvalidInputError(f"queue has shape {queue.shape}, expected ({self.agent.constraint.dim},)")
        if anchor.shape != (self.agent.dim,):
            raise InvalidInputError(f"anchor has shape {anchor.shape}, expected ({self.agent.dim},)")
        if np.any(queue < 0):
            raise InvalidInputError("queue must be componentwise nonnegative")
        # eta == 0 is the unregularised argmin used by the baselines
        if not self.v > 0 or not self.eta >= 0:
            raise InvalidInputError("need v > 0 and eta >= 0")
        object.__setattr__(self, "queue", queue)
        object.__setattr__(self, "anchor", anchor)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        r = x - self.anchor
        return (
            self.v * self.agent.objective.value(x)
            + float(self.queue @ self.agent.constraint.value(x))
            + self.eta * float(r @ r)
        )

    def subgradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        s = self.v * self.agent.objective.subgradient(x) + 2 * self.eta * (x - self.anchor)
        for q, row in zip(self.queue, self.agent.constraint.rows):
            if q:
                s = s + q * row.subgradient(x)
        return s


def _minimise_separable(weight, center, linear, eta, anchor, lower, upper):
    """Coordinatewise minimiser of ``weight/2 (x-center)^2 + linear*x + eta (x-anchor)^2`` on a box."""
    den = weight + 2 * eta
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (weight * center + 2 * eta * anchor - linear) / den
    flat = den == 0
    if np.any(flat):
        # purely linear coordinate: go to the bound the slope points away from
        x = np.where(flat, np.where(linear > 0, lower, np.where(linear < 0, upper, np.clip(anchor, lower, upper))), x)
    return np.clip(x, lower, upper)


def solve_closed_form(spec: SubproblemSpec) -> np.ndarray:
    """Exact minimiser for a quadratic or affine objective with affine constraint rows."""
    ag = spec.agent
    if not ag.closed_form_ok():
        raise UnsupportedKindError(
            f"closed form needs quadratic/affine objective and affine constraints, got {ag.objective.kind}"
        )
    box = ag.feasible_set
    shape = box.lower.shape
    linear = np.zeros(shape)
    for q, row in zip(spec.queue, ag.constraint.rows):
        linear = linear + q * np.broadcast_to(row.slope, shape)
    obj = ag.objective
    if isinstance(obj, Quadratic):
        weight = spec.v * obj.weight
        center = np.broadcast_to(obj.center, shape)
    else:
        weight = 0.0
        center = np.zeros(shape)
        linear = linear + spec.v * np.broadcast_to(obj.slope, shape)
    return _minimise_separable(weight, center, linear, spec.eta, spec.anchor, box.lower, box.upper)


def _fw_gap(s: np.ndarray, x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> float:
    # max over the box of <s, x - y>; bounds S(x) - min S for convex S with s in dS(x)
    return float(s @ x - np.minimum(s * lower, s * upper).sum())


def _suboptimality_bound(s, x, lower, upper, eta: float) -> float:
    """Upper bound on ``S(x) - min S`` from the subgradient ``s``.

    The smaller of the linear-minimisation gap and, when ``eta > 0``, the
    strong-convexity bound ``dist(0, s + N_box(x))^2 / (4 eta)``; the prox
    term alone makes ``S`` strongly convex with modulus ``2 eta``.
    """
    gap = _fw_gap(s, x, lower, upper)
    if eta > 0:
        r = np.where(x <= lower, np.minimum(s, 0.0), np.where(x >= upper, np.maximum(s, 0.0), s))
        gap = min(gap, float(r @ r) / (4 * eta))
    return gap


def solve_projected(
    spec: SubproblemSpec,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    x0=None,
) -> np.ndarray:
    """Projected (sub)gradient descent with backtracking for any convex kinds.

    Stops once a certified bound on the suboptimality of ``x`` is at most
    ``tol``: the linear-minimisation gap ``max_y <s, x - y>`` over the box,
    or the strong-convexity bound from the prox term, whichever is smaller.
    Every iterate is projected, so the result is always inside the box.  If
    ``max_iters`` runs out the best iterate is returned and a
    :class:`SolverAccuracyWarning` is issued.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    box = spec.agent.feasible_set
    lo, hi = box.lower, box.upper
    x = box.project(spec.anchor if x0 is None else np.asarray(x0, dtype=float))
    fx = spec.value(x)
    best_x, best_f = x, fx
    step = 1.0 / (2 * spec.eta + spec.v + 1.0)
    gap = np.inf
    for _ in range(max_iters):
        s = spec.subgradient(x)
        gap = _suboptimality_bound(s, x, lo, hi, spec.eta)
        if gap <= tol:
            return x
        while True:
            x_new = np.clip(x - step * s, lo, hi)
            diff = x_new - x
            f_new = spec.value(x_new)
            if f_new <= fx + s @ diff + (diff @ diff) / (2 * step) or step < 1e-300:
                break
            step *= 0.5
        if not np.any(diff):
            break
        x, fx = x_new, f_new
        if fx < best_f:
            best_x, best_f = x, fx
        step *= 2.0
    s = spec.subgradient(best_x)
    gap = _suboptimality_bound(s, best_x, lo, hi, spec.eta)
    if gap > tol:
        warnings.warn(
            f"projected solver stopped with gap {gap:.3g} > tol {tol:.3g}", SolverAccuracyWarning, stacklevel=2
        )
    return best_x


def solve(spec: SubproblemSpec, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Closed form when the agent allows it, projected solver otherwise."""
    if spec.agent.closed_form_ok():
        return solve_closed_form(spec)
    return solve_projected(spec, tol=tol, max_iters=max_iters)


def solve_stacked(layout: Layout, v: float, queues: np.ndarray, eta: float, anchor: np.ndarray) -> np.ndarray:
    """Closed-form minimiser for every agent at once.

    ``queues`` is (N, p), one multiplier vector per agent; ``anchor`` is the
    flat stacked previous iterate.  Requires ``layout.linear_quadratic``.
    """
    if not layout.linear_quadratic:
        raise UnsupportedKindError("stacked closed form needs an all quadratic/affine problem")
    linear = (queues[layout.agent_of] * layout.cons_slope.T).sum(axis=1) + v * layout.obj_slope
    return _minimise_separable(v * layout.weight, layout.center, linear, eta, anchor, layout.lower, layout.upper)


def solve_all(problem: CoupledProblem, v: float, queues: np.ndarray, eta: float, anchor: np.ndarray, t: int = 0):
    """Solve every agent's subproblem; ``queues`` is (N, p), ``anchor`` flat.

    Uses the vectorised closed form when the whole problem allows it and
    falls back to one :func:`solve` call per agent otherwise.  Failures are
    re-raised as :class:`SolverError` naming the agent (1-based) and ``t``.
    """
    lay = problem.layout
    if lay.linear_quadratic:
        return solve_stacked(lay, v, queues, eta, anchor)
    out = np.empty_like(anchor)
    for i, (ag, xa) in enumerate(zip(problem.agents, lay.split(anchor))):
        try:
            out[lay.offsets[i]:lay.offsets[i + 1]] = solve(SubproblemSpec(ag, v, queues[i], eta, xa))
        except Exception as exc:
            raise SolverError(f"agent {i + 1} at t={t}: {exc}") from exc
    return out
