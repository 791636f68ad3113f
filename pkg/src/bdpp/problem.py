"""Constraint-coupled problem instances.

An instance is a list of agents, each owning a convex objective ``f_i``, a
vector constraint map ``g_i`` with ``p`` rows and a box ``X_i``.  The agents
are coupled only through ``sum_i g_i(x_i) <= 0``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidInputError, NotAvailableError, ValidationError

_MAX_VERTEX_DIM = 16
_SAMPLE_POINTS = 20_000


def _vec(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float)).copy()
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = _vec(self.lower, "lower")
        upper = _vec(self.upper, "upper")
        if lower.shape != upper.shape:
            raise InvalidInputError("box bounds have different lengths")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValidationError("box bounds must be finite")
        if np.any(lower > upper):
            raise ValidationError("box has lower > upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def project(self, x) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def vertices(self):
        return itertools.product(*zip(self.lower, self.upper))


class ScalarConvexFn:
    """Convex scalar function of a vector argument."""

    kind = "abstract"

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> float:
        return self.value(x)


@dataclass(frozen=True, eq=False)
class Quadratic(ScalarConvexFn):
    """``weight/2 * ||x - center||^2``; a scalar center is broadcast."""

    center: np.ndarray | float
    weight: float = 1.0
    kind = "quadratic"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.weight >= 0:
            raise ValidationError("quadratic weight must be >= 0")
        object.__setattr__(self, "weight", float(self.weight))

    def value(self, x) -> float:
        r = np.asarray(x, dtype=float) - self.center
        return 0.5 * self.weight * float(np.dot(r, r))

    def subgradient(self, x) -> np.ndarray:
        return self.weight * (np.asarray(x, dtype=float) - self.center)

    def range_on(self, box: BoxSet) -> tuple[float, float]:
        c = np.broadcast_to(self.center, box.lower.shape)
        near = np.clip(c, box.lower, box.upper) - c
        far = np.maximum(np.abs(box.lower - c), np.abs(box.upper - c))
        return 0.5 * self.weight * float(near @ near), 0.5 * self.weight * float(far @ far)


@dataclass(frozen=True, eq=False)
class Affine(ScalarConvexFn):
    """``slope @ x + offset``."""

    slope: np.ndarray
    offset: float = 0.0
    kind = "affine"

    def __post_init__(self):
        object.__setattr__(self, "slope", _vec(self.slope, "slope"))
        object.__setattr__(self, "offset", float(self.offset))

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.broadcast_to(self.slope, x.shape) @ x) + self.offset

    def subgradient(self, x) -> np.ndarray:
        return np.broadcast_to(self.slope, np.shape(x)).astype(float)

    def range_on(self, box: BoxSet) -> tuple[float, float]:
        s = np.broadcast_to(self.slope, box.lower.shape)
        lo = np.minimum(s * box.lower, s * box.upper).sum() + self.offset
        hi = np.maximum(s * box.lower, s * box.upper).sum() + self.offset
        return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class Custom(ScalarConvexFn):
    """User supplied value and subgradient callbacks.  Not serialisable."""

    value_fn: Callable[[np.ndarray], float]
    subgradient_fn: Callable[[np.ndarray], np.ndarray]
    kind = "custom"

    def value(self, x) -> float:
        return float(self.value_fn(np.asarray(x, dtype=float)))

    def subgradient(self, x) -> np.ndarray:
        return np.asarray(self.subgradient_fn(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ConstraintMap:
    rows: tuple[ScalarConvexFn, ...]

    def __post_init__(self):
        rows = tuple(self.rows)
        if not rows:
            raise InvalidInputError("constraint map needs at least one row")
        object.__setattr__(self, "rows", rows)

    @property
    def dim(self) -> int:
        return len(self.rows)

    def value(self, x) -> np.ndarray:
        return np.array([row.value(x) for row in self.rows])

    def __call__(self, x) -> np.ndarray:
        return self.value(x)

    def all_affine(self) -> bool:
        return all(isinstance(r, Affine) for r in self.rows)


@dataclass(frozen=True)
class AgentProblem:
    objective: ScalarConvexFn
    constraint: ConstraintMap
    feasible_set: BoxSet

    def __post_init__(self):
        if not isinstance(self.constraint, ConstraintMap):
            object.__setattr__(self, "constraint", ConstraintMap(tuple(self.constraint)))
        d = self.dim
        fns = [self.objective, *self.constraint.rows]
        for fn in fns:
            size = getattr(fn, "center", getattr(fn, "slope", None))
            if size is not None and size.size not in (1, d):
                raise InvalidInputError(
                    f"{fn.kind} function has length {size.size}, agent dim is {d}"
                )

    @property
    def dim(self) -> int:
        return self.feasible_set.dim

    def closed_form_ok(self) -> bool:
        return isinstance(self.objective, (Quadratic, Affine)) and self.constraint.all_affine()


@dataclass(frozen=True)
class ProblemConstants:
    """Uniform bounds ``||g_i|| <= F`` and ``|f_i(x) - f_i(y)| <= G`` plus diameter ``R``.

    ``sampled`` is True when any of the three came from sampling a custom
    callback rather than from exact vertex/interval evaluation.
    """

    F: float
    G: float
    R: float
    sampled: bool = False


@dataclass(frozen=True)
class CoupledProblem:
    agents: tuple[AgentProblem, ...]
    slater_point: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise InvalidInputError("problem needs at least one agent")
        p = agents[0].constraint.dim
        for i, ag in enumerate(agents):
            if ag.constraint.dim != p:
                raise ValidationError(
                    f"agent {i + 1} has {ag.constraint.dim} constraint rows, expected {p}"
                )
        object.__setattr__(self, "agents", agents)
        if self.slater_point is not None:
            pts = tuple(_vec(x, "slater point") for x in self.slater_point)
            if len(pts) != len(agents):
                raise InvalidInputError("slater point needs one vector per agent")
            for i, (ag, x) in enumerate(zip(agents, pts)):
                if x.size != ag.dim or not ag.feasible_set.contains(x):
                    raise ValidationError(f"slater point for agent {i + 1} is outside its box")
            total = sum((ag.constraint.value(x) for ag, x in zip(agents, pts)), np.zeros(p))
            if not np.all(total < 0):
                raise ValidationError("slater point is not strictly feasible")
            object.__setattr__(self, "slater_point", pts)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def constraint_dim(self) -> int:
        return self.agents[0].constraint.dim

    @cached_property
    def layout(self) -> "Layout":
        return Layout(self)

    @cached_property
    def constants(self) -> ProblemConstants:
        return problem_constants(self)


class Layout:
    """Stacked view of all agent variables as one flat vector.

    When every agent is quadratic/affine with affine constraints the
    coefficients are packed so objective, constraint and subproblem
    evaluations run as a handful of array operations.
    """

    def __init__(self, problem: CoupledProblem):
        self.problem = problem
        dims = [ag.dim for ag in problem.agents]
        self.dims = dims
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.starts = self.offsets[:-1]
        self.size = int(self.offsets[-1])
        self.n_agents = len(dims)
        self.p = problem.constraint_dim
        self.agent_of = np.repeat(np.arange(self.n_agents), dims)
        self.lower = np.concatenate([ag.feasible_set.lower for ag in problem.agents])
        self.upper = np.concatenate([ag.feasible_set.upper for ag in problem.agents])
        self.linear_quadratic = all(ag.closed_form_ok() for ag in problem.agents)
        if self.linear_quadratic:
            self._pack()

    def _pack(self):
        n, size, p = self.n_agents, self.size, self.p
        self.weight = np.zeros(size)
        self.center = np.zeros(size)
        self.obj_slope = np.zeros(size)
        self.obj_offset = np.zeros(n)
        self.cons_slope = np.zeros((p, size))
        self.cons_offset = np.zeros((n, p))
        for i, ag in enumerate(self.problem.agents):
            sl = slice(self.offsets[i], self.offsets[i + 1])
            obj = ag.objective
            if isinstance(obj, Quadratic):
                self.weight[sl] = obj.weight
                self.center[sl] = obj.center
            else:
                self.obj_slope[sl] = obj.slope
                self.obj_offset[i] = obj.offset
            for r, row in enumerate(ag.constraint.rows):
                self.cons_slope[r, sl] = row.slope
                self.cons_offset[i, r] = row.offset

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[self.offsets[i]:self.offsets[i + 1]] for i in range(self.n_agents)]

    def stack(self, xs: Sequence) -> np.ndarray:
        if len(xs) != self.n_agents:
            raise InvalidInputError(f"expected {self.n_agents} agent vectors, got {len(xs)}")
        out = []
        for i, (x, d) in enumerate(zip(xs, self.dims)):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            if x.shape != (d,):
                raise InvalidInputError(f"agent {i + 1} vector has shape {x.shape}, expected ({d},)")
            out.append(x)
        return np.concatenate(out)

    def _per_agent(self, terms: np.ndarray) -> np.ndarray:
        return np.add.reduceat(terms, self.starts, axis=-1)

    def objective_values(self, flat: np.ndarray) -> np.ndarray:
        """Per-agent ``f_i(x_i)`` as an (N,) array."""
        if self.linear_quadratic:
            r = flat - self.center
            terms = 0.5 * self.weight * r * r + self.obj_slope * flat
            return self._per_agent(terms) + self.obj_offset
        return np.array([ag.objective.value(x) for ag, x in zip(self.problem.agents, self.split(flat))])

    def constraint_values(self, flat: np.ndarray) -> np.ndarray:
        """Per-agent ``g_i(x_i)`` as an (N, p) array."""
        if self.linear_quadratic:
            return self._per_agent(self.cons_slope * flat).T + self.cons_offset
        return np.array([ag.constraint.value(x) for ag, x in zip(self.problem.agents, self.split(flat))])


def eval_global(problem: CoupledProblem, x: Sequence) -> tuple[float, np.ndarray]:
    """Return ``(sum_i f_i(x_i), sum_i g_i(x_i))`` summed in agent order."""
    if len(x) != problem.n_agents:
        raise InvalidInputError(f"expected {problem.n_agents} agent vectors, got {len(x)}")
    obj = 0.0
    cons = np.zeros(problem.constraint_dim)
    for i, (ag, xi) in enumerate(zip(problem.agents, x)):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if xi.shape != (ag.dim,):
            raise InvalidInputError(f"agent {i + 1} vector has shape {xi.shape}, expected ({ag.dim},)")
        obj += ag.objective.value(xi)
        cons = cons + ag.constraint.value(xi)
    return obj, cons


def slater_slack(problem: CoupledProblem) -> float:
    """Largest ``eps`` with ``sum_i g_i(xhat_i) <= -eps``; 0 if not strictly feasible."""
    if problem.slater_point is None:
        raise NotAvailableError("problem has no slater point")
    _, total = eval_global(problem, problem.slater_point)
    return max(0.0, -float(np.max(total)))


def _sample_points(box: BoxSet, rng: np.random.Generator) -> np.ndarray:
    if box.dim == 1:
        return np.linspace(box.lower[0], box.upper[0], _SAMPLE_POINTS + 1)[:, None]
    per_axis = int(_SAMPLE_POINTS ** (1.0 / box.dim))
    if per_axis >= 3:
        axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(box.lower, box.upper)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    return rng.uniform(box.lower, box.upper, size=(_SAMPLE_POINTS, box.dim))


def _checked(values, what: str, agent: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{what} of agent {agent + 1} is unbounded on its box")
    return values


def _objective_spread(ag: AgentProblem, i: int, rng) -> tuple[float, bool]:
    obj = ag.objective
    if isinstance(obj, (Quadratic, Affine)):
        lo, hi = obj.range_on(ag.feasible_set)
        return hi - lo, False
    vals = _checked([obj.value(x) for x in _sample_points(ag.feasible_set, rng)], "objective", i)
    return float(vals.max() - vals.min()), True


def _constraint_norm_max(ag: AgentProblem, i: int, rng) -> tuple[float, bool]:
    rows = ag.constraint.rows
    box = ag.feasible_set
    if all(isinstance(r, (Quadratic, Affine)) for r in rows):
        if len(rows) == 1:
            lo, hi = rows[0].range_on(box)
            return max(abs(lo), abs(hi)), False
        # every row squared is convex here, so ||g|| peaks at a vertex
        if box.dim <= _MAX_VERTEX_DIM:
            best = max(float(np.linalg.norm(ag.constraint.value(np.array(v)))) for v in box.vertices())
            return best, False
        per_row = [max(abs(lo), abs(hi)) for lo, hi in (r.range_on(box) for r in rows)]
        return float(np.linalg.norm(per_row)), False
    vals = _checked(
        [np.linalg.norm(ag.constraint.value(x)) for x in _sample_points(box, rng)], "constraint", i
    )
    return float(vals.max()), True


def problem_constants(problem: CoupledProblem) -> ProblemConstants:
    """Compute F, G, R as maxima over agents.

    Quadratic and affine pieces are evaluated exactly at box vertices or by
    interval arithmetic; custom callbacks are grid sampled and the result is
    flagged ``sampled``.
    """
    rng = np.random.default_rng(0)
    F = G = 0.0
    sampled = False
    for i, ag in enumerate(problem.agents):
        g_max, s1 = _constraint_norm_max(ag, i, rng)
        f_spread, s2 = _objective_spread(ag, i, rng)
        F = max(F, g_max)
        G = max(G, f_spread)
        sampled = sampled or s1 or s2
    R = max(ag.feasible_set.diameter() for ag in problem.agents)
    return ProblemConstants(F=F, G=G, R=R, sampled=sampled)


# -- instance generators -------------------------------------------------------


def resource_allocation_problem(
    a, d, capacity: float, upper: float = 2.0
) -> CoupledProblem:
    """Scalar slice-allocation instance.

    Agent ``i`` minimises ``(x_i - a_i)^2 / 2`` on ``[0, upper]``; the shared
    capacity ``sum_i d_i x_i <= capacity`` is split evenly, so
    ``g_i(x) = d_i x - capacity / N``.  The origin is used as Slater point.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    n = a.size
    if d.size != n:
        raise InvalidInputError("a and d must have the same length")
    share = capacity / n
    agents = tuple(
        AgentProblem(
            objective=Quadratic(center=a[i], weight=1.0),
            constraint=ConstraintMap((Affine(slope=[d[i]], offset=-share),)),
            feasible_set=BoxSet([0.0], [upper]),
        )
        for i in range(n)
    )
    slater = tuple(np.zeros(1) for _ in range(n)) if capacity > 0 else None
    return CoupledProblem(agents=agents, slater_point=slater)


def random_resource_allocation(
    n_agents: int = 10,
    seed: int = 1,
    a_range=(1.0, 2.0),
    d_range=(0.5, 1.0),
    capacity_range=(5.0, 20.0),
    require_binding: bool = True,
    max_draws: int = 1000,
) -> CoupledProblem:
    """Draw a slice-allocation instance.

    Each draw samples ``a`` (N values), then ``d`` (N values), then the
    capacity, all uniformly.  With ``require_binding`` draws are repeated
    until the unconstrained minimiser ``x = a`` violates the capacity, so the
    coupling constraint is active at the optimum.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_draws):
        a = rng.uniform(*a_range, size=n_agents)
        d = rng.uniform(*d_range, size=n_agents)
        cap = rng.uniform(*capacity_range)
        if not require_binding or cap < float(d @ a):
            return resource_allocation_problem(a, d, cap)
    raise ValidationError(f"no binding instance found in {max_draws} draws")


# -- JSON ----------------------------------------------------------------------


def _fn_to_dict(fn: ScalarConvexFn) -> dict:
    if isinstance(fn, Quadratic):
        return {"kind": "quadratic", "center": fn.center.tolist(), "weight": fn.weight}
    if isinstance(fn, Affine):
        return {"kind": "affine", "slope": fn.slope.tolist(), "offset": fn.offset}
    raise InvalidInputError("custom functions cannot be serialised")


def _fn_from_dict(spec: dict) -> ScalarConvexFn:
    kind = spec.get("kind")
    if kind == "quadratic":
        return Quadratic(center=spec["center"], weight=spec.get("weight", 1.0))
    if kind == "affine":
        return Affine(slope=spec["slope"], offset=spec.get("offset", 0.0))
    raise ValidationError(f"unknown function kind {kind!r}")


def problem_to_dict(problem: CoupledProblem) -> dict:
    out = {
        "agents": [
            {
                "dim": ag.dim,
                "objective": _fn_to_dict(ag.objective),
                "constraint": [_fn_to_dict(r) for r in ag.constraint.rows],
                "box": {"lower": ag.feasible_set.lower.tolist(), "upper": ag.feasible_set.upper.tolist()},
            }
            for ag in problem.agents
        ]
    }
    if problem.slater_point is not None:
        out["slater_point"] = [x.tolist() for x in problem.slater_point]
    return out


def problem_from_dict(data: dict) -> CoupledProblem:
    try:
        agents = []
        for i, spec in enumerate(data["agents"]):
            box = BoxSet(spec["box"]["lower"], spec["box"]["upper"])
            if "dim" in spec and spec["dim"] != box.dim:
                raise ValidationError(f"agent {i + 1}: dim {spec['dim']} disagrees with box")
            agents.append(
                AgentProblem(
                    objective=_fn_from_dict(spec["objective"]),
                    constraint=ConstraintMap(tuple(_fn_from_dict(r) for r in spec["constraint"])),
                    feasible_set=box,
                )
            )
    except KeyError as exc:
        raise ValidationError(f"problem JSON is missing key {exc}") from None
    return CoupledProblem(agents=tuple(agents), slater_point=data.get("slater_point"))


def load_problem(path) -> CoupledProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))


def save_problem(problem: CoupledProblem, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2))
