"""Time-varying communication graphs and their mixing matrices."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError, ValidationError

STOCHASTIC_TOL = 1e-12


def _edge(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Round:
    """One communication round: undirected edge set plus mixing matrix ``W``.

    ``W[i, j] > 0`` means agent ``i`` weighs the queue received from ``j``.
    """

    edges: frozenset
    mixing: np.ndarray

    def __post_init__(self):
        mixing = np.array(self.mixing, dtype=float)
        if mixing.ndim != 2 or mixing.shape[0] != mixing.shape[1]:
            raise InvalidInputError(f"mixing matrix must be square, got {mixing.shape}")
        mixing.setflags(write=False)
        edges = frozenset(_edge(int(i), int(j)) for i, j in self.edges)
        n = mixing.shape[0]
        for i, j in edges:
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise InvalidInputError(f"bad edge {(i, j)} for {n} agents")
        object.__setattr__(self, "mixing", mixing)
        object.__setattr__(self, "edges", edges)

    @property
    def n_agents(self) -> int:
        return self.mixing.shape[0]


@dataclass(frozen=True)
class GraphSchedule:
    """Periodic sequence of rounds; the round used at time ``t`` is ``rounds[t % period]``."""

    n_agents: int
    rounds: tuple[Round, ...]
    window: int
    min_weight: float

    def __post_init__(self):
        rounds = tuple(self.rounds)
        if not rounds:
            raise InvalidInputError("schedule needs at least one round")
        for k, rnd in enumerate(rounds):
            if rnd.n_agents != self.n_agents:
                raise InvalidInputError(f"round {k} has {rnd.n_agents} agents, expected {self.n_agents}")
        if self.window < 1:
            raise InvalidInputError("window must be >= 1")
        object.__setattr__(self, "rounds", rounds)

    @property
    def period(self) -> int:
        return len(self.rounds)

    def round_at(self, t: int) -> Round:
        return self.rounds[t % self.period]


def metropolis_weights(n_agents: int, edges) -> np.ndarray:
    """Symmetric Metropolis matrix ``w_ij = 1 / (1 + max(deg_i, deg_j))``, diagonal takes the rest."""
    deg = np.zeros(n_agents, dtype=int)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    W = np.zeros((n_agents, n_agents))
    for i, j in sorted(edges):
        W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    W[np.diag_indices(n_agents)] = 1.0 - W.sum(axis=1)
    return W


def _smallest_positive(rounds) -> float:
    return float(min(r.mixing[r.mixing > 0].min() for r in rounds))


def make_ring_partition_schedule(n_agents: int, window: int, lazy_weight: float = 0.5) -> GraphSchedule:
    """Split the ring ``{i, i+1 mod N}`` round-robin over ``window`` rounds.

    Each round mixes with Metropolis weights on its own edges, pulled toward
    the identity by ``lazy_weight`` (1 means plain Metropolis).  The union of
    the rounds is the ring, so every aligned block of ``window`` rounds is
    connected.
    """
    if n_agents < 2:
        raise InvalidInputError("need at least two agents")
    if not 1 <= window <= n_agents:
        raise InvalidInputError(f"window must lie in [1, {n_agents}], got {window}")
    if not 0 < lazy_weight <= 1:
        raise InvalidInputError("lazy_weight must lie in (0, 1]")
    # ring order 0-1, 1-2, ..., (N-1)-0 so round-robin hands out alternating edges;
    # N=2 has a single edge
    ring = list(dict.fromkeys(_edge(i, (i + 1) % n_agents) for i in range(n_agents)))
    eye = np.eye(n_agents)
    rounds = []
    for k in range(window):
        edges = ring[k::window]
        W = lazy_weight * metropolis_weights(n_agents, edges) + (1 - lazy_weight) * eye
        rounds.append(Round(edges=frozenset(edges), mixing=W))
    return GraphSchedule(
        n_agents=n_agents, rounds=tuple(rounds), window=window, min_weight=_smallest_positive(rounds)
    )


def complete_graph_schedule(n_agents: int) -> GraphSchedule:
    edges = [(i, j) for i in range(n_agents) for j in range(i + 1, n_agents)]
    W = metropolis_weights(n_agents, edges)
    rnd = Round(edges=frozenset(edges), mixing=W)
    return GraphSchedule(n_agents=n_agents, rounds=(rnd,), window=1, min_weight=_smallest_positive([rnd]))


def static_schedule(mixing, edges=None, window: int = 1) -> GraphSchedule:
    """Single-round schedule; edges default to the off-diagonal support of ``mixing``."""
    mixing = np.asarray(mixing, dtype=float)
    if edges is None:
        ii, jj = np.nonzero(mixing)
        edges = {_edge(i, j) for i, j in zip(ii.tolist(), jj.tolist()) if i != j}
    rnd = Round(edges=frozenset(edges), mixing=mixing)
    pos = mixing[mixing > 0]
    return GraphSchedule(
        n_agents=mixing.shape[0], rounds=(rnd,), window=window, min_weight=float(pos.min()) if pos.size else 0.0
    )


def _union_connected(rounds, n_agents: int) -> bool:
    adj = np.zeros((n_agents, n_agents), dtype=bool)
    for rnd in rounds:
        adj |= rnd.mixing > 0
        for i, j in rnd.edges:
            adj[i, j] = adj[j, i] = True
    np.fill_diagonal(adj, False)
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def verify_b_connectivity(schedule: GraphSchedule, window: int) -> bool:
    """True iff the union graph of every aligned block of ``window`` rounds is strongly connected.

    Blocks start at multiples of ``window``; with a periodic schedule it is
    enough to check one cycle of length ``lcm(period, window)``.
    """
    if window < 1:
        raise InvalidInputError("window must be >= 1")
    cycle = math.lcm(schedule.period, window)
    for k in range(cycle // window):
        block = [schedule.round_at(k * window + s) for s in range(window)]
        if not _union_connected(block, schedule.n_agents):
            return False
    return True


class MixingReport(NamedTuple):
    ok: bool
    min_positive_entry: float


def mixing_issues(schedule: GraphSchedule, tol: float = STOCHASTIC_TOL) -> list[str]:
    """Human-readable list of every mixing-matrix property that fails."""
    issues = []
    for k, rnd in enumerate(schedule.rounds):
        W = rnd.mixing
        if np.any(W < 0):
            issues.append(f"round {k}: negative entries")
        rows = np.abs(W.sum(axis=1) - 1.0).max()
        cols = np.abs(W.sum(axis=0) - 1.0).max()
        if rows > tol:
            issues.append(f"round {k}: row sums off by {rows:.3g}")
        if cols > tol:
            issues.append(f"round {k}: column sums off by {cols:.3g}")
        ii, jj = np.nonzero(W > 0)
        for i, j in zip(ii.tolist(), jj.tolist()):
            if i != j and _edge(i, j) not in rnd.edges:
                issues.append(f"round {k}: weight on ({i}, {j}) but no such edge")
                break
        pos = W[W > 0]
        if pos.size and pos.min() < schedule.min_weight - tol:
            issues.append(f"round {k}: positive entry {pos.min():.3g} below declared a={schedule.min_weight:.3g}")
    return issues


def verify_mixing(schedule: GraphSchedule) -> MixingReport:
    """Check nonnegativity, double stochasticity, edge support and the weight floor.

    Symmetry is not required, so user supplied directed doubly stochastic
    matrices pass.  The returned minimum positive entry is the constant
    ``a`` used by the bounds calculator.
    """
    return MixingReport(ok=not mixing_issues(schedule), min_positive_entry=_smallest_positive(schedule.rounds))


def is_symmetric(schedule: GraphSchedule) -> bool:
    return all(np.array_equal(r.mixing, r.mixing.T) for r in schedule.rounds)


# -- JSON ----------------------------------------------------------------------


def schedule_to_dict(schedule: GraphSchedule) -> dict:
    return {
        "n_agents": schedule.n_agents,
        "window": schedule.window,
        "rounds": [
            {"edges": [list(e) for e in sorted(r.edges)], "mixing": r.mixing.tolist()} for r in schedule.rounds
        ],
    }


def schedule_from_dict(data: dict) -> GraphSchedule:
    try:
        rounds = tuple(Round(edges=frozenset(map(tuple, r["edges"])), mixing=r["mixing"]) for r in data["rounds"])
        n = int(data.get("n_agents", rounds[0].n_agents))
        window = int(data.get("window", len(rounds)))
    except (KeyError, IndexError) as exc:
        raise ValidationError(f"schedule JSON is malformed: {exc}") from None
    min_weight = data.get("min_weight")
    if min_weight is None:
        min_weight = _smallest_positive(rounds)
    return GraphSchedule(n_agents=n, rounds=rounds, window=window, min_weight=float(min_weight))


def load_schedule(path) -> GraphSchedule:
    return schedule_from_dict(json.loads(Path(path).read_text()))


def save_schedule(schedule: GraphSchedule, path) -> None:
    Path(path).write_text(json.dumps(schedule_to_dict(schedule), indent=2))
