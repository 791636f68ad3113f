import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from bdpp.analysis import kkt_oracle  # noqa: E402
from bdpp.network import make_ring_partition_schedule  # noqa: E402
from bdpp.problem import (  # noqa: E402
    Affine,
    AgentProblem,
    BoxSet,
    ConstraintMap,
    CoupledProblem,
    Quadratic,
    random_resource_allocation,
)

settings.register_profile("bdpp", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bdpp")

# optimum of the pinned instance from the SLSQP reference in oracles.py
PINNED_F_STAR = 1.749981462250515


def scalar_agent(center, slope, offset, lo=0.0, hi=2.0, weight=1.0):
    return AgentProblem(
        objective=Quadratic(center=center, weight=weight),
        constraint=ConstraintMap((Affine(slope=[slope], offset=offset),)),
        feasible_set=BoxSet([lo], [hi]),
    )


def slice_arrays(problem: CoupledProblem):
    a = np.array([ag.objective.center[0] for ag in problem.agents])
    d = np.array([ag.constraint.rows[0].slope[0] for ag in problem.agents])
    cap = -sum(ag.constraint.rows[0].offset for ag in problem.agents)
    return a, d, cap


@pytest.fixture(scope="session")
def pinned_problem():
    return random_resource_allocation(10, seed=1)


@pytest.fixture(scope="session")
def pinned_schedule():
    return make_ring_partition_schedule(10, 4, lazy_weight=0.5)


@pytest.fixture(scope="session")
def pinned_oracle(pinned_problem):
    return kkt_oracle(pinned_problem)


@pytest.fixture
def tiny_problem():
    """N=1, f = x^2/2, g = x - 1 on [0, 2]."""
    return CoupledProblem(agents=(scalar_agent(0.0, 1.0, -1.0),), slater_point=(np.zeros(1),))


# -- acceptance verdicts -------------------------------------------------------

_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """``verdict(number, ok, detail)`` prints and records one PASS/FAIL line, then asserts."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
