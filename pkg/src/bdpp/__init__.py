"""Buffering drift-plus-penalty for constraint-coupled optimization over time-varying networks."""

from .analysis import BoundsReport, OracleResult, RunMetrics, bounds_for, compute_bounds, kkt_oracle, metrics
from .baselines import dpp_step, dual_subgrad_step, run_dpp, run_dual_subgrad
from .core import IterationRecord, NetworkState, ParamSchedule, RunResult, mix_queues, queue_update, run, step
from .errors import (
    InfeasibleProblemError,
    InvalidInputError,
    NotAvailableError,
    SolverError,
    UnsupportedKindError,
    ValidationError,
)
from .local_solver import SubproblemSpec, solve, solve_closed_form, solve_projected
from .network import (
    GraphSchedule,
    Round,
    make_ring_partition_schedule,
    verify_b_connectivity,
    verify_mixing,
)
from .problem import (
    Affine,
    AgentProblem,
    BoxSet,
    ConstraintMap,
    CoupledProblem,
    Custom,
    Quadratic,
    eval_global,
    problem_constants,
    random_resource_allocation,
    resource_allocation_problem,
    slater_slack,
)

__version__ = "0.1.0"

__all__ = [
    "Affine", "AgentProblem", "BoundsReport", "BoxSet", "ConstraintMap", "CoupledProblem", "Custom",
    "GraphSchedule", "InfeasibleProblemError", "InvalidInputError", "IterationRecord", "NetworkState",
    "NotAvailableError", "OracleResult", "ParamSchedule", "Quadratic", "Round", "RunMetrics", "RunResult",
    "SolverError", "SubproblemSpec", "UnsupportedKindError", "ValidationError", "bounds_for",
    "compute_bounds", "dpp_step", "dual_subgrad_step", "eval_global", "kkt_oracle",
    "make_ring_partition_schedule", "metrics", "mix_queues", "problem_constants", "queue_update",
    "random_resource_allocation", "resource_allocation_problem", "run", "run_dpp", "run_dual_subgrad",
    "slater_slack", "solve", "solve_closed_form", "solve_projected", "step", "verify_b_connectivity",
    "verify_mixing",
]
