"""Theoretical constants, a reference optimum and run metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import RunResult
from .errors import InfeasibleProblemError, InvalidInputError, UnsupportedKindError
from .network import GraphSchedule, verify_mixing
from .problem import CoupledProblem, Quadratic, slater_slack

VACUOUS_T1 = 1e8


@dataclass(frozen=True)
class BoundsReport:
    F: float
    G: float
    R: float
    eps: float
    N: int
    B: int
    a: float
    p: int
    buffer_c: float
    r: float
    beta: float
    delta: float
    sigma: float
    C1: float
    C2: float
    Cf: float
    Cg: float
    C0: float
    t1: float
    degenerate_log: bool = False
    t1_finite: bool = True
    vacuous: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        if not self.t1_finite:
            out["t1"] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def objective_bound(self, t) -> np.ndarray:
        return self.Cf / np.sqrt(t)

    def violation_bound(self, t) -> np.ndarray:
        return self.Cg / np.sqrt(t)


def compute_bounds(
    F: float,
    G: float,
    R: float,
    eps: float,
    N: int,
    B: int,
    a: float,
    p: int,
    buffer_c: float,
    sigma: float | None = None,
) -> BoundsReport:
    """Evaluate the convergence constants for ``gamma_t = C / sqrt(t)``.

    ``sigma`` defaults to ``delta``.  When ``8 delta^2 / eps^2 <= 1`` the log
    term of ``C1`` would be nonpositive; it is clamped to 0 and the report
    is flagged ``degenerate_log``.  ``t1`` is only finite when
    ``C > 4 sigma + C1``.
    """
    for name, val in (("F", F), ("G", G), ("R", R), ("eps", eps), ("N", N), ("B", B), ("p", p)):
        if not val > 0:
            raise InvalidInputError(f"{name} must be positive, got {val}")
    if not 0 < a < 1:
        raise InvalidInputError(f"a must lie in (0, 1), got {a}")
    if buffer_c < 0:
        raise InvalidInputError("buffer constant must be >= 0")
    C = float(buffer_c)
    sp = math.sqrt(p)
    contraction = 1.0 - a / (2 * N**2)
    r = contraction**-2
    beta = contraction ** (1.0 / B)
    gap = 1.0 - beta
    delta = F + sp * eps / (2 * N)
    notes = []
    if sigma is None:
        sigma = delta
        notes.append("sigma taken equal to delta")

    log_arg = 8 * delta**2 / eps**2
    degenerate = log_arg <= 1
    log_term = 0.0 if degenerate else (8 * delta**2 / eps) * math.log(log_arg)
    C1 = log_term + (4 * N * F * r * sp + 2 * r * p * eps) / gap + (8 * N * G * R + 16 * N * R**2) / eps

    ratio = 2 * N * C / eps
    C2 = (
        sp * C * ratio**2
        + (6 + ratio**4) * delta
        + 24 * N * F**2 / eps
        + (8 * N**2 * F**2 * r + 4 * N * F * r * sp) / (eps * gap)
        + (24 * N * F * p + 8 * p * eps) / N
    )
    Cf = (
        12 * N * F**2
        + 16 * N * p * C**2
        + 16 * N * F * p * C
        + 4 * N**2 * r * (F + sp * C) ** 2 / gap
        + 2 * p * C * (C1 + C2 + 4 * sigma)
        + 2 * R**2
        + 2
    )
    Cg = N * (4 * sigma + C1 + C2 - C)
    C0 = 4 * sigma + C1 + 1
    margin = C - 4 * sigma - C1
    if margin > 0:
        t1 = float(math.ceil((C2 / margin) ** 2))
        finite = True
    else:
        t1 = math.inf
        finite = False
    vacuous = not finite or t1 > VACUOUS_T1
    if vacuous:
        notes.append("t1 exceeds 1e8: finite-time feasibility bound is vacuous at desk scale")
    return BoundsReport(
        F=F, G=G, R=R, eps=eps, N=N, B=B, a=a, p=p, buffer_c=C,
        r=r, beta=beta, delta=delta, sigma=sigma, C1=C1, C2=C2,
        Cf=Cf, Cg=Cg, C0=C0, t1=t1,
        degenerate_log=degenerate, t1_finite=finite, vacuous=vacuous, notes=notes,
    )


def bounds_for(problem: CoupledProblem, schedule: GraphSchedule, buffer_c: float, window: int | None = None):
    """Bounds with F, G, R, eps taken from the problem and a, B from the schedule."""
    c = problem.constants
    a = verify_mixing(schedule).min_positive_entry
    # the floor a must lie strictly below every positive weight and inside (0, 1)
    a = min(a, 1.0 - 1e-12)
    return compute_bounds(
        c.F, c.G, c.R, slater_slack(problem), problem.n_agents,
        window or schedule.window, a, problem.constraint_dim, buffer_c,
    )


# -- reference optimum ---------------------------------------------------------


@dataclass
class OracleResult:
    x_star: list
    f_star: float
    lambda_star: np.ndarray
    residuals: dict

    def certified(self, tol: float) -> bool:
        return all(v <= tol for v in self.residuals.values())


def _strictly_convex_layout(problem: CoupledProblem):
    lay = problem.layout
    if not lay.linear_quadratic or not all(isinstance(ag.objective, Quadratic) for ag in problem.agents):
        raise UnsupportedKindError("oracle needs quadratic objectives and affine constraints")
    if np.any(lay.weight <= 0):
        raise UnsupportedKindError("oracle needs strictly positive quadratic weights")
    return lay


def _primal(lay, lam: np.ndarray) -> np.ndarray:
    return np.clip(lay.center - (lam @ lay.cons_slope) / lay.weight, lay.lower, lay.upper)


def _coupled(lay, x: np.ndarray) -> np.ndarray:
    return lay.cons_slope @ x + lay.cons_offset.sum(axis=0)


def _residuals(lay, x: np.ndarray, lam: np.ndarray) -> dict:
    g = _coupled(lay, x)
    grad = lay.weight * (x - lay.center) + lam @ lay.cons_slope
    return {
        "stationarity": float(np.abs(x - np.clip(x - grad, lay.lower, lay.upper)).max()),
        "primal_feasibility": float(max(0.0, g.max())),
        "dual_feasibility": float(max(0.0, -lam.min())),
        "complementary_slackness": float(np.abs(lam * g).max()),
    }


def _bisect_single(lay, tol: float) -> float:
    d = lay.cons_slope[0]

    def total(lam):
        return float(_coupled(lay, _primal(lay, np.array([lam])))[0])

    if total(0.0) <= 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while total(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > 1e16:
            raise InfeasibleProblemError("multiplier diverged: constraint unattainable")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if total(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi) * 1e-3:
            break
    # polish: with the clipping pattern frozen the coupled sum is linear in lam
    lam = 0.5 * (lo + hi)
    free = (lay.center - lam * d / lay.weight > lay.lower) & (lay.center - lam * d / lay.weight < lay.upper)
    x = _primal(lay, np.array([lam]))
    coeff = float((d[free] ** 2 / lay.weight[free]).sum())
    if coeff > 0:
        base = float(d[free] @ lay.center[free] + d[~free] @ x[~free] + lay.cons_offset[:, 0].sum())
        exact = base / coeff
        if lo - 1e-12 <= exact <= hi + 1e-12 and exact >= 0:
            lam = exact
    return lam


def kkt_oracle(problem: CoupledProblem, tol: float = 1e-10) -> OracleResult:
    """Optimum of a quadratic-objective, affine-constraint, box instance.

    For a single coupled constraint the multiplier is found by bisection on
    the monotone map ``lam -> sum_i g_i(x_i(lam))`` followed by an exact
    solve on the final clipping pattern.  For ``p > 1`` the concave dual is
    maximised with bound-constrained L-BFGS; the returned residuals certify
    the result either way.
    """
    lay = _strictly_convex_layout(problem)
    lowest = float((np.minimum(lay.cons_slope * lay.lower, lay.cons_slope * lay.upper).sum(axis=1)
                    + lay.cons_offset.sum(axis=0)).max())
    if lowest > 0:
        raise InfeasibleProblemError("coupled constraint is violated at every point of the boxes")
    if lay.p == 1:
        lam = np.array([_bisect_single(lay, tol)])
    else:
        def neg_dual(lam):
            x = _primal(lay, lam)
            r = x - lay.center
            val = 0.5 * float(lay.weight @ (r * r)) + float(lam @ _coupled(lay, x))
            return -val, -_coupled(lay, x)

        res = minimize(
            neg_dual, np.zeros(lay.p), jac=True, method="L-BFGS-B",
            bounds=[(0, None)] * lay.p, options={"ftol": 1e-16, "gtol": tol, "maxiter": 10_000},
        )
        lam = np.maximum(res.x, 0.0)
    x = _primal(lay, lam)
    f_star = float(lay.objective_values(x).sum())
    return OracleResult(x_star=[v.copy() for v in lay.split(x)], f_star=f_star,
                        lambda_star=lam, residuals=_residuals(lay, x, lam))


# -- metrics -------------------------------------------------------------------


@dataclass
class RunMetrics:
    t: np.ndarray
    objective_error: np.ndarray
    violation: np.ndarray
    scaled_objective_error: np.ndarray
    scaled_violation: np.ndarray
    first_feasible_t: int | None
    last_infeasible_t: int | None = None

    @property
    def max_violation(self) -> np.ndarray:
        return self.violation.max(axis=1)

    def at(self, t: int) -> int:
        idx = int(np.searchsorted(self.t, t))
        if idx >= self.t.size or self.t[idx] != t:
            raise KeyError(f"t={t} was not recorded")
        return idx


def metrics(run: RunResult, oracle_out: OracleResult | float) -> RunMetrics:
    """Objective error and violation at the running averages, plus sqrt(t)-scaled series.

    The scaled series use ``|objective error|`` and the positive part of the
    largest violation component.  ``first_feasible_t`` is taken from the
    run's per-iteration tracking when available, otherwise from records.
    """
    f_star = oracle_out.f_star if isinstance(oracle_out, OracleResult) else float(oracle_out)
    t = np.array([r.t for r in run.records], dtype=int)
    err = np.array([r.objective - f_star for r in run.records])
    viol = np.array([r.violation for r in run.records])
    root = np.sqrt(t)
    first = run.first_feasible_t
    if first is None:
        feasible = np.all(viol <= 0, axis=1)
        first = int(t[feasible][0]) if feasible.any() else None
    return RunMetrics(
        t=t,
        objective_error=err,
        violation=viol,
        scaled_objective_error=root * np.abs(err),
        scaled_violation=root * np.maximum(viol.max(axis=1), 0.0),
        first_feasible_t=first,
        last_infeasible_t=run.last_infeasible_t,
    )
