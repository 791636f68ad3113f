import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize

from bdpp.baselines import (
    DppState,
    DualSubgradState,
    dpp_step,
    dual_subgrad_step,
    harmonic_step,
    run_dpp,
    run_dual_subgrad,
)
from bdpp.errors import InvalidInputError
from bdpp.network import make_ring_partition_schedule, static_schedule
from bdpp.problem import CoupledProblem, random_resource_allocation

from conftest import scalar_agent, slice_arrays
from oracles import loop_dpp


def test_dpp_first_step_hand_trace(tiny_problem):
    s = dpp_step(tiny_problem, DppState.initial(tiny_problem, 1.0))
    assert s.x[0] == 0.0
    assert s.queue[0] == 0.0


def test_dpp_large_queue_drains_by_one(tiny_problem):
    s0 = DppState.initial(tiny_problem, 1.0)
    s0.queue = np.array([100.0])
    s = dpp_step(tiny_problem, s0)
    assert s.x[0] == 0.0
    assert s.queue[0] == 99.0


def test_dpp_zero_constraint_is_plain_minimisation():
    prob = CoupledProblem(agents=(scalar_agent(1.5, 0.0, 0.0), scalar_agent(0.5, 0.0, 0.0)))
    res = run_dpp(prob, 20, v=2.0)
    np.testing.assert_array_equal(res.final_state.x, [1.5, 0.5])
    assert res.final_state.queue[0] == 0.0


def test_dpp_rejects_bad_v(tiny_problem):
    with pytest.raises(InvalidInputError):
        dpp_step(tiny_problem, DppState.initial(tiny_problem, 1.0), v=0.0)
    with pytest.raises(InvalidInputError):
        run_dpp(tiny_problem, 0)


def test_dpp_matches_loop_reference(pinned_problem):
    a, d, cap = slice_arrays(pinned_problem)
    xs, mus = loop_dpp(a.tolist(), d.tolist(), cap, 7.0, 200)
    state = DppState.initial(pinned_problem, 7.0)
    for k in range(200):
        state = dpp_step(pinned_problem, state)
        np.testing.assert_allclose(state.x, xs[k], atol=1e-12)
        assert state.queue[0] == pytest.approx(mus[k], rel=1e-12, abs=1e-12)


def test_dpp_per_agent_equals_joint_argmin():
    prob = random_resource_allocation(4, seed=9)
    lay = prob.layout
    state = DppState.initial(prob, 3.0)
    state.queue = np.array([1.3])
    got = dpp_step(prob, state).x

    def joint(x):
        return 3.0 * float(lay.objective_values(x).sum()) + 1.3 * float(lay.constraint_values(x).sum())

    ref = minimize(joint, np.ones(4), bounds=list(zip(lay.lower, lay.upper)), method="L-BFGS-B",
                   options={"ftol": 1e-15, "gtol": 1e-12})
    np.testing.assert_allclose(got, ref.x, atol=1e-6)


@given(st.integers(0, 500), st.integers(1, 8))
def test_dpp_queue_dominates_cumulative_constraint(seed, n):
    prob = random_resource_allocation(n, seed=seed, require_binding=False)
    res = run_dpp(prob, 150)
    assert res.min_lemma1_slack >= -1e-9


def test_dual_subgrad_first_step_is_unconstrained(pinned_problem, pinned_schedule):
    a, _, _ = slice_arrays(pinned_problem)
    s = dual_subgrad_step(pinned_problem, pinned_schedule, DualSubgradState.initial(pinned_problem), 0, harmonic_step())
    np.testing.assert_allclose(s.x, np.clip(a, 0, 2))


def test_dual_subgrad_single_agent_is_classical_ascent(tiny_problem):
    sched = static_schedule(np.eye(1))
    state = DualSubgradState.initial(tiny_problem)
    lam = 0.0
    for t in range(50):
        state = dual_subgrad_step(tiny_problem, sched, state, t, harmonic_step(2.0))
        x = min(max(0.0 - lam, 0.0), 2.0)
        lam = max(lam + 2.0 / (t + 1) * (x - 1.0), 0.0)
        assert state.x[0] == pytest.approx(x, abs=1e-15)
        assert state.dual[0, 0] == pytest.approx(lam, abs=1e-15)


def test_dual_subgrad_rejects_nonpositive_step(tiny_problem):
    with pytest.raises(InvalidInputError):
        dual_subgrad_step(tiny_problem, static_schedule(np.eye(1)), DualSubgradState.initial(tiny_problem), 0,
                          lambda t: 0.0)


@given(st.integers(0, 500), st.integers(2, 8), st.floats(0.5, 10))
def test_dual_variables_stay_nonnegative(seed, n, scale):
    prob = random_resource_allocation(n, seed=seed, require_binding=False)
    sched = make_ring_partition_schedule(n, min(n, 3))
    state = DualSubgradState.initial(prob)
    for t in range(80):
        state = dual_subgrad_step(prob, sched, state, t, harmonic_step(scale))
        assert np.all(state.dual >= 0)


def test_run_dual_subgrad_records(pinned_problem, pinned_schedule, pinned_oracle):
    res = run_dual_subgrad(pinned_problem, pinned_schedule, 50, f_star=pinned_oracle.f_star)
    assert res.records[-1].t == 50
    assert res.records[-1].drift is None and res.records[-1].lemma1_slack is None
