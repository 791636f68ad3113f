import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bdpp.core import (
    NetworkState,
    ParamSchedule,
    RecordPolicy,
    initial_point,
    mix_queues,
    queue_update,
    run,
    step,
    with_f_star,
)
from bdpp.errors import InvalidInputError
from bdpp.network import make_ring_partition_schedule, static_schedule
from bdpp.problem import random_resource_allocation

from conftest import slice_arrays
from oracles import loop_bdpp


def test_mix_queues_identity():
    mu = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(mix_queues(mu, static_schedule(np.eye(2)).rounds[0]), mu)


def test_mix_queues_averaging():
    mu = np.array([[1.0, 0.0], [0.0, 2.0]])
    out = mix_queues(mu, static_schedule(np.full((2, 2), 0.5)).rounds[0])
    np.testing.assert_array_equal(out, [[0.5, 1.0], [0.5, 1.0]])


def test_mix_queues_conserves_sum_and_rejects_bad_shape():
    s = make_ring_partition_schedule(5, 2)
    mu = np.random.default_rng(0).uniform(0, 3, (5, 3))
    for r in s.rounds:
        np.testing.assert_allclose(mix_queues(mu, r).sum(axis=0), mu.sum(axis=0), atol=1e-12)
    with pytest.raises(InvalidInputError):
        mix_queues(np.zeros((4, 1)), s.rounds[0])


def test_queue_update_examples():
    np.testing.assert_allclose(queue_update([0.5], [-1.0], 0.1), [0.1])
    np.testing.assert_allclose(queue_update([0.2, 0.0], [0.3, -0.1], 0.05), [0.55, 0.05])
    np.testing.assert_array_equal(queue_update([0.0], [0.0], 0.0), [0.0])


def test_single_step_hand_trace(tiny_problem):
    sched = static_schedule(np.eye(1))
    state = NetworkState.initial(tiny_problem, [np.zeros(1)])
    new, rec = step(tiny_problem, sched, ParamSchedule.default(0.27), state)
    assert new.x[0] == 0.0
    assert new.queue[0, 0] == pytest.approx(0.27, abs=1e-15)
    assert rec.t == 1
    # slack: mu_1 - g(x_1) - N gamma_1 = 0.27 + 1 - 0.27
    assert rec.lemma1_slack[0] == pytest.approx(1.0, abs=1e-15)
    assert rec.drift == pytest.approx(0.5 * 0.27**2, abs=1e-15)


def test_run_T1_matches_hand_trace(tiny_problem):
    res = run(tiny_problem, static_schedule(np.eye(1)), ParamSchedule.default(0.27), 1, x0=[np.zeros(1)])
    assert len(res.records) == 1
    assert res.final_state.queue[0, 0] == pytest.approx(0.27, abs=1e-15)


def test_param_schedule_default_values():
    ps = ParamSchedule.default(0.27)
    assert ps.at(4) == (2.0, 4.0, 0.135)
    with pytest.raises(InvalidInputError):
        ParamSchedule.default(-1.0)
    with pytest.raises(InvalidInputError):
        ParamSchedule.constant(1.0, 0.0).at(1)


def test_matches_loop_reference(pinned_problem, pinned_schedule):
    a, d, cap = slice_arrays(pinned_problem)
    x0 = initial_point(pinned_problem, 1)
    W = [r.mixing.tolist() for r in pinned_schedule.rounds]
    T = 300
    ref = loop_bdpp(a.tolist(), d.tolist(), cap, W, [float(v[0]) for v in x0], T, 0.27)
    res = run(pinned_problem, pinned_schedule, ParamSchedule.default(0.27), T, seed=1,
              policy=RecordPolicy(stride=1, dense_until=T))
    for k, rec in enumerate(res.records):
        assert rec.objective == pytest.approx(ref["objective"][k], rel=1e-10, abs=1e-12)
        assert rec.violation[0] == pytest.approx(ref["violation"][k], rel=1e-9, abs=1e-11)
        assert rec.drift == pytest.approx(ref["drift"][k], rel=1e-9, abs=1e-10)
        assert rec.lemma1_slack[0] == pytest.approx(ref["lemma1"][k], rel=1e-9, abs=1e-9)
    np.testing.assert_allclose(res.final_state.x, ref["x"][-1], atol=1e-10)
    np.testing.assert_allclose(res.final_state.queue[:, 0], ref["mu"][-1], rtol=1e-10, atol=1e-12)


def test_determinism(pinned_problem, pinned_schedule):
    a = run(pinned_problem, pinned_schedule, ParamSchedule.default(0.27), 200, seed=5)
    b = run(pinned_problem, pinned_schedule, ParamSchedule.default(0.27), 200, seed=5)
    for ra, rb in zip(a.records, b.records):
        assert ra.objective == rb.objective
        assert np.array_equal(ra.violation, rb.violation)
        assert ra.drift == rb.drift and ra.drift_bound == rb.drift_bound


def test_running_average_spot_checks(pinned_problem, pinned_schedule):
    ps = ParamSchedule.default(0.27)
    state = NetworkState.initial(pinned_problem, initial_point(pinned_problem, 2))
    xs = []
    for t in range(1000):
        state, _ = step(pinned_problem, pinned_schedule, ps, state, t)
        xs.append(state.x.copy())
        if state.t in (10, 100, 1000):
            np.testing.assert_allclose(state.avg_x, np.mean(xs, axis=0), atol=1e-10)


def test_record_policy():
    pol = RecordPolicy(stride=10, dense_until=5)
    kept = [t for t in range(1, 34) if pol.keep(t, 33)]
    assert kept == [1, 2, 3, 4, 5, 10, 20, 30, 33]
    with pytest.raises(InvalidInputError):
        RecordPolicy(stride=0)


def test_run_validation(pinned_problem):
    with pytest.raises(InvalidInputError):
        run(pinned_problem, make_ring_partition_schedule(10, 4), ParamSchedule.default(0.1), 0)
    with pytest.raises(InvalidInputError):
        run(pinned_problem, make_ring_partition_schedule(9, 4), ParamSchedule.default(0.1), 5)
    with pytest.raises(InvalidInputError):
        run(pinned_problem, make_ring_partition_schedule(10, 4), ParamSchedule.default(0.1), 5, x0=[[3.0]] * 10)


def test_with_f_star(tiny_problem):
    res = run(tiny_problem, static_schedule(np.eye(1)), ParamSchedule.default(0.27), 3, x0=[[0.0]])
    assert math.isnan(res.records[0].objective_error)
    fixed = with_f_star(res, 0.0)
    assert fixed.records[-1].objective_error == fixed.records[-1].objective


@st.composite
def scenarios(draw):
    n = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 10_000))
    window = draw(st.integers(1, max(1, n)))
    lazy = draw(st.floats(0.1, 1.0))
    c = draw(st.floats(0.0, 5.0))
    prob = random_resource_allocation(n, seed=seed, require_binding=False)
    sched = make_ring_partition_schedule(n, window, lazy) if n > 1 else static_schedule(np.eye(1))
    return prob, sched, c, seed


@given(scenarios())
def test_invariants_every_iteration(case):
    prob, sched, c, seed = case
    ps = ParamSchedule.default(c)
    lay = prob.layout
    state = NetworkState.initial(prob, initial_point(prob, seed))
    for t in range(60):
        state, rec = step(prob, sched, ps, state, t)
        gamma = ps.at(state.t)[2]
        assert np.all(state.x >= lay.lower) and np.all(state.x <= lay.upper)
        assert np.all(state.avg_x >= lay.lower - 1e-15) and np.all(state.avg_x <= lay.upper + 1e-15)
        assert np.all(state.queue >= gamma)
        assert rec.lemma1_slack.min() >= -1e-9


@given(scenarios())
def test_drift_bound_without_buffer(case):
    prob, sched, _, seed = case
    res = run(prob, sched, ParamSchedule.default(0.0), 60, seed=seed)
    assert res.max_drift_excess <= 1e-9


def test_drift_bound_fails_at_start_for_large_buffer(pinned_problem, pinned_schedule):
    # with all queues at zero the drift contains (N gamma)^2 / 2, while the bound's
    # buffer-only terms grow like N gamma^2; a large C therefore breaks it at t = 1
    res = run(pinned_problem, pinned_schedule, ParamSchedule.default(10.0), 5, seed=1)
    first = res.records[0]
    n = pinned_problem.n_agents
    assert first.drift >= 0.5 * (n * 10.0) ** 2
    assert first.drift > first.drift_bound
    assert res.drift_violations == [1]
