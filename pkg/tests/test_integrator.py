import math

import numpy as np
import pytest

import _oracle_values as oracle
from mmodecomp.errors import (
    MaxStepsExceeded,
    NonFiniteState,
    SectionNotReached,
    StepSizeUnderflow,
)
from mmodecomp.integrator import (
    EventSpec,
    OdeProblem,
    flow_to_section,
    solve_adaptive,
)
from mmodecomp.koper_model import KoperParams, desingularized_slow_flow


def decay(t, y):
    return -y


def test_exponential_decay_endpoint():
    prob = OdeProblem(1, decay, 0.0, np.array([1.0]))
    res = solve_adaptive(prob, 1.0)
    assert abs(res.y_final[0] - math.exp(-1.0)) <= 1e-8


def test_constant_field_exact():
    prob = OdeProblem(1, lambda t, y: np.array([0.0]), 0.0, np.array([3.5]))
    res = solve_adaptive(prob, 7.0)
    assert res.y_final[0] == 3.5


def test_koper_slow_flow_section_pinned():
    # flow on the upper attracting sheet from (2, -8) to the x=1.1 section
    params = KoperParams(lam=oracle.LAM, mu=oracle.MU)

    def rhs(t, s):
        return desingularized_slow_flow(s, params)

    prob = OdeProblem(2, rhs, 0.0, np.array([2.0, -8.0]))
    state, t = flow_to_section(prob, EventSpec(lambda s: s[0] - 1.1), 40.0)
    assert state[0] == pytest.approx(1.1, abs=1e-10)
    assert state[1] == pytest.approx(oracle.SECTION_CROSS_STATE[1], abs=1e-6)
    assert t == pytest.approx(oracle.SECTION_CROSS_TIME, abs=1e-6)


def test_linear_motion_crossing():
    prob = OdeProblem(1, lambda t, y: np.array([1.0]), 0.0, np.array([0.0]))
    state, t = flow_to_section(prob, EventSpec(lambda s: s[0] - 2.0), 10.0)
    assert t == pytest.approx(2.0, abs=1e-10)
    assert state[0] == pytest.approx(2.0, abs=1e-10)


def test_section_already_satisfied_any_direction():
    prob = OdeProblem(1, lambda t, y: np.array([1.0]), 0.0, np.array([2.0]))
    state, t = flow_to_section(prob, EventSpec(lambda s: s[0] - 2.0), 10.0)
    assert t == 0.0 and state[0] == 2.0


def test_start_on_section_with_direction_does_not_self_trigger():
    # moving away from the section; a falling-only event must not fire at t0
    prob = OdeProblem(1, lambda t, y: np.array([1.0]), 0.0, np.array([0.0]))
    spec = EventSpec(lambda s: s[0], direction="falling")
    res = solve_adaptive(prob, 1.0, events=[spec])
    assert res.events == []


def test_section_not_reached():
    prob = OdeProblem(1, lambda t, y: np.array([-1.0]), 0.0, np.array([0.0]))
    with pytest.raises(SectionNotReached) as err:
        flow_to_section(prob, EventSpec(lambda s: s[0] - 2.0), 5.0)
    assert err.value.last_time == pytest.approx(5.0)


def test_max_steps_exceeded():
    prob = OdeProblem(1, decay, 0.0, np.array([1.0]))
    with pytest.raises(MaxStepsExceeded):
        solve_adaptive(prob, 100.0, max_steps=3)


def test_non_finite_state():
    def blow_up(t, y):
        return y * y  # finite-time blowup at t = 1

    prob = OdeProblem(1, blow_up, 0.0, np.array([1.0]), max_step=0.5)
    with pytest.raises((NonFiniteState, StepSizeUnderflow)):
        solve_adaptive(prob, 2.0)


def test_validation_errors():
    with pytest.raises(ValueError):
        OdeProblem(0, decay, 0.0, np.array([]))
    with pytest.raises(ValueError):
        OdeProblem(1, decay, 0.0, np.array([1.0]), abs_tol=0.0)
    with pytest.raises(ValueError):
        OdeProblem(2, decay, 0.0, np.array([1.0]))
    with pytest.raises(ValueError):
        EventSpec(lambda s: s[0], direction="sideways")


def _endpoint_error(tol):
    prob = OdeProblem(1, decay, 0.0, np.array([1.0]),
                      abs_tol=tol, rel_tol=tol)
    res = solve_adaptive(prob, 1.0)
    return abs(res.y_final[0] - math.exp(-1.0))


def test_tolerance_tightening_monotone():
    errors = [_endpoint_error(10.0**-k) for k in range(5, 11)]
    assert all(e1 >= e2 for e1, e2 in zip(errors, errors[1:]))


def test_convergence_order_at_least_four():
    # force fixed steps via max_step with slack tolerances; the propagated
    # solution of the embedded pair is 5th order on smooth problems
    def rhs(t, y):
        return np.array([y[0] * math.sin(t)])

    errors = []
    steps = [0.2, 0.1, 0.05]
    for h in steps:
        prob = OdeProblem(1, rhs, 0.0, np.array([1.0]),
                          abs_tol=10.0, rel_tol=10.0, max_step=h)
        res = solve_adaptive(prob, 2.0)
        exact = math.exp(1.0 - math.cos(2.0))
        errors.append(abs(res.y_final[0] - exact))
    order_a = math.log2(errors[0] / errors[1])
    order_b = math.log2(errors[1] / errors[2])
    assert min(order_a, order_b) >= 4.0


def test_dense_output_consistency():
    def rhs(t, y):
        return np.array([y[1], -y[0] * (1.0 + 0.3 * y[0] * y[0])])

    tol = 1e-8
    prob = OdeProblem(2, rhs, 0.0, np.array([1.0, 0.0]),
                      abs_tol=tol, rel_tol=tol)
    res = solve_adaptive(prob, 5.0)
    traj = res.trajectory
    times = traj.times
    for i in (1, len(times) // 2, len(times) - 2):
        t_mid = 0.5 * (times[i] + times[i + 1])
        ref_prob = OdeProblem(2, rhs, times[i], traj.states[i],
                              abs_tol=1e-12, rel_tol=1e-12)
        ref = solve_adaptive(ref_prob, t_mid)
        scale = tol + tol * np.abs(ref.y_final)
        assert np.all(np.abs(traj(t_mid) - ref.y_final) <= 10.0 * scale)


def test_dense_output_reproduces_nodes():
    prob = OdeProblem(1, decay, 0.0, np.array([1.0]))
    res = solve_adaptive(prob, 1.0)
    traj = res.trajectory
    for t, y in zip(traj.times, traj.states):
        assert traj(t)[0] == pytest.approx(y[0], abs=1e-14)


def test_event_idempotence():
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    prob = OdeProblem(2, rhs, 0.0, np.array([1.0, 0.0]))
    spec = EventSpec(lambda s: s[0], direction="any")
    res = solve_adaptive(prob, 20.0, events=[spec])
    assert len(res.events) == 6  # cos crosses zero six times before t=20
    for hit in res.events:
        assert abs(hit.y[0]) <= 1e-10


def test_time_reversal():
    def rhs(t, y):
        return np.array([y[1], -math.sin(y[0])])

    tol = 1e-10
    y0 = np.array([0.8, 0.1])
    prob = OdeProblem(2, rhs, 0.0, y0, abs_tol=tol, rel_tol=tol)
    fwd = solve_adaptive(prob, 3.0)
    back = OdeProblem(2, rhs, 3.0, fwd.y_final, abs_tol=tol, rel_tol=tol)
    res = solve_adaptive(back, 0.0)
    assert np.all(np.abs(res.y_final - y0) <= 100.0 * tol)


def test_terminal_event_truncates_trajectory():
    prob = OdeProblem(1, lambda t, y: np.array([1.0]), 0.0, np.array([0.0]))
    res = solve_adaptive(prob, 10.0,
                         events=[EventSpec(lambda s: s[0] - 1.0,
                                           terminal=True)])
    assert res.status == "terminal_event"
    assert res.trajectory.times[-1] == pytest.approx(1.0, abs=1e-12)
    assert res.t_final == pytest.approx(1.0, abs=1e-12)


def test_backward_integration():
    prob = OdeProblem(1, decay, 1.0, np.array([math.exp(-1.0)]))
    res = solve_adaptive(prob, 0.0)
    assert res.y_final[0] == pytest.approx(1.0, abs=1e-8)
