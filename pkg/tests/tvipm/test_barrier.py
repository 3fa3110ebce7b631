import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvipm.barrier import (
    BarrierSchedules,
    barrier_residuals,
    estimate_duals,
    eval_phi,
    eval_schedules,
    suboptimality_bound,
)
from tvipm.errors import DomainViolation
from tvipm.problem_model import eval_derivative_bundle
from tvipm.scenarios import (
    StaticGoal,
    build_l1ls,
    build_projected_goal_problem,
    build_tvqp,
    reference_workspace,
)
from tests.problems import scalar_barrier

H = 1e-5


def test_schedule_values_at_start():
    schedules = BarrierSchedules(c0=10.0, gamma_c=1.0, s0=2.0, gamma_s=5.0)
    values = eval_schedules(schedules, 0.0)
    assert values.c == 10.0
    assert values.c_dot == 10.0
    assert values.s == 2.0
    assert values.s_dot == -10.0


def test_frozen_schedule():
    for t in (0.0, 1.0, 100.0):
        values = eval_schedules(BarrierSchedules(c0=3.0, gamma_c=0.0), t)
        assert values.c == 3.0
        assert values.c_dot == 0.0


def test_schedule_is_capped():
    schedules = BarrierSchedules(c0=10.0, gamma_c=1.0, c_cap=100.0)
    values = eval_schedules(schedules, 10.0)
    assert values.c == 100.0
    assert values.c_dot == 0.0
    assert eval_schedules(schedules, 1.0).c == pytest.approx(10.0 * math.e)


def test_schedule_validation():
    with pytest.raises(ValueError):
        BarrierSchedules(c0=0.0).validate()
    with pytest.raises(ValueError):
        BarrierSchedules(gamma_s=-1.0).validate()
    with pytest.raises(ValueError):
        BarrierSchedules(c0=10.0, c_cap=1.0).validate()
    with pytest.raises(ValueError):
        eval_schedules(BarrierSchedules(), -1.0)


@given(
    c0=st.floats(0.1, 100.0),
    gamma_c=st.floats(0.0, 5.0),
    s0=st.floats(0.0, 10.0),
    gamma_s=st.floats(0.0, 5.0),
    t1=st.floats(0.0, 50.0),
    dt=st.floats(0.0, 50.0),
)
def test_schedules_are_monotone(c0, gamma_c, s0, gamma_s, t1, dt):
    schedules = BarrierSchedules(c0, gamma_c, s0, gamma_s, c_cap=1e6)
    early = eval_schedules(schedules, t1)
    late = eval_schedules(schedules, t1 + dt)
    assert c0 <= early.c <= late.c * (1 + 1e-12)
    assert late.c <= 1e6 * (1 + 1e-12)
    assert s0 >= early.s >= late.s >= 0.0
    assert early.c_dot >= 0.0 >= early.s_dot


def test_automatic_slack_makes_start_interior(tvqp):
    schedules = BarrierSchedules(s0=None).with_slack_for(tvqp, [-2.0, 0.0])
    assert schedules.s0 == 2.0
    assert BarrierSchedules(s0=0.5).with_slack_for(tvqp, [-2.0, 0.0]).s0 == 0.5


def test_scalar_phi_at_origin(scalar):
    phi = eval_phi(eval_derivative_bundle(scalar, [0.0], 0.0), c=1.0, s=0.0)
    assert np.allclose(phi.psi, [1.0])
    assert phi.phi == pytest.approx(0.0)
    assert np.allclose(phi.grad, [1.0])
    assert np.allclose(phi.hess, [[2.0]])
    assert np.allclose(phi.d_ds, [-1.0])
    assert np.allclose(phi.d_dc, [-1.0])


def test_scalar_phi_closer_to_boundary(scalar):
    phi = eval_phi(eval_derivative_bundle(scalar, [0.5], 0.0), c=1.0, s=0.0)
    assert np.allclose(phi.psi, [0.5])
    assert np.allclose(phi.grad, [2.5])


def test_phi_without_constraints(tracking):
    bundle = eval_derivative_bundle(tracking, [0.3, -0.2], 1.0)
    phi = eval_phi(bundle, c=5.0, s=1.0)
    assert phi.phi == pytest.approx(bundle.f0)
    assert np.allclose(phi.grad, bundle.grad_f0)
    assert np.allclose(phi.d_ds, 0.0)
    assert np.allclose(phi.d_dc, 0.0)
    assert np.allclose(phi.d_dt, bundle.grad_t_f0)


def test_phi_outside_domain(scalar):
    bundle = eval_derivative_bundle(scalar, [1.0], 0.0)
    with pytest.raises(DomainViolation) as info:
        eval_phi(bundle, c=1.0, s=0.0)
    assert info.value.index == 1


def test_phi_needs_positive_parameter(scalar):
    with pytest.raises(ValueError):
        eval_phi(eval_derivative_bundle(scalar, [0.0], 0.0), c=0.0, s=0.0)


def test_phi_skips_hessian(scalar):
    bundle = eval_derivative_bundle(scalar, [0.0], 0.0)
    phi = eval_phi(bundle, 1.0, 0.0, with_hessian=False)
    assert phi.hess is None


def test_bracket_combines_prediction_terms(scalar):
    phi = eval_phi(eval_derivative_bundle(scalar, [0.0], 0.0), c=1.0, s=0.0)
    assert np.allclose(phi.bracket(1.0, 1.0, 0.0), [0.0])
    assert np.allclose(phi.prediction_terms(2.0, 3.0), 2.0 * phi.d_dc + 3.0 * phi.d_ds)


def test_barrier_residuals_reports_first_violation():
    with pytest.raises(DomainViolation) as info:
        barrier_residuals(np.array([-1.0, 0.5, 2.0]), 0.5)
    assert info.value.index == 2


def test_estimate_duals():
    assert np.allclose(estimate_duals([1.0], 1.0).lambdas, [1.0])
    assert np.allclose(estimate_duals([0.5, 2.0], 10.0).lambdas, [0.2, 0.05])
    with pytest.raises(DomainViolation):
        estimate_duals([0.5, 0.0], 1.0)


def test_suboptimality_bound():
    assert suboptimality_bound(1, 10.0, [0.75], 2.0) == pytest.approx(1.6)
    assert suboptimality_bound(1, 1e12, [0.75], 0.0) == pytest.approx(1e-12)
    assert suboptimality_bound(0, 1.0, [], 5.0) == 0.0


def _phi(problem, x, t, c, s, hessian=False):
    return eval_phi(eval_derivative_bundle(problem, x, t), c, s, with_hessian=hessian)


def _central(f, h=H):
    return (f(h) - f(-h)) / (2 * h)


def _assert_close(value, reference):
    error = np.linalg.norm(np.asarray(value) - np.asarray(reference))
    assert error <= 1e-6 * max(np.linalg.norm(reference), 1e-2)


def _check_partials(problem, x, t, c, s):
    phi = _phi(problem, x, t, c, s, hessian=True)
    basis = np.eye(len(x))

    grad = [_central(lambda h: _phi(problem, x + h * e, t, c, s).phi) for e in basis]
    hess = np.column_stack(
        [_central(lambda h: _phi(problem, x + h * e, t, c, s).grad) for e in basis]
    )
    _assert_close(phi.grad, grad)
    _assert_close(phi.hess, hess)
    _assert_close(phi.d_ds, _central(lambda h: _phi(problem, x, t, c, s + h).grad))
    _assert_close(phi.d_dc, _central(lambda h: _phi(problem, x, t, c + h, s).grad))
    _assert_close(phi.d_dt, _central(lambda h: _phi(problem, x, t + h, c, s).grad))


def _interior_points(problem, sampler, min_psi, count=100, seed=0):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        x, t = sampler(rng)
        s = rng.uniform(0.0, 1.0)
        bundle = eval_derivative_bundle(problem, x, t)
        if np.all(s - bundle.f_ineq >= min_psi):
            points.append((x, t, rng.uniform(1.0, 20.0), s))
    return points


def test_tvqp_barrier_partials_match_finite_differences():
    problem = build_tvqp()

    def sampler(rng):
        return rng.uniform(-3.0, 3.0, 2), rng.uniform(0.5, 6.0)

    for x, t, c, s in _interior_points(problem, sampler, min_psi=0.3):
        _check_partials(problem, x, t, c, s)


def test_robot_barrier_partials_match_finite_differences():
    workspace = reference_workspace(StaticGoal((0.0, 0.0)), controller_gain=0.05)
    x_c = np.array([-15.0, -14.0])
    problem = build_projected_goal_problem(
        x_c, workspace, x_hat=np.array([-13.0, -12.5]), t0=5.0
    )

    def sampler(rng):
        return x_c + rng.uniform(-1.0, 1.0, 2), rng.uniform(4.0, 6.0)

    for x, t, c, s in _interior_points(problem, sampler, min_psi=1.0):
        _check_partials(problem, x, t, c, s)


def test_l1ls_barrier_partials_match_finite_differences():
    _, problem = build_l1ls(seed=1, m=4, n=3, k_sparsity=1)

    def sampler(rng):
        x = rng.uniform(-1.0, 1.0, 3)
        u = np.abs(x) + rng.uniform(0.3, 1.0, 3)
        return np.concatenate([x, u]), rng.uniform(0.0, 1.0) + 1.0

    for x, t, c, s in _interior_points(problem, sampler, min_psi=0.3):
        _check_partials(problem, x, t, c, s)
