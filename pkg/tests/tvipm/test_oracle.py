import math

import numpy as np
import pytest

from tvipm.errors import OracleFailure
from tvipm.integrator import IntegratorConfig, Mode, Sample, Trajectory, integrate
from tvipm.oracle import (
    OracleConfig,
    kkt_residual,
    solve_equality_qp,
    solve_static,
    tracking_error,
)
from tvipm.problem_model import TimeVaryingProblem, affine_constraint
from tvipm.scenarios import TvqpScenario
from tests.problems import scalar_tracking


def _infeasible():
    # x <= -1 and x >= 1
    return TimeVaryingProblem(
        dimension=1,
        objective=scalar_tracking().objective,
        inequality_constraints=(
            affine_constraint([1.0], -1.0),
            affine_constraint([-1.0], -1.0),
        ),
    )


def test_static_inactive_constraint(tvqp):
    x, lambdas, nu = solve_static(tvqp, 0.0)
    assert np.allclose(x, [0.0, -1.0], atol=1e-8)
    assert abs(lambdas[0]) <= 1e-6
    assert nu.shape == (0,)


def test_static_active_constraint(tvqp):
    solution = solve_static(tvqp, math.pi / 2)
    assert np.allclose(solution.x_star, [-0.25, -0.25], atol=1e-8)
    assert solution.lambda_star[0] == pytest.approx(0.75, abs=1e-6)
    assert solution.kkt_residual <= 1e-8


def test_static_equality_only(sum_constraint):
    x, lambdas, nu = solve_static(sum_constraint, 3.0)
    assert np.allclose(x, [1.5, 1.5])
    assert np.allclose(nu, [-1.5])
    assert lambdas.shape == (0,)


def test_static_unconstrained(tracking):
    x, _, _ = solve_static(tracking, 1.0)
    assert np.allclose(x, [math.sin(1.0), -math.cos(1.0)])


def test_static_rejects_negative_time(tvqp):
    with pytest.raises(ValueError):
        solve_static(tvqp, -1.0)


def test_static_reports_infeasibility():
    problem = _infeasible()
    with pytest.raises(OracleFailure):
        solve_static(problem, 0.0, OracleConfig(max_phase1_stages=5))


def test_kkt_residual(tvqp):
    assert kkt_residual(tvqp, 0.0, [0.0, -1.0], [0.0], []) == pytest.approx(0.0)
    assert kkt_residual(tvqp, 0.0, [0.0, 0.0], [0.0], []) == pytest.approx(3.0)
    # negative multiplier
    assert kkt_residual(tvqp, 0.0, [0.0, -1.0], [-0.5], []) >= 0.5


def test_equality_qp():
    x, nu = solve_equality_qp(np.eye(2), np.zeros(2), [[1.0, 1.0]], [1.0])
    assert np.allclose(x, [0.5, 0.5])
    assert np.allclose(nu, [-0.5])


def test_equality_qp_matches_static_solve_on_active_set(tvqp):
    t = 2.0
    x, nu = solve_equality_qp(
        np.diag([1.0, 3.0]),
        [math.sin(t), 3.0 * math.cos(t)],
        [[-1.0, 1.0]],
        [math.cos(t)],
    )
    solution = solve_static(tvqp, t)
    assert np.allclose(solution.x_star, x, atol=1e-8)
    assert solution.lambda_star[0] == pytest.approx(nu[0], abs=1e-6)


def test_oracle_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(tol=0.0).validate()
    with pytest.raises(ValueError):
        OracleConfig(c_factor=1.0).validate()


def _tvqp_trajectory(t_end=2.0):
    scenario = TvqpScenario()
    return integrate(
        scenario.problem,
        Mode.BARRIER,
        scenario.gains,
        scenario.schedules,
        IntegratorConfig(tau=0.1, t_end=t_end),
        scenario.x0,
    )


def test_tracking_error_is_independent_of_workers(tvqp):
    traj = _tvqp_trajectory()
    serial = tracking_error(traj, tvqp)
    threaded = tracking_error(traj, tvqp, workers=2)
    assert len(serial) == len(traj) == 21
    assert np.array_equal(serial.errors, threaded.errors)
    assert not serial.failed.any()


def test_tracking_error_stride(tvqp):
    traj = _tvqp_trajectory()
    series = tracking_error(traj, tvqp, sample_stride=5)
    assert np.allclose(series.times, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_tracking_error_of_exact_optimum(tvqp):
    samples = [
        Sample(t, np.array([-math.sin(t), -math.cos(t)]), 0.0) for t in (0.0, 0.5)
    ]
    series = tracking_error(Trajectory(Mode.BARRIER, samples), tvqp)
    assert series.max_error() <= 1e-8
    assert math.isnan(series.max_error(t_min=1.0))


def test_tracking_error_flags_oracle_failures():
    samples = [Sample(0.0, np.zeros(1), 0.0), Sample(0.1, np.zeros(1), 0.0)]
    series = tracking_error(
        Trajectory(Mode.BARRIER, samples),
        _infeasible(),
        config=OracleConfig(max_phase1_stages=5),
    )
    assert series.failed.all()
    assert np.isnan(series.errors).all()
    assert math.isnan(series.max_error())


def test_tracking_error_rejects_empty_trajectory(tvqp):
    with pytest.raises(ValueError):
        tracking_error(Trajectory(Mode.BARRIER), tvqp)
    with pytest.raises(ValueError):
        tracking_error(_tvqp_trajectory(0.1), tvqp, sample_stride=0)
