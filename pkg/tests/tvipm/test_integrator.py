import math

import numpy as np
import pytest

from tvipm.barrier import BarrierSchedules
from tvipm.dynamics import GainSettings
from tvipm.errors import StepFailure
from tvipm.integrator import (
    IntegratorConfig,
    Mode,
    euler_step,
    feasibility_guard,
    integrate,
)
from tvipm.problem_model import AffineSystem, TimeVaryingProblem, affine_constraint
from tvipm.scenarios import TvqpScenario
from tests.problems import moving_center, scalar_barrier, scalar_tracking

FROZEN = BarrierSchedules(c0=1.0, gamma_c=0.0, s0=0.0, gamma_s=0.0)


def test_euler_step():
    assert np.allclose(euler_step([-1.0], [1.0], 0.1), [0.9])
    assert np.allclose(euler_step([0.0, 0.0], [3.0, -1.0], 0.5), [3.0, -1.0])
    assert np.allclose(euler_step([1.0, 2.0], [-2.0, 0.0], 0.1), [-1.9, 0.2])


def _halfline():
    # f1 = x, so with s = 0 the residual is -x
    return TimeVaryingProblem(
        dimension=1,
        objective=scalar_tracking().objective,
        inequality_constraints=(affine_constraint([1.0], 0.0),),
    )


def test_guard_accepts_interior_candidate():
    config = IntegratorConfig()
    accepted = feasibility_guard([-0.5], [-0.3], _halfline(), FROZEN, 0.1, config)
    assert np.allclose(accepted, [-0.3])


def test_guard_shrinks_once_to_midpoint():
    events = []
    accepted = feasibility_guard(
        [-0.5], [0.1], _halfline(), FROZEN, 0.1, IntegratorConfig(), events
    )
    assert np.allclose(accepted, [-0.2])
    assert len(events) == 1
    assert events[0].backtracks == 1
    assert events[0].min_psi == pytest.approx(-0.1)


def test_guard_rejects_boundary_candidate():
    accepted = feasibility_guard(
        [-0.5], [0.0], _halfline(), FROZEN, 0.1, IntegratorConfig()
    )
    assert np.allclose(accepted, [-0.25])


def test_guard_gives_up():
    with pytest.raises(StepFailure) as info:
        feasibility_guard(
            [0.5], [1.0], _halfline(), FROZEN, 0.1, IntegratorConfig(max_backtracks=5)
        )
    assert info.value.backtracks == 5


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(tau=0.0).validate()
    with pytest.raises(ValueError):
        IntegratorConfig(tau=0.5, t_end=0.1).validate()
    with pytest.raises(ValueError):
        IntegratorConfig(guard_shrink=1.0).validate()
    with pytest.raises(ValueError):
        IntegratorConfig(method="midpoint").validate()
    with pytest.raises(ValueError):
        IntegratorConfig(method="rk4", line_search=True).validate()
    assert IntegratorConfig(tau=0.1, t_end=2 * math.pi).num_steps == 63


def test_perfect_prediction_tracks_sine():
    traj = integrate(
        scalar_tracking(),
        Mode.UNCONSTRAINED,
        GainSettings(),
        BarrierSchedules(),
        IntegratorConfig(tau=1e-3, t_end=2.0),
        [0.0],
    )
    assert traj.ok
    errors = np.abs(traj.states()[:, 0] - np.sin(traj.times()))
    assert np.max(errors) <= 5e-3


def test_gradient_decays_exponentially():
    rng = np.random.default_rng(2024)
    config = IntegratorConfig(tau=1e-3, t_end=5.0)
    starts = rng.uniform(-5.0, 5.0, (8, 2))
    # gradient at t=0 is x0 - (0, -1)
    starts = [x0 for x0 in starts if np.linalg.norm(x0 - [0.0, -1.0]) > 1.0]
    assert len(starts) >= 2
    for x0 in starts[:2]:
        traj = integrate(
            moving_center(),
            "unconstrained",
            GainSettings(alpha=2.0),
            FROZEN,
            config,
            x0,
        )
        norms = traj.grad_norms()
        mask = norms > 1e-2
        slope = np.polyfit(traj.times()[mask], np.log(norms[mask]), 1)[0]
        assert slope == pytest.approx(-2.0, rel=0.05)


def test_equality_dynamics_keep_feasible_start_feasible(sum_constraint):
    traj = integrate(
        sum_constraint,
        Mode.EQUALITY,
        GainSettings(alpha=2.0),
        FROZEN,
        IntegratorConfig(tau=1e-3, t_end=5.0),
        [0.0, 0.0],
    )
    assert traj.ok
    assert max(sample.eq_residual for sample in traj.samples) <= 1e-8
    final = traj.samples[-1]
    assert np.allclose(final.x, [final.t / 2, final.t / 2], atol=1e-6)
    assert np.allclose(final.nu, [-final.t / 2], atol=1e-6)


def test_equality_residual_decays_at_gain_rate(sum_constraint):
    alpha = 2.0
    traj = integrate(
        sum_constraint,
        Mode.EQUALITY,
        GainSettings(alpha=alpha),
        FROZEN,
        IntegratorConfig(tau=1e-3, t_end=5.0),
        [1.0, 1.0],
    )
    times = traj.times()
    residuals = np.array([sample.eq_residual for sample in traj.samples])
    assert residuals[0] == pytest.approx(2.0)
    slope = np.polyfit(times, np.log(residuals), 1)[0]
    assert slope == pytest.approx(-alpha, rel=0.05)
    ratio = residuals / (residuals[0] * np.exp(-alpha * times))
    assert np.all(np.abs(ratio - 1.0) <= 0.05)


def test_combined_dynamics_stay_on_equality(tvqp):
    problem = TimeVaryingProblem(
        dimension=2,
        objective=tvqp.objective,
        inequality_constraints=tvqp.inequality_constraints,
        equality=AffineSystem.constant([[1.0, 1.0]], [0.0]),
    )
    traj = integrate(
        problem,
        Mode.COMBINED,
        GainSettings(alpha=5.0),
        BarrierSchedules(c0=10.0, gamma_c=1.0, s0=None, gamma_s=5.0),
        IntegratorConfig(tau=0.01, t_end=2.0),
        [-2.0, 2.0],
    )
    assert traj.ok
    assert traj.samples[0].s == 4.0
    for sample in traj.samples:
        assert sample.eq_residual <= 1e-8
        assert np.min(sample.psi) > 0


def test_second_order_dynamics_settle_at_barrier_minimizer():
    problem = scalar_tracking(center=lambda t: 2.0, rate=lambda t: 0.0, bound=1.0)
    traj = integrate(
        problem,
        Mode.SECOND_ORDER,
        GainSettings(alpha=5.0, gamma_filter=1.0),
        FROZEN,
        IntegratorConfig(tau=0.01, t_end=20.0),
        [0.0],
    )
    assert traj.ok
    assert traj.samples[0].y.shape == (1,)
    assert traj.samples[-1].x[0] == pytest.approx((3.0 - math.sqrt(5.0)) / 2, abs=1e-3)
    assert all(np.min(sample.psi) > 0 for sample in traj.samples)


def test_rk4_is_more_accurate_than_euler():
    errors = {}
    for method in ("euler", "rk4"):
        traj = integrate(
            scalar_tracking(),
            Mode.UNCONSTRAINED,
            GainSettings(alpha=5.0),
            FROZEN,
            IntegratorConfig(tau=0.1, t_end=5.0, method=method),
            [0.0],
        )
        late = traj.times() >= 1.0
        errors[method] = np.max(
            np.abs(traj.states()[late, 0] - np.sin(traj.times()[late]))
        )
    assert errors["rk4"] < 0.1 * errors["euler"]


def test_line_search_keeps_iterates_interior():
    scenario = TvqpScenario()
    config = IntegratorConfig(tau=0.1, t_end=2 * math.pi, line_search=True)
    traj = integrate(
        scenario.problem,
        "barrier",
        scenario.gains,
        scenario.schedules,
        config,
        scenario.x0,
    )
    assert traj.ok
    assert all(np.min(sample.psi) > 0 for sample in traj.samples)


def test_automatic_slack(tvqp):
    traj = integrate(
        tvqp,
        Mode.BARRIER,
        GainSettings(),
        BarrierSchedules(c0=10.0, gamma_c=1.0, s0=None, gamma_s=5.0),
        IntegratorConfig(tau=0.1, t_end=0.5),
        [-2.0, 0.0],
    )
    assert traj.samples[0].s == 2.0
    assert traj.samples[0].c == 10.0


def test_record_stride_keeps_last_sample(tvqp):
    scenario = TvqpScenario()
    traj = integrate(
        tvqp,
        "barrier",
        scenario.gains,
        scenario.schedules,
        IntegratorConfig(tau=0.1, t_end=1.0, record_stride=3),
        scenario.x0,
    )
    assert [round(t, 10) for t in traj.times()] == [0.0, 0.3, 0.6, 0.9, 1.0]


def test_evaluation_error_ends_run_with_partial_trajectory():
    problem = scalar_tracking(center=lambda t: math.nan if t > 0.5 else 0.0)
    traj = integrate(
        problem,
        Mode.UNCONSTRAINED,
        GainSettings(),
        FROZEN,
        IntegratorConfig(tau=0.1, t_end=1.0),
        [0.0],
    )
    assert not traj.ok
    assert traj.error == "EvaluationError"
    assert len(traj) == 6


def test_mode_must_match_problem(tvqp, sum_constraint):
    gains, config = GainSettings(), IntegratorConfig()
    with pytest.raises(ValueError):
        integrate(tvqp, "unconstrained", gains, FROZEN, config, [0.0, 0.0])
    with pytest.raises(ValueError):
        integrate(sum_constraint, "barrier", gains, FROZEN, config, [0.0, 0.0])
    with pytest.raises(ValueError):
        integrate(
            sum_constraint,
            "equality",
            gains,
            FROZEN,
            IntegratorConfig(line_search=True),
            [0.0, 0.0],
        )
    with pytest.raises(ValueError):
        integrate(tvqp, "sideways", gains, FROZEN, config, [0.0, 0.0])


def test_initial_state_size_is_checked(sum_constraint):
    with pytest.raises(ValueError):
        integrate(
            sum_constraint,
            "equality",
            GainSettings(),
            FROZEN,
            IntegratorConfig(),
            [0.0],
        )


@pytest.mark.slow
def test_robust_dynamics_reach_gradient_floor_in_finite_time():
    problem = scalar_tracking(
        center=lambda t: 2.0 * math.sin(t), rate=lambda t: 2.0 * math.cos(t), bound=1.0
    )
    gains = GainSettings(alpha0=1.0, epsilon=1e-2, eta_bound=0.1)
    tau = 1e-4
    traj = integrate(
        problem,
        Mode.ROBUST,
        gains,
        BarrierSchedules(c0=10.0, gamma_c=0.0, s0=0.0, gamma_s=0.0),
        IntegratorConfig(tau=tau, t_end=2.0),
        [-1.0],
        prediction_noise=lambda t, x: np.array([0.1 * math.cos(7.0 * t)]),
    )
    assert traj.ok
    norms = traj.grad_norms()
    times = traj.times()
    reached = int(np.argmax(norms <= gains.epsilon))
    assert norms[reached] <= gains.epsilon
    deadline = (norms[0] - gains.epsilon) / (gains.alpha0 - gains.eta_bound)
    assert times[reached] <= deadline + 10 * tau
    assert np.all(norms[reached:] <= 2 * gains.epsilon)
