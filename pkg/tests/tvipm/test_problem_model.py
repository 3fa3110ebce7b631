import math

import numpy as np
import pytest

from tvipm.errors import EvaluationError
from tvipm.problem_model import (
    AffineSystem,
    ScalarField,
    TimeVaryingProblem,
    affine_constraint,
    eval_constraint_values,
    eval_derivative_bundle,
    fd_time_partials,
    min_hessian_eigenvalue,
    quadratic_objective,
)
from tvipm.scenarios import (
    StaticGoal,
    build_l1ls,
    build_projected_goal_problem,
    build_tvqp,
    reference_workspace,
)
from tests.problems import scalar_tracking, without_time_partials


def _shifted_square():
    # ½(x + sin t)²
    return ScalarField(
        value=lambda x, t: 0.5 * (x[0] + math.sin(t)) ** 2,
        grad=lambda x, t: np.array([x[0] + math.sin(t)]),
        hess=lambda x, t: np.eye(1),
    )


def test_bundle_of_shifted_square_at_origin():
    problem = TimeVaryingProblem(dimension=1, objective=_shifted_square())
    bundle = eval_derivative_bundle(problem, [0.0], 0.0)
    assert bundle.f0 == 0.0
    assert np.allclose(bundle.grad_f0, [0.0])
    assert np.allclose(bundle.hess_f0, [[1.0]])
    assert bundle.grad_t_f0[0] == pytest.approx(1.0, abs=1e-8)


def test_time_invariant_objective_has_no_time_partial():
    problem = TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(np.eye(2), center=lambda t: np.zeros(2)),
    )
    bundle = eval_derivative_bundle(problem, [1.0, 1.0], 3.7)
    assert np.allclose(bundle.grad_t_f0, 0.0, atol=1e-10)


def test_tvqp_start_is_infeasible(tvqp):
    bundle = eval_derivative_bundle(tvqp, [-2.0, 0.0], 0.0)
    assert np.allclose(bundle.f_ineq, [1.0])
    assert np.allclose(bundle.hess_f0, np.diag([1.0, 3.0]))
    assert bundle.hess_ineq.shape == (1, 2, 2)
    assert not np.any(bundle.hess_ineq)
    assert bundle.num_inequalities == 1
    assert bundle.num_equalities == 0


def test_bundle_arrays_are_read_only(tvqp):
    bundle = eval_derivative_bundle(tvqp, [-2.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        bundle.grad_f0[0] = 1.0


def test_fd_time_partials_exact_for_affine_time_dependence():
    oracle = ScalarField(
        value=lambda x, t: x[0] * t,
        grad=lambda x, t: np.array([t]),
        hess=lambda x, t: np.zeros((1, 1)),
    )
    dt_value, grad_t = fd_time_partials(oracle, [3.0], 2.0, h=1e-4)
    assert dt_value == pytest.approx(3.0, rel=1e-10)
    assert grad_t[0] == pytest.approx(1.0, rel=1e-10)


def test_fd_time_partials_of_shifted_square():
    _, grad_t = fd_time_partials(_shifted_square(), [0.0], 0.0, h=1e-5)
    assert grad_t[0] == pytest.approx(1.0, abs=1e-9)


def test_fd_time_partials_of_time_invariant_field():
    oracle = ScalarField(
        value=lambda x, t: float(x @ x),
        grad=lambda x, t: 2 * x,
        hess=lambda x, t: 2 * np.eye(2),
    )
    dt_value, grad_t = fd_time_partials(oracle, [1.0, -2.0], 1.5)
    assert dt_value == 0.0
    assert np.all(grad_t == 0.0)


def test_fd_time_partials_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_time_partials(_shifted_square(), [0.0], 0.0, h=0.0)


def test_analytic_and_fd_time_partials_agree():
    analytic = build_tvqp()
    numeric = TimeVaryingProblem(
        dimension=2,
        objective=without_time_partials(analytic.objective),
        inequality_constraints=tuple(
            without_time_partials(c) for c in analytic.inequality_constraints
        ),
    )
    rng = np.random.default_rng(3)
    for _ in range(100):
        x = rng.uniform(-3, 3, 2)
        t = rng.uniform(0, 2 * math.pi)
        exact = eval_derivative_bundle(analytic, x, t)
        approx = eval_derivative_bundle(numeric, x, t)
        assert np.allclose(approx.grad_t_f0, exact.grad_t_f0, rtol=1e-6, atol=1e-8)
        assert np.allclose(approx.dt_ineq, exact.dt_ineq, rtol=1e-6, atol=1e-8)
        assert np.allclose(approx.grad_t_ineq, exact.grad_t_ineq, atol=1e-8)


def test_affine_block_follows_scalar_constraints():
    block = AffineSystem.constant([[0.0, 1.0]], [2.0])
    problem = TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(np.eye(2), center=lambda t: np.zeros(2)),
        inequality_constraints=(affine_constraint([1.0, 0.0], 1.0),),
        affine_inequalities=block,
    )
    x = np.array([0.5, -1.0])
    bundle = eval_derivative_bundle(problem, x, 0.0)
    assert problem.num_inequalities == 2
    assert np.allclose(bundle.f_ineq, [-0.5, -3.0])
    assert np.allclose(bundle.grads_ineq, [[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(eval_constraint_values(problem, x, 0.0), bundle.f_ineq)
    assert bundle.hess_ineq.shape == (2, 2, 2)


def test_non_finite_objective_reports_index_zero():
    problem = scalar_tracking(center=lambda t: math.nan)
    with pytest.raises(EvaluationError) as info:
        eval_derivative_bundle(problem, [0.0], 0.0)
    assert info.value.index == 0


def test_non_finite_constraint_reports_its_index():
    bad = ScalarField(
        value=lambda x, t: math.inf,
        grad=lambda x, t: np.zeros(1),
        hess=lambda x, t: np.zeros((1, 1)),
    )
    problem = TimeVaryingProblem(
        dimension=1,
        objective=scalar_tracking().objective,
        inequality_constraints=(affine_constraint([1.0], 1.0), bad),
    )
    with pytest.raises(EvaluationError) as info:
        eval_derivative_bundle(problem, [0.0], 0.0)
    assert info.value.index == 2


def test_negative_time_is_rejected(tvqp):
    with pytest.raises(ValueError):
        eval_derivative_bundle(tvqp, [0.0, 0.0], -0.1)


def test_equality_needs_fewer_rows_than_variables():
    with pytest.raises(ValueError):
        TimeVaryingProblem(
            dimension=1,
            objective=scalar_tracking().objective,
            equality=AffineSystem.constant([[1.0]], [0.0]),
        )


def test_strong_convexity_must_be_positive():
    with pytest.raises(ValueError):
        TimeVaryingProblem(
            dimension=1, objective=scalar_tracking().objective, strong_convexity=0.0
        )


def _moving_robot():
    workspace = reference_workspace(StaticGoal((0.0, 0.0)), controller_gain=0.01)
    return build_projected_goal_problem((-15.0, -15.0), workspace, x_hat=(-14.0, -14.0))


def _small_l1ls():
    return build_l1ls(seed=0, m=6, n=8, k_sparsity=2)[1]


@pytest.mark.parametrize("build", [build_tvqp, _moving_robot, _small_l1ls])
def test_hessian_bounded_below_by_declared_modulus(build):
    problem = build()
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = rng.normal(size=problem.dimension)
        bundle = eval_derivative_bundle(problem, x, rng.uniform(0, 6))
        assert min_hessian_eigenvalue(bundle) >= problem.strong_convexity - 1e-12


def test_non_finite_affine_block_reports_its_index():
    problem = TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(np.eye(2), center=lambda t: np.zeros(2)),
        inequality_constraints=(affine_constraint([1.0, 0.0], 1.0),),
        affine_inequalities=AffineSystem.constant([[0.0, 1.0]], [math.nan]),
    )
    with pytest.raises(EvaluationError) as info:
        eval_constraint_values(problem, [0.0, 0.0], 0.0)
    assert info.value.index == 2
