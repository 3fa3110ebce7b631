import math

import numpy as np

from tvipm.problem_model import (
    AffineSystem,
    ScalarField,
    TimeVaryingProblem,
    affine_constraint,
    quadratic_objective,
)


def scalar_tracking(center=math.sin, rate=math.cos, bound=None, analytic=True):
    """
    f0 = ½(x - r(t))² with an optional constraint x - bound <= 0.
    """
    objective = quadratic_objective(
        np.eye(1),
        center=lambda t: np.array([center(t)]),
        center_rate=(lambda t: np.array([rate(t)])) if analytic else None,
    )
    constraints = () if bound is None else (affine_constraint([1.0], bound),)
    return TimeVaryingProblem(
        dimension=1,
        objective=objective,
        inequality_constraints=constraints,
        name="scalar",
    )


def scalar_barrier(center=lambda t: 0.0, rate=lambda t: 0.0, bound=1.0):
    return scalar_tracking(center, rate, bound)


def moving_center():
    """
    f0 = ½(x1 - sin t)² + ½(x2 + cos t)² on R².
    """
    return TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(
            np.eye(2),
            center=lambda t: np.array([math.sin(t), -math.cos(t)]),
            center_rate=lambda t: np.array([math.cos(t), math.sin(t)]),
        ),
        name="moving_center",
    )


def sum_equals_time():
    """
    min ½‖x‖² s.t. x1 + x2 = t, with x*(t) = (t/2, t/2) and ν*(t) = -t/2.
    """
    zero = np.zeros(2)
    return TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(
            np.eye(2), center=lambda t: zero, center_rate=lambda t: zero
        ),
        equality=AffineSystem(
            matrices=lambda t: (np.ones((1, 2)), np.array([t])),
            rates=lambda t: (np.zeros((1, 2)), np.array([1.0])),
        ),
        name="sum_equals_time",
    )


def without_time_partials(field: ScalarField) -> ScalarField:
    return ScalarField(field.value, field.grad, field.hess)
