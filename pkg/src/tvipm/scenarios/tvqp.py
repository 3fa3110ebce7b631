"""
Time-varying quadratic program

    minimize    ½(x1 + sin t)² + (3/2)(x2 + cos t)²
    subject to  x2 - x1 - cos t <= 0

started from the infeasible point (-2, 0).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ..barrier import BarrierSchedules
from ..dynamics import GainSettings
from ..integrator import IntegratorConfig
from ..problem_model import TimeVaryingProblem, affine_constraint, quadratic_objective

TVQP_HESSIAN = np.diag([1.0, 3.0])
TVQP_CONSTRAINT = np.array([-1.0, 1.0])


def build_tvqp() -> TimeVaryingProblem:
    objective = quadratic_objective(
        TVQP_HESSIAN,
        center=lambda t: np.array([-math.sin(t), -math.cos(t)]),
        center_rate=lambda t: np.array([-math.cos(t), math.sin(t)]),
    )
    constraint = affine_constraint(
        TVQP_CONSTRAINT, 0.0, h_rate=lambda t: -math.sin(t), h_fun=math.cos
    )
    return TimeVaryingProblem(
        dimension=2,
        objective=objective,
        inequality_constraints=(constraint,),
        strong_convexity=1.0,
        name="tvqp",
    )


def tvqp_optimum(t: float) -> np.ndarray:
    """
    Closed-form minimizer at time ``t``.

    The constraint is active exactly when sin t - 2 cos t > 0, with
    multiplier μ = ¾ (sin t - 2 cos t).
    """
    unconstrained = np.array([-math.sin(t), -math.cos(t)])
    violation = math.sin(t) - 2.0 * math.cos(t)
    if violation <= 0:
        return unconstrained
    mu = 0.75 * violation
    return unconstrained - mu * np.linalg.solve(TVQP_HESSIAN, TVQP_CONSTRAINT)


@dataclass(frozen=True)
class TvqpScenario:
    problem: TimeVaryingProblem = field(default_factory=build_tvqp)
    gains: GainSettings = GainSettings(alpha=5.0)
    schedules: BarrierSchedules = BarrierSchedules(
        c0=10.0, gamma_c=1.0, s0=2.0, gamma_s=5.0
    )
    integrator: IntegratorConfig = IntegratorConfig(tau=0.1, t_end=2 * math.pi)
    x0: tuple = (-2.0, 0.0)
