"""
Disk robot in a sphere world, steered toward a projected goal.

The robot center follows ẋ_c = -K(x_c - x̂) while x̂ tracks the
projection of the goal onto the collision-free local workspace

    LF(x_c) = {x in W shrunk by r : a_i(x_c)ᵀx <= b_i(x_c) for every obstacle}

through the barrier estimator dynamics. Both states share one clock and
take one Euler step per loop.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Tuple

import numpy as np

from ..barrier import BarrierSchedules, eval_phi, eval_schedules
from ..dynamics import GainSettings, barrier_field
from ..errors import CollisionError, GeometryError, StepFailure, TvipmError
from ..integrator import GuardEvent, IntegratorConfig
from ..problem_model import (
    AffineSystem,
    TimeVaryingProblem,
    eval_derivative_bundle,
    quadratic_objective,
)

WALL_NORMALS = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class GoalPath(Protocol):
    def position(self, t: float) -> np.ndarray:
        ...

    def velocity(self, t: float) -> np.ndarray:
        ...

    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class StaticGoal:
    point: Tuple[float, float] = (0.0, 0.0)

    def position(self, t: float) -> np.ndarray:
        return np.array(self.point, dtype=float)

    def velocity(self, t: float) -> np.ndarray:
        return np.zeros(2)

    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.position(0.0), self.position(0.0)


@dataclass(frozen=True)
class CircularGoal:
    """
    Goal moving counterclockwise on a circle, starting on the positive
    x-axis of ``center``.
    """

    radius: float = 15.0
    period: float = 2000.0
    center: Tuple[float, float] = (0.0, 0.0)

    @property
    def angular_speed(self) -> float:
        return 2.0 * math.pi / self.period

    def position(self, t: float) -> np.ndarray:
        angle = self.angular_speed * t
        offset = self.radius * np.array([math.cos(angle), math.sin(angle)])
        return np.array(self.center, dtype=float) + offset

    def velocity(self, t: float) -> np.ndarray:
        angle = self.angular_speed * t
        speed = self.radius * self.angular_speed
        return speed * np.array([-math.sin(angle), math.cos(angle)])

    def extent(self) -> Tuple[np.ndarray, np.ndarray]:
        center = np.array(self.center, dtype=float)
        return center - self.radius, center + self.radius


@dataclass(frozen=True)
class Obstacle:
    center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Workspace:
    """
    Axis-aligned box ``[lower, upper]`` with disk obstacles.

    :param robot_radius: Radius r of the disk robot.
    :param goal: Static point or time path of the destination.
    :param controller_gain: K of ẋ_c = -K(x_c - x̂).
    """

    lower: Tuple[float, float]
    upper: Tuple[float, float]
    obstacles: Tuple[Obstacle, ...]
    robot_radius: float
    goal: GoalPath
    controller_gain: float
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    radii: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.robot_radius > 0:
            raise ValueError(f"robot_radius must be positive, got {self.robot_radius}")
        if not self.controller_gain > 0:
            raise ValueError(
                f"controller_gain must be positive, got {self.controller_gain}"
            )
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        if not np.all(upper - lower > 2 * self.robot_radius):
            raise ValueError("workspace box is too small for the robot")

        centers = np.array([o.center for o in self.obstacles], dtype=float)
        radii = np.array([o.radius for o in self.obstacles], dtype=float)
        object.__setattr__(self, "centers", centers.reshape(len(self.obstacles), 2))
        object.__setattr__(self, "radii", radii)
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                distance = float(np.linalg.norm(self.centers[i] - self.centers[j]))
                if distance <= radii[i] + radii[j] + 2 * self.robot_radius:
                    raise ValueError(
                        f"obstacles {i} and {j} are too close for the robot to pass"
                    )

        goal_low, goal_high = self.goal.extent()
        if np.any(goal_low < lower) or np.any(goal_high > upper):
            raise ValueError("goal leaves the workspace box")

    @property
    def wall_offsets(self) -> np.ndarray:
        """
        Right-hand sides of the four wall halfspaces, shrunk by the robot
        radius, matching the rows of ``WALL_NORMALS``.
        """
        r = self.robot_radius
        lower, upper = self.lower, self.upper
        return np.array(
            [upper[0] - r, -(lower[0] + r), upper[1] - r, -(lower[1] + r)]
        )


@dataclass(frozen=True)
class Halfspace:
    """
    ``aᵀx <= b`` separating the robot from one obstacle; ``theta`` places
    the power-diagram boundary between the two centers.
    """

    a: np.ndarray
    b: float
    theta: float

    def margin(self, x) -> float:
        return self.b - float(self.a @ np.asarray(x, dtype=float))

    def contains(self, x) -> bool:
        return self.margin(x) > 0

    def normalized(self) -> "Halfspace":
        norm = float(np.linalg.norm(self.a))
        return Halfspace(self.a / norm, self.b / norm, self.theta)


@dataclass(frozen=True)
class HalfspaceRates:
    a_dot: np.ndarray
    theta_dot: float
    b_dot: float


def power_distance(x, center, radius: float) -> float:
    d = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    return float(d @ d) - radius * radius


def collision_margin(x_c, workspace: Workspace) -> float:
    """
    min_i ‖x_c - x_i‖ - r_i - r, or ``inf`` without obstacles.
    """
    if not workspace.obstacles:
        return math.inf
    distances = np.linalg.norm(workspace.centers - np.asarray(x_c, dtype=float), axis=1)
    return float(np.min(distances - workspace.radii - workspace.robot_radius))


def _obstacle_geometry(x_c: np.ndarray, workspace: Workspace, check: bool = True):
    a = workspace.centers - x_c
    dist2 = np.einsum("ij,ij->i", a, a)
    dist = np.sqrt(dist2)
    r = workspace.robot_radius
    if check:
        inside = np.flatnonzero(dist - workspace.radii - r <= 0)
        if inside.size:
            raise GeometryError(int(inside[0]))
    theta = 0.5 - (workspace.radii**2 - r * r) / (2.0 * dist2)
    b = a @ x_c + theta * dist2 - r * dist
    return a, b, theta, dist


def _geometry_rates(x_c, velocity, workspace: Workspace, a, dist):
    r = workspace.robot_radius
    a_dot = np.tile(-velocity, (a.shape[0], 1))
    theta_dot = (workspace.radii**2 - r * r) * (a @ -velocity) / dist**4
    b_dot = -float(velocity @ x_c) + r * (a @ velocity) / dist
    return a_dot, theta_dot, b_dot


def local_workspace_halfspaces(x_c, workspace: Workspace) -> List[Halfspace]:
    """
    One halfspace per obstacle; their intersection with the shrunk box is
    LF(x_c).

    :raises GeometryError: if ``x_c`` lies inside an obstacle inflated by r.
    """
    a, b, theta, _ = _obstacle_geometry(np.asarray(x_c, dtype=float), workspace)
    return [Halfspace(a[i].copy(), float(b[i]), float(theta[i])) for i in range(len(b))]


def eval_workspace_rates(
    x_c, x_hat, workspace: Workspace, K: Optional[float] = None
) -> List[HalfspaceRates]:
    """
    Time derivatives of a_i, θ_i and b_i along ẋ_c = -K(x_c - x̂).

    With v = ẋ_c and a_i = x_i - x_c:

        ȧ_i = -v,  θ̇_i = (r_i² - r²) a_iᵀȧ_i / ‖a_i‖⁴,
        ḃ_i = -vᵀx_c + r a_iᵀv / ‖a_i‖
    """
    x_c = np.asarray(x_c, dtype=float)
    gain = workspace.controller_gain if K is None else K
    velocity = -gain * (x_c - np.asarray(x_hat, dtype=float))
    a, _, _, dist = _obstacle_geometry(x_c, workspace)
    a_dot, theta_dot, b_dot = _geometry_rates(x_c, velocity, workspace, a, dist)
    return [
        HalfspaceRates(a_dot[i], float(theta_dot[i]), float(b_dot[i]))
        for i in range(len(dist))
    ]


def workspace_constraints(x_c, workspace: Workspace) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stacked ``(G, h)`` of LF(x_c): obstacle rows first, then the walls.
    """
    a, b, _, _ = _obstacle_geometry(np.asarray(x_c, dtype=float), workspace, False)
    return np.vstack([a, WALL_NORMALS]), np.concatenate([b, workspace.wall_offsets])


def build_projected_goal_problem(
    x_c,
    workspace: Workspace,
    goal_at: Optional[GoalPath] = None,
    x_hat=None,
    t0: float = 0.0,
    gain: Optional[float] = None,
) -> TimeVaryingProblem:
    """
    ``min ½‖x - x_d(t)‖²`` over LF(x_c(t)), where the center moves with the
    controller velocity frozen at ``(x_c, x_hat)``: x_c(t) = x_c + (t - t0) v.

    :param goal_at: Goal path; the workspace goal when omitted.
    :param x_hat: Current estimate; without it the robot is stationary.
    :param t0: Time at which the robot is at ``x_c``.
    :param gain: Overrides the workspace controller gain.
    :raises GeometryError: if ``x_c`` is not in free space.
    """
    x_c = np.asarray(x_c, dtype=float)
    _obstacle_geometry(x_c, workspace)
    goal = goal_at if goal_at is not None else workspace.goal
    K = workspace.controller_gain if gain is None else gain
    if x_hat is None:
        velocity = np.zeros(2)
    else:
        velocity = -K * (x_c - np.asarray(x_hat, dtype=float))
    moving = bool(np.any(velocity))
    walls = len(WALL_NORMALS)

    def center_at(t: float) -> np.ndarray:
        return x_c + (t - t0) * velocity if moving else x_c

    def matrices(t: float):
        return workspace_constraints(center_at(t), workspace)

    def rates(t: float):
        center = center_at(t)
        a, _, _, dist = _obstacle_geometry(center, workspace, check=False)
        a_dot, _, b_dot = _geometry_rates(center, velocity, workspace, a, dist)
        return (
            np.vstack([a_dot, np.zeros((walls, 2))]),
            np.concatenate([b_dot, np.zeros(walls)]),
        )

    return TimeVaryingProblem(
        dimension=2,
        objective=quadratic_objective(np.eye(2), goal.position, goal.velocity),
        affine_inequalities=AffineSystem(
            matrices, rates if moving else None, static=not moving
        ),
        strong_convexity=1.0,
        name="projected_goal",
    )


@dataclass(frozen=True)
class RobotConfig:
    """
    :param start: Initial robot center; also the initial estimate.
    :param tau: Shared step of the controller and the estimator.
    :param t_end: Horizon.
    :param guard_shrink: Backtracking factor of the joint guard.
    :param max_backtracks: Joint guard budget.
    :param record_stride: Keep every k-th step (the last one always).
    """

    start: Tuple[float, float] = (-15.0, -15.0)
    tau: float = 0.2
    t_end: float = 2500.0
    guard_shrink: float = 0.5
    max_backtracks: int = 40
    record_stride: int = 1

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(
            tau=self.tau,
            t_end=self.t_end,
            guard_shrink=self.guard_shrink,
            max_backtracks=self.max_backtracks,
            record_stride=self.record_stride,
        )

    def validate(self) -> "RobotConfig":
        if np.shape(self.start) != (2,):
            raise ValueError(f"start must be a 2-vector, got {self.start}")
        self.integrator.validate()
        return self


@dataclass(frozen=True)
class RobotSample:
    t: float
    x_c: np.ndarray
    x_hat: np.ndarray
    goal: np.ndarray
    margin: float
    min_psi: float
    grad_norm: float
    c: float
    s: float
    events: Tuple[GuardEvent, ...] = ()

    @property
    def goal_distance(self) -> float:
        return float(np.linalg.norm(self.x_c - self.goal))


@dataclass
class RobotTrajectory:
    samples: List[RobotSample] = field(default_factory=list)
    error: Optional[str] = None
    error_detail: Optional[str] = None

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ok(self) -> bool:
        return self.error is None

    def times(self) -> np.ndarray:
        return np.array([sample.t for sample in self.samples])

    def centers(self) -> np.ndarray:
        return np.array([sample.x_c for sample in self.samples])

    def estimates(self) -> np.ndarray:
        return np.array([sample.x_hat for sample in self.samples])

    def margins(self) -> np.ndarray:
        return np.array([sample.margin for sample in self.samples])

    def goal_distances(self) -> np.ndarray:
        return np.array([sample.goal_distance for sample in self.samples])


def _joint_guard(
    x_c, x_hat, c_candidate, hat_candidate, workspace, s, t_next, config, events
):
    """
    Shrinks the joint (x_c, x̂) step until x_c is collision free and x̂ lies
    strictly inside the enlarged LF of the new center.
    """
    dc = c_candidate - x_c
    dh = hat_candidate - x_hat
    first_min_psi = None
    for k in range(config.max_backtracks + 1):
        sigma = config.guard_shrink**k
        center = x_c + sigma * dc
        estimate = x_hat + sigma * dh
        min_psi = -math.inf
        if collision_margin(center, workspace) > 0:
            G, h = workspace_constraints(center, workspace)
            min_psi = float(np.min(s - (G @ estimate - h)))
        if min_psi > 0:
            if k:
                logging.info(
                    f"Robot guard backtracked {k} times at t={t_next:.6g} "
                    f"(candidate min psi {first_min_psi:.3g})"
                )
                events.append(GuardEvent(t_next, k, first_min_psi))
            return center, estimate
        if first_min_psi is None:
            first_min_psi = min_psi
    raise StepFailure(t_next, config.max_backtracks)


def robot_simulate(
    workspace: Workspace,
    gains: GainSettings,
    schedules: BarrierSchedules,
    config: RobotConfig,
) -> RobotTrajectory:
    """
    Co-integrates the robot controller and the projected-goal estimator
    from x̂(0) = x_c(0) = ``config.start``.

    Geometry, collision and solver errors end the run; the samples so far
    are returned with ``error`` set.
    """
    gains.validate()
    config.validate()
    integrator = config.integrator
    x_c = np.array(config.start, dtype=float)
    x_hat = x_c.copy()
    trajectory = RobotTrajectory()
    events: List[GuardEvent] = []
    t = 0.0
    try:
        schedules = schedules.with_slack_for(
            build_projected_goal_problem(x_c, workspace), x_hat
        ).validate()
        steps = integrator.num_steps
        for k in range(steps + 1):
            t = k * config.tau
            margin = collision_margin(x_c, workspace)
            if margin <= 0:
                raise CollisionError(t, margin)
            problem = build_projected_goal_problem(x_c, workspace, x_hat=x_hat, t0=t)
            bundle = eval_derivative_bundle(problem, x_hat, t)
            values = eval_schedules(schedules, t)
            phi = eval_phi(bundle, values.c, values.s)

            if k % config.record_stride == 0 or k == steps:
                trajectory.samples.append(
                    RobotSample(
                        t=t,
                        x_c=x_c.copy(),
                        x_hat=x_hat.copy(),
                        goal=workspace.goal.position(t),
                        margin=margin,
                        min_psi=float(np.min(phi.psi)),
                        grad_norm=phi.grad_norm,
                        c=values.c,
                        s=values.s,
                        events=tuple(events),
                    )
                )
                events = []
            if k == steps:
                break

            x_hat_dot = barrier_field(phi, values.c_dot, values.s_dot, gains.alpha)
            x_c_dot = -workspace.controller_gain * (x_c - x_hat)
            t_next = t + config.tau
            x_c, x_hat = _joint_guard(
                x_c,
                x_hat,
                x_c + config.tau * x_c_dot,
                x_hat + config.tau * x_hat_dot,
                workspace,
                eval_schedules(schedules, t_next).s,
                t_next,
                config,
                events,
            )
    except TvipmError as e:
        trajectory.error = type(e).__name__
        trajectory.error_detail = str(e)
        logging.error(f"Robot simulation stopped at t={t:.6g}: {e}")
    return trajectory


REFERENCE_BOUNDS = ((-20.0, -20.0), (20.0, 20.0))
STATIC_STARTS = ((15.0, 15.0), (-15.0, 15.0), (-15.0, -15.0), (15.0, -15.0))


def reference_obstacles() -> Tuple[Obstacle, ...]:
    """
    Eight disks of radius 2 on the circle of radius 10, at 22.5° + k·45°.
    """
    angles = np.deg2rad(22.5 + 45.0 * np.arange(8))
    return tuple(
        Obstacle((10.0 * math.cos(a), 10.0 * math.sin(a)), 2.0) for a in angles
    )


def reference_workspace(goal: GoalPath, controller_gain: float) -> Workspace:
    return Workspace(
        lower=REFERENCE_BOUNDS[0],
        upper=REFERENCE_BOUNDS[1],
        obstacles=reference_obstacles(),
        robot_radius=1.0,
        goal=goal,
        controller_gain=controller_gain,
    )


@dataclass(frozen=True)
class RobotScenario:
    workspace: Workspace
    gains: GainSettings
    schedules: BarrierSchedules
    config: RobotConfig


def static_goal_scenario(start=(-15.0, -15.0), t_end: float = 2500.0) -> RobotScenario:
    return RobotScenario(
        workspace=reference_workspace(StaticGoal((0.0, 0.0)), controller_gain=0.01),
        gains=GainSettings(alpha=5.0),
        schedules=BarrierSchedules(c0=1.0, gamma_c=0.001, s0=0.0),
        config=RobotConfig(start=tuple(start), tau=0.2, t_end=t_end),
    )


def moving_target_scenario(start=(0.0, 0.0), t_end: float = 2000.0) -> RobotScenario:
    return RobotScenario(
        workspace=reference_workspace(
            CircularGoal(radius=15.0, period=2000.0), controller_gain=0.05
        ),
        gains=GainSettings(alpha=30.0),
        schedules=BarrierSchedules(c0=100.0, gamma_c=0.001, s0=0.0),
        config=RobotConfig(
            start=tuple(start), tau=0.025, t_end=t_end, record_stride=40
        ),
    )
