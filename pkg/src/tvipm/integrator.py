"""
Fixed-step discretization of the prediction-correction dynamics.

Each step evaluates the schedules, the derivative bundle, Φ (barrier
modes) and the field, takes a forward Euler (or RK4) step, and passes the
candidate through :func:`feasibility_guard` so every stored barrier-mode
state stays strictly inside the enlarged domain.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from .barrier import BarrierSchedules, ScheduleValues, eval_phi, eval_schedules
from .dynamics import (
    FilterState,
    GainSettings,
    KktState,
    adaptive_alpha,
    barrier_field,
    barrier_field_split,
    combined_field,
    equality_field,
    robust_field,
    second_order_field,
    unconstrained_field,
)
from .errors import StepFailure, TvipmError
from .linalg import solve_spd
from .problem_model import (
    DerivativeBundle,
    TimeVaryingProblem,
    eval_constraint_values,
    eval_derivative_bundle,
)

NoiseFn = Callable[[float, np.ndarray], np.ndarray]


class Mode(str, Enum):
    UNCONSTRAINED = "unconstrained"
    EQUALITY = "equality"
    BARRIER = "barrier"
    COMBINED = "combined"
    SECOND_ORDER = "second_order"
    ROBUST = "robust"

    @property
    def uses_barrier(self) -> bool:
        return self in (Mode.BARRIER, Mode.COMBINED, Mode.SECOND_ORDER, Mode.ROBUST)


LINE_SEARCH_MODES = (Mode.UNCONSTRAINED, Mode.BARRIER, Mode.ROBUST)


@dataclass(frozen=True)
class IntegratorConfig:
    """
    :param tau: Step size in time units.
    :param t_end: Horizon, rounded to the nearest multiple of ``tau``.
    :param guard_shrink: Geometric factor of the feasibility guard.
    :param max_backtracks: Guard and line-search backtrack budget.
    :param line_search: Backtrack the correction component on ‖∇Φ‖.
    :param armijo_c: Sufficient-decrease constant of the line search.
    :param method: ``"euler"`` (reference) or ``"rk4"``.
    :param record_stride: Keep every k-th sample (the last one always).
    """

    tau: float = 0.1
    t_end: float = 1.0
    guard_shrink: float = 0.5
    max_backtracks: int = 40
    line_search: bool = False
    armijo_c: float = 1e-4
    method: str = "euler"
    record_stride: int = 1

    def validate(self) -> "IntegratorConfig":
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.t_end >= self.tau:
            raise ValueError(f"t_end ({self.t_end}) must be at least tau ({self.tau})")
        if not 0 < self.guard_shrink < 1:
            raise ValueError(
                f"guard_shrink must lie in (0, 1), got {self.guard_shrink}"
            )
        if self.max_backtracks < 1:
            raise ValueError(
                f"max_backtracks must be positive, got {self.max_backtracks}"
            )
        if not 0 < self.armijo_c < 1:
            raise ValueError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if self.method not in ("euler", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.line_search and self.method != "euler":
            raise ValueError("the line search only applies to the Euler method")
        if self.record_stride < 1:
            raise ValueError(
                f"record_stride must be positive, got {self.record_stride}"
            )
        return self

    @property
    def num_steps(self) -> int:
        return max(1, int(round(self.t_end / self.tau)))


@dataclass(frozen=True)
class GuardEvent:
    t: float
    backtracks: int
    min_psi: float


@dataclass(frozen=True)
class Sample:
    t: float
    x: np.ndarray
    grad_norm: float
    nu: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    f_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c: Optional[float] = None
    s: Optional[float] = None
    eq_residual: float = 0.0
    events: Tuple[GuardEvent, ...] = ()


@dataclass
class Trajectory:
    mode: Mode
    samples: List[Sample] = field(default_factory=list)
    error: Optional[str] = None
    error_detail: Optional[str] = None

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def ok(self) -> bool:
        return self.error is None

    def times(self) -> np.ndarray:
        return np.array([sample.t for sample in self.samples])

    def states(self) -> np.ndarray:
        return np.array([sample.x for sample in self.samples])

    def grad_norms(self) -> np.ndarray:
        return np.array([sample.grad_norm for sample in self.samples])


def euler_step(field_value, state, tau: float) -> np.ndarray:
    return np.asarray(state, dtype=float) + tau * np.asarray(field_value, dtype=float)


def feasibility_guard(
    prev_state,
    candidate,
    problem: TimeVaryingProblem,
    schedules: BarrierSchedules,
    t_next: float,
    config: IntegratorConfig,
    events: Optional[List[GuardEvent]] = None,
) -> np.ndarray:
    """
    Returns ``candidate`` if its x-part is strictly inside the enlarged
    domain at ``t_next``; otherwise backtracks geometrically toward
    ``prev_state``.

    :param events: Receives a :class:`GuardEvent` when backtracking occurs.
    :raises StepFailure: when ``max_backtracks`` shrinks are not enough.
    """
    if problem.num_inequalities == 0:
        return candidate
    prev_state = np.asarray(prev_state, dtype=float)
    step = np.asarray(candidate, dtype=float) - prev_state
    n = problem.dimension
    s = eval_schedules(schedules, t_next).s

    state = np.asarray(candidate, dtype=float)
    first_min_psi = None
    for k in range(config.max_backtracks + 1):
        psi = s - eval_constraint_values(problem, state[:n], t_next)
        min_psi = float(np.min(psi))
        if min_psi > 0:
            if k:
                event = GuardEvent(t_next, k, first_min_psi)
                logging.info(
                    f"Guard backtracked {k} times at t={t_next:.6g} "
                    f"(candidate min psi {first_min_psi:.3g})"
                )
                if events is not None:
                    events.append(event)
            return state
        if first_min_psi is None:
            first_min_psi = min_psi
        state = prev_state + config.guard_shrink ** (k + 1) * step
    raise StepFailure(t_next, config.max_backtracks)


class _FieldEvaluator:
    """
    Evaluates one mode's state derivative and the quantities recorded per
    sample. State layouts: x; z = (x, ν); (x, y) for the second-order mode.
    """

    def __init__(
        self,
        problem: TimeVaryingProblem,
        mode: Mode,
        gains: GainSettings,
        schedules: BarrierSchedules,
        noise: Optional[NoiseFn],
    ):
        self.problem = problem
        self.mode = mode
        self.gains = gains
        self.schedules = schedules
        self.noise = noise
        self.n = problem.dimension

    def _phi(self, bundle: DerivativeBundle, values: ScheduleValues, hessian=True):
        return eval_phi(
            bundle, values.c, values.s, values.c_dot, values.s_dot, hessian
        )

    def __call__(self, state: np.ndarray, t: float) -> Tuple[np.ndarray, Sample]:
        n, mode, gains = self.n, self.mode, self.gains
        x = state[:n]
        bundle = eval_derivative_bundle(self.problem, x, t)

        if mode is Mode.UNCONSTRAINED:
            derivative = unconstrained_field(bundle, gains.alpha)
            sample = Sample(t, x.copy(), float(np.linalg.norm(bundle.grad_f0)))
            return derivative, sample

        if mode is Mode.EQUALITY:
            kkt = KktState.from_packed(state, n)
            derivative = equality_field(kkt, bundle, gains.alpha)
            return derivative, self._kkt_sample(t, kkt, bundle, bundle.grad_f0)

        values = eval_schedules(self.schedules, t)
        phi = self._phi(bundle, values)
        c_dot, s_dot = values.c_dot, values.s_dot

        if mode is Mode.BARRIER:
            derivative = barrier_field(phi, c_dot, s_dot, gains.alpha)
        elif mode is Mode.ROBUST:
            derivative = robust_field(
                phi, c_dot, s_dot, self._noisy_d_dt(phi, x, t), gains
            )
        elif mode is Mode.SECOND_ORDER:
            x_dot, y_dot = second_order_field(
                FilterState(state[n:]), phi, c_dot, s_dot, gains
            )
            derivative = np.concatenate([x_dot, y_dot])
        else:
            kkt = KktState.from_packed(state, n)
            derivative = combined_field(kkt, bundle, phi, c_dot, s_dot, gains.alpha)
            sample = self._kkt_sample(t, kkt, bundle, phi.grad)
            return derivative, self._with_barrier(sample, bundle, phi)

        sample = Sample(
            t,
            x.copy(),
            phi.grad_norm,
            y=state[n:].copy() if mode is Mode.SECOND_ORDER else None,
        )
        return derivative, self._with_barrier(sample, bundle, phi)

    def _noisy_d_dt(self, phi, x, t) -> np.ndarray:
        if self.noise is None:
            return phi.d_dt
        return phi.d_dt + np.asarray(self.noise(t, x), dtype=float)

    @staticmethod
    def _kkt_sample(t, kkt: KktState, bundle: DerivativeBundle, grad) -> Sample:
        primal = bundle.eq_A @ kkt.x - bundle.eq_b
        grad_z = np.concatenate([grad + bundle.eq_A.T @ kkt.nu, primal])
        return Sample(
            t,
            kkt.x.copy(),
            float(np.linalg.norm(grad_z)),
            nu=kkt.nu.copy(),
            eq_residual=float(np.linalg.norm(primal)),
        )

    @staticmethod
    def _with_barrier(sample: Sample, bundle: DerivativeBundle, phi) -> Sample:
        return replace(
            sample,
            f_ineq=np.array(bundle.f_ineq),
            psi=phi.psi,
            lambdas=1.0 / (phi.c * phi.psi),
            c=phi.c,
            s=phi.s,
        )

    def split(self, x: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray, float]:
        """
        Correction and prediction components at ``(x, t)`` and the gain used.
        """
        bundle = eval_derivative_bundle(self.problem, x, t)
        if self.mode is Mode.UNCONSTRAINED:
            alpha = self.gains.alpha
            columns = np.column_stack([alpha * bundle.grad_f0, bundle.grad_t_f0])
            solved = -solve_spd(bundle.hess_f0, columns)
            return solved[:, 0], solved[:, 1], alpha

        values = eval_schedules(self.schedules, t)
        phi = self._phi(bundle, values)
        if self.mode is Mode.ROBUST:
            alpha = adaptive_alpha(phi.grad_norm, self.gains)
            noise = self._noisy_d_dt(phi, x, t) - phi.d_dt
            correction, prediction = barrier_field_split(
                phi, values.c_dot, values.s_dot, alpha
            )
            return correction, prediction - solve_spd(phi.hess, noise), alpha
        correction, prediction = barrier_field_split(
            phi, values.c_dot, values.s_dot, self.gains.alpha
        )
        return correction, prediction, self.gains.alpha

    def optimality_norm(self, x: np.ndarray, t: float) -> float:
        bundle = eval_derivative_bundle(self.problem, x, t)
        if self.mode is Mode.UNCONSTRAINED:
            return float(np.linalg.norm(bundle.grad_f0))
        values = eval_schedules(self.schedules, t)
        return self._phi(bundle, values, hessian=False).grad_norm


def _line_search_step(
    evaluator: _FieldEvaluator, x: np.ndarray, t: float, config: IntegratorConfig
) -> np.ndarray:
    """
    Euler step whose correction component is scaled by the first σ in
    1, β, β², ... meeting ‖∇Φ(x⁺, t+τ)‖ <= (1 - c σ α τ) ‖∇Φ(x, t)‖.
    Falls back to the plain Euler step when no σ qualifies.
    """
    tau = config.tau
    correction, prediction, alpha = evaluator.split(x, t)
    reference = evaluator.optimality_norm(x, t)
    sigma = 1.0
    for _ in range(config.max_backtracks):
        candidate = x + tau * (prediction + sigma * correction)
        try:
            norm = evaluator.optimality_norm(candidate, t + tau)
        except TvipmError:
            norm = math.inf
        if norm <= (1.0 - config.armijo_c * sigma * alpha * tau) * reference:
            return candidate
        sigma *= config.guard_shrink
    logging.debug(f"Line search found no decrease at t={t:.6g}; taking full step")
    return x + tau * (prediction + correction)


def _rk4_step(evaluator: _FieldEvaluator, state, t: float, tau: float, k1):
    k2, _ = evaluator(state + 0.5 * tau * k1, t + 0.5 * tau)
    k3, _ = evaluator(state + 0.5 * tau * k2, t + 0.5 * tau)
    k4, _ = evaluator(state + tau * k3, t + tau)
    return state + (tau / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def check_mode(problem: TimeVaryingProblem, mode: Mode, config: IntegratorConfig):
    p, q = problem.num_inequalities, problem.num_equalities
    if mode is Mode.UNCONSTRAINED and (p or q):
        raise ValueError("unconstrained mode needs a problem without constraints")
    if mode is Mode.EQUALITY and (p or not q):
        raise ValueError("equality mode needs equalities and no inequalities")
    if mode in (Mode.BARRIER, Mode.SECOND_ORDER, Mode.ROBUST) and q:
        raise ValueError(f"{mode.value} mode does not handle equality constraints")
    if config.line_search and mode not in LINE_SEARCH_MODES:
        raise ValueError(f"line search is not available in {mode.value} mode")


def _initial_state(problem: TimeVaryingProblem, mode: Mode, initial_state):
    n = problem.dimension
    state = np.asarray(initial_state, dtype=float).ravel()
    extra = {
        Mode.EQUALITY: problem.num_equalities,
        Mode.COMBINED: problem.num_equalities,
        Mode.SECOND_ORDER: n,
    }.get(mode, 0)
    if state.shape[0] == n and extra:
        state = np.concatenate([state, np.zeros(extra)])
    if state.shape[0] != n + extra:
        raise ValueError(
            f"initial state has {state.shape[0]} entries, expected {n} or {n + extra}"
        )
    return state


def integrate(
    problem: TimeVaryingProblem,
    mode,
    gains: GainSettings,
    schedules: BarrierSchedules,
    config: IntegratorConfig,
    initial_state,
    prediction_noise: Optional[NoiseFn] = None,
) -> Trajectory:
    """
    Integrates one of the dynamics from t=0 to ``config.t_end``.

    Solver errors end the run early: the samples recorded so far are
    returned with ``error`` set to the exception class name.

    :param mode: A :class:`Mode` or its string value.
    :param initial_state: x, or the full packed state of the mode
        (ν and y default to zero).
    :param prediction_noise: ``(t, x) -> e`` added to ∇xtΦ in robust mode.

    Example:
    ```
    traj = integrate(build_tvqp(), "barrier", GainSettings(alpha=5.0),
                     schedules, IntegratorConfig(tau=0.1, t_end=2 * math.pi),
                     [-2.0, 0.0])
    ```
    """
    mode = Mode(mode)
    gains.validate(robust=mode is Mode.ROBUST)
    config.validate()
    check_mode(problem, mode, config)
    state = _initial_state(problem, mode, initial_state)
    if mode.uses_barrier:
        schedules = schedules.with_slack_for(problem, state[: problem.dimension])
    schedules = schedules.validate()

    evaluator = _FieldEvaluator(problem, mode, gains, schedules, prediction_noise)
    trajectory = Trajectory(mode=mode)
    steps = config.num_steps
    events: List[GuardEvent] = []
    t = 0.0
    try:
        for k in range(steps + 1):
            t = k * config.tau
            derivative, sample = evaluator(state, t)
            if k % config.record_stride == 0 or k == steps:
                if events:
                    sample = replace(sample, events=tuple(events))
                    events = []
                trajectory.samples.append(sample)
            if k == steps:
                break
            if config.method == "rk4":
                candidate = _rk4_step(evaluator, state, t, config.tau, derivative)
            elif config.line_search:
                candidate = _line_search_step(evaluator, state, t, config)
            else:
                candidate = euler_step(derivative, state, config.tau)
            if mode.uses_barrier:
                candidate = feasibility_guard(
                    state, candidate, problem, schedules, t + config.tau, config, events
                )
            state = candidate
    except TvipmError as e:
        trajectory.error = type(e).__name__
        trajectory.error_detail = str(e)
        logging.error(f"Integration in {mode.value} mode stopped at t={t:.6g}: {e}")
    return trajectory

