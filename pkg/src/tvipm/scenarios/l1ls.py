"""
ℓ1-regularized least squares as a smooth program in z = (x, u):

    minimize    ‖Ax - b‖² + λ Σ u_i + ρ‖z‖²
    subject to  x_i - u_i <= 0,  -x_i - u_i <= 0

with a ridge ρ = 1e-8 for strong convexity. The problem does not depend
on t; time enters the adaptive method only through c(t).
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from ..barrier import BarrierSchedules, eval_phi, eval_schedules
from ..dynamics import barrier_field
from ..errors import TvipmError
from ..linalg import solve_spd
from ..problem_model import (
    AffineSystem,
    ScalarField,
    TimeVaryingProblem,
    eval_constraint_values,
    eval_derivative_bundle,
)

RIDGE = 1e-8
C_LIMIT = 1e16
RNG_NAME = "PCG64"


@dataclass(frozen=True)
class L1lsInstance:
    A: np.ndarray
    b: np.ndarray
    lam: float
    support: np.ndarray
    x_true: np.ndarray
    rng_seed: int
    rng_name: str = RNG_NAME

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        m, n = self.A.shape
        if self.b.shape != (m,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({m},)")
        if self.x_true.shape != (n,):
            raise ValueError(f"x_true has shape {self.x_true.shape}, expected ({n},)")

    @property
    def num_features(self) -> int:
        return self.A.shape[1]

    @property
    def lambda_max(self) -> float:
        """
        Smallest λ for which x = 0 is optimal.
        """
        return float(np.max(np.abs(2.0 * self.A.T @ self.b)))


def l1ls_problem(instance: L1lsInstance, ridge: float = RIDGE) -> TimeVaryingProblem:
    A, b, lam = instance.A, instance.b, instance.lam
    n = instance.num_features
    AtA = A.T @ A
    Atb = A.T @ b
    hessian = np.zeros((2 * n, 2 * n))
    hessian[:n, :n] = 2.0 * AtA
    hessian += 2.0 * ridge * np.eye(2 * n)
    zero = np.zeros(2 * n)

    def value(z, t):
        x, u = z[:n], z[n:]
        residual = A @ x - b
        return float(residual @ residual + lam * np.sum(u) + ridge * (z @ z))

    def grad(z, t):
        x = z[:n]
        data = np.concatenate([2.0 * (AtA @ x - Atb), np.full(n, lam)])
        return data + 2.0 * ridge * z

    identity = np.eye(n)
    G = np.block([[identity, -identity], [-identity, -identity]])
    return TimeVaryingProblem(
        dimension=2 * n,
        objective=ScalarField(
            value, grad, lambda z, t: hessian, lambda z, t: 0.0, lambda z, t: zero
        ),
        affine_inequalities=AffineSystem.constant(G, np.zeros(2 * n)),
        strong_convexity=2.0 * ridge,
        name="l1ls",
    )


def build_l1ls(
    seed: int = 0,
    m: int = 64,
    n: int = 256,
    k_sparsity: int = 5,
    noise_sigma: float = 0.1,
    lam: float = 2.0,
) -> Tuple[L1lsInstance, TimeVaryingProblem]:
    """
    Random sparse-recovery instance: standard normal ``A``, a ``k``-sparse
    ±1 signal and Gaussian measurement noise.

    :param seed: Seed of the PCG64 generator; the same seed gives the same
        instance on every platform.
    """
    if m < 1 or n < 1 or k_sparsity < 1:
        raise ValueError(f"m, n, k must be positive, got {m}, {n}, {k_sparsity}")
    if k_sparsity > n:
        raise ValueError(f"k ({k_sparsity}) cannot exceed n ({n})")
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.standard_normal((m, n))
    support = np.sort(rng.choice(n, size=k_sparsity, replace=False))
    x_true = np.zeros(n)
    x_true[support] = rng.choice([-1.0, 1.0], size=k_sparsity)
    b = A @ x_true + noise_sigma * rng.standard_normal(m)
    instance = L1lsInstance(A, b, float(lam), support, x_true, seed)
    return instance, l1ls_problem(instance)


def relative_gap(instance: L1lsInstance, x) -> float:
    """
    Duality-gap surrogate η / g(ν) with the dual point
    ν = 2(Ax - b) · min(1, λ / ‖2Aᵀ(Ax - b)‖∞) and g(ν) = -¼νᵀν - νᵀb.

    Returns ``inf`` when g(ν) <= 0.
    """
    A, b, lam = instance.A, instance.b, instance.lam
    x = np.asarray(x, dtype=float)
    residual = A @ x - b
    scale = float(np.max(np.abs(2.0 * A.T @ residual)))
    nu = 2.0 * residual
    if scale > 0:
        nu = nu * min(1.0, lam / scale)
    dual = float(-0.25 * nu @ nu - nu @ b)
    if not dual > 0:
        return math.inf
    primal = float(residual @ residual + lam * np.sum(np.abs(x)))
    return (primal - dual) / dual


class IpmMode(str, Enum):
    SNIPM = "snipm"
    ANIPM = "anipm"


@dataclass(frozen=True)
class IpmComparisonConfig:
    """
    :param gap_target: Stop once η/g(ν) is at or below this.
    :param max_iterations: Newton (SNIPM) or Euler (ANIPM) step budget.
    :param c_start: SNIPM barrier sequence c_k = c_start · c_factor^k.
    :param centering_tol: SNIPM moves to the next c_k once c λ²/2 is below this.
    :param c0: ANIPM schedule c(t) = c0 e^{γc t}.
    :param tau: ANIPM step; the gain is 1/τ.
    """

    gap_target: float = 1e-4
    max_iterations: int = 500
    c_start: float = 10.0
    c_factor: float = 5.0
    centering_tol: float = 1e-8
    c0: float = 10.0
    gamma_c: float = 1.0
    tau: float = 1.0
    armijo: float = 0.01
    backtrack: float = 0.5
    max_backtracks: int = 50

    def validate(self) -> "IpmComparisonConfig":
        if not self.gap_target > 0:
            raise ValueError(f"gap_target must be positive, got {self.gap_target}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not (self.c_start > 0 and self.c0 > 0):
            raise ValueError("initial barrier parameters must be positive")
        if not self.c_factor > 1:
            raise ValueError(f"c_factor must exceed 1, got {self.c_factor}")
        if not (self.tau > 0 and self.gamma_c > 0):
            raise ValueError("tau and gamma_c must be positive")
        if not (0 < self.armijo < 0.5 and 0 < self.backtrack < 1):
            raise ValueError("line-search constants out of range")
        return self


@dataclass
class ConvergenceReport:
    mode: IpmMode
    iterations: int = 0
    converged: bool = False
    gap_trace: List[float] = field(default_factory=list)
    stage_gaps: List[float] = field(default_factory=list)
    c_final: float = 0.0
    x: Optional[np.ndarray] = None
    error: Optional[str] = None

    @property
    def final_gap(self) -> float:
        return self.gap_trace[-1] if self.gap_trace else math.inf

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_gap": self.final_gap,
            "c_final": self.c_final,
            "gap_trace": list(self.gap_trace),
            "error": self.error,
        }


def _interior(problem: TimeVaryingProblem, z) -> bool:
    return bool(np.all(eval_constraint_values(problem, z, 0.0) < 0))


def _phi_value(problem, z, c) -> float:
    bundle = eval_derivative_bundle(problem, z, 0.0)
    return eval_phi(bundle, c, 0.0, with_hessian=False).phi


def _damped_newton(problem, z, phi, config) -> Optional[np.ndarray]:
    """
    One Newton step on Φ(·, c) with feasibility and Armijo backtracking.
    """
    dz = -solve_spd(phi.hess, phi.grad)
    slope = float(phi.grad @ dz)
    sigma = 1.0
    for _ in range(config.max_backtracks):
        trial = z + sigma * dz
        if _interior(problem, trial):
            value = _phi_value(problem, trial, phi.c)
            if value <= phi.phi + config.armijo * sigma * slope:
                return trial
        sigma *= config.backtrack
    return None


def _initial_point(n: int) -> np.ndarray:
    return np.concatenate([np.zeros(n), np.ones(n)])


def _snipm(instance, problem, config, report: ConvergenceReport) -> np.ndarray:
    n = instance.num_features
    z = _initial_point(n)
    c = config.c_start
    while report.iterations < config.max_iterations and c < C_LIMIT:
        bundle = eval_derivative_bundle(problem, z, 0.0)
        phi = eval_phi(bundle, c, 0.0)
        dz = -solve_spd(phi.hess, phi.grad)
        decrement2 = -float(phi.grad @ dz)
        if c * decrement2 / 2 <= config.centering_tol:
            report.stage_gaps.append(report.gap_trace[-1])
            c *= config.c_factor
            continue
        step = _damped_newton(problem, z, phi, config)
        if step is None:
            logging.warning(f"SNIPM line search failed at c={c:.3g}")
            report.stage_gaps.append(report.gap_trace[-1])
            c *= config.c_factor
            continue
        z = step
        report.iterations += 1
        report.gap_trace.append(relative_gap(instance, z[:n]))
        report.x = z[:n]
        if report.final_gap <= config.gap_target:
            report.converged = True
            break
    report.c_final = c
    return z


def _anipm_candidate(
    problem, bundle, z, t, dz, config
) -> Optional[Tuple[np.ndarray, float]]:
    """
    Largest σ in 1, β, β², ... keeping z + σ dz interior with sufficient
    decrease of Φ(·, c(t + στ)). Returns the point and the time advance.
    """
    schedules = BarrierSchedules(c0=config.c0, gamma_c=config.gamma_c)
    sigma = 1.0
    for _ in range(config.max_backtracks):
        advance = sigma * config.tau
        c_next = eval_schedules(schedules, t + advance).c
        reference = eval_phi(bundle, c_next, 0.0, with_hessian=False)
        slope = float(reference.grad @ dz)
        if slope >= 0:
            return None
        trial = z + sigma * dz
        if _interior(problem, trial):
            value = _phi_value(problem, trial, c_next)
            if value <= reference.phi + config.armijo * sigma * slope:
                return trial, advance
        sigma *= config.backtrack
    return None


def _anipm(instance, problem, config, report: ConvergenceReport) -> np.ndarray:
    n = instance.num_features
    z = _initial_point(n)
    schedules = BarrierSchedules(c0=config.c0, gamma_c=config.gamma_c)
    alpha = 1.0 / config.tau
    t = 0.0
    while report.iterations < config.max_iterations:
        values = eval_schedules(schedules, t)
        bundle = eval_derivative_bundle(problem, z, 0.0)
        phi = eval_phi(bundle, values.c, 0.0)
        dz = config.tau * barrier_field(phi, values.c_dot, 0.0, alpha)
        candidate = _anipm_candidate(problem, bundle, z, t, dz, config)
        if candidate is None:
            # recenter at the current c(t) without advancing time
            step = _damped_newton(problem, z, phi, config)
            if step is None:
                logging.warning(f"ANIPM made no progress at t={t:.6g}")
                report.error = "StepFailure"
                break
            z = step
        else:
            z, advance = candidate
            t += advance
        report.iterations += 1
        report.gap_trace.append(relative_gap(instance, z[:n]))
        report.x = z[:n]
        if report.final_gap <= config.gap_target:
            report.converged = True
            break
    report.c_final = eval_schedules(schedules, t).c
    return z


def run_ipm_comparison(
    instance: L1lsInstance,
    mode,
    config: Optional[IpmComparisonConfig] = None,
    problem: Optional[TimeVaryingProblem] = None,
) -> ConvergenceReport:
    """
    Runs the sequential (``snipm``) or the adaptive (``anipm``) interior
    point method from z = (0, 1) until the duality-gap surrogate reaches
    ``config.gap_target``.

    ``gap_trace[0]`` is the gap at the starting point; every later entry
    follows one iteration.
    """
    mode = IpmMode(mode)
    config = (config or IpmComparisonConfig()).validate()
    if problem is None:
        problem = l1ls_problem(instance)
    report = ConvergenceReport(mode=mode)
    z = _initial_point(instance.num_features)
    report.x = z[: instance.num_features]
    report.gap_trace.append(relative_gap(instance, report.x))
    if report.final_gap <= config.gap_target:
        report.converged = True
        return report

    runner = _snipm if mode is IpmMode.SNIPM else _anipm
    try:
        z = runner(instance, problem, config, report)
    except TvipmError as e:
        # report.x holds the last accepted iterate
        report.error = type(e).__name__
        logging.error(f"{mode.value} stopped after {report.iterations} iterations: {e}")
    else:
        report.x = z[: instance.num_features]
    if not report.converged:
        logging.warning(
            f"{mode.value} did not reach gap {config.gap_target:g} within "
            f"{report.iterations} iterations (gap {report.final_gap:.3g})"
        )
    else:
        logging.info(
            f"{mode.value} reached gap {report.final_gap:.3g} "
            f"in {report.iterations} iterations"
        )
    return report
