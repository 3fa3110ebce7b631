"""
Reference solutions for measuring tracking errors.

:func:`solve_static` freezes the problem at one time and runs a sequential
barrier method: damped Newton centering for c_k = c_start * factor^k,
warm-started, preceded by a slack phase I when the start is not strictly
feasible, and followed by a Newton polish on the identified active set.
This path shares only the oracles and :func:`barrier.eval_phi` with the
time-varying dynamics.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np

from .barrier import eval_phi
from .errors import OracleFailure, SingularSystem, TvipmError
from .linalg import solve_kkt
from .problem_model import (
    TimeVaryingProblem,
    eval_constraint_values,
    eval_derivative_bundle,
)

ARMIJO = 0.01
BACKTRACK = 0.5
MAX_HALVINGS = 60


@dataclass(frozen=True)
class OracleConfig:
    """
    :param tol: Target KKT residual.
    :param c_start: First barrier parameter of the sequence.
    :param c_factor: Growth factor of the sequence.
    :param max_newton_iters: Newton iterations allowed per centering.
    :param barrier_gap: Path following stops once p / c_k is below this.
    :param newton_tol: Centering stops once λ²/2 is below this.
    :param polish: Run the active-set Newton polish.
    """

    tol: float = 1e-10
    c_start: float = 10.0
    c_factor: float = 5.0
    max_newton_iters: int = 200
    barrier_gap: float = 1e-8
    newton_tol: float = 1e-14
    polish: bool = True
    max_phase1_stages: int = 40

    def validate(self) -> "OracleConfig":
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.c_start > 0:
            raise ValueError(f"c_start must be positive, got {self.c_start}")
        if not self.c_factor > 1:
            raise ValueError(f"c_factor must exceed 1, got {self.c_factor}")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be positive")
        if not self.barrier_gap > 0:
            raise ValueError(f"barrier_gap must be positive, got {self.barrier_gap}")
        return self


@dataclass(frozen=True)
class StaticSolution:
    x_star: np.ndarray
    lambda_star: np.ndarray
    nu_star: np.ndarray
    kkt_residual: float
    c_final: float
    newton_iterations: int
    polished: bool

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.x_star, self.lambda_star, self.nu_star))


class _Merit:
    """
    Barrier merit of one centering problem in the variables ``w``.

    Phase II: ``w = x`` and F = Φ(x, c, 0).
    Phase I:  ``w = (x, s)`` and F = f0 + weight * s - (1/c) Σ log(s - f_i).
    """

    def __init__(self, problem, t, c, weight: Optional[float] = None):
        self.problem = problem
        self.t = t
        self.c = c
        self.weight = weight
        self.n = problem.dimension

    @property
    def phase_one(self) -> bool:
        return self.weight is not None

    def _split(self, w) -> Tuple[np.ndarray, float]:
        if self.phase_one:
            return w[: self.n], float(w[self.n])
        return w, 0.0

    def in_domain(self, w) -> bool:
        x, s = self._split(w)
        if not np.all(np.isfinite(w)):
            return False
        return bool(np.all(s - eval_constraint_values(self.problem, x, self.t) > 0))

    def evaluate(self, w, hessian: bool = True):
        x, s = self._split(w)
        bundle = eval_derivative_bundle(self.problem, x, self.t)
        phi = eval_phi(bundle, self.c, s, with_hessian=hessian)
        if not self.phase_one:
            return phi.phi, phi.grad, phi.hess
        inv = 1.0 / phi.psi
        value = phi.phi + self.weight * s
        grad = np.append(phi.grad, self.weight - np.sum(inv) / self.c)
        if not hessian:
            return value, grad, None
        hess = np.zeros((self.n + 1, self.n + 1))
        hess[: self.n, : self.n] = phi.hess
        hess[: self.n, self.n] = phi.d_ds
        hess[self.n, : self.n] = phi.d_ds
        hess[self.n, self.n] = np.sum(inv * inv) / self.c
        return value, grad, hess


def _equality_system(problem: TimeVaryingProblem, t: float, extra_columns: int):
    if problem.equality is None:
        return np.zeros((0, problem.dimension + extra_columns)), np.zeros(0)
    A, b = problem.equality.matrices(t)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if extra_columns:
        A = np.hstack([A, np.zeros((A.shape[0], extra_columns))])
    return A, np.atleast_1d(np.asarray(b, dtype=float))


def _largest_interior_step(merit: _Merit, w, dw) -> Optional[float]:
    sigma = 1.0
    for _ in range(MAX_HALVINGS):
        if merit.in_domain(w + sigma * dw):
            return sigma
        sigma *= BACKTRACK
    return None


def _center(
    merit: _Merit,
    w: np.ndarray,
    nu: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    config: OracleConfig,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Damped (infeasible-start) Newton on the merit subject to ``A w = b``.
    Returns the final ``(w, ν)`` and the iterations taken.
    """
    q = A.shape[0]
    scale = 1.0 + np.linalg.norm(b)
    for iteration in range(config.max_newton_iters):
        value, grad, hess = merit.evaluate(w)
        primal = A @ w - b
        dual = grad + A.T @ nu
        step = solve_kkt(hess, A if q else None, -np.concatenate([dual, primal]))
        dw, dnu = step[: w.shape[0]], step[w.shape[0] :]
        feasible = np.linalg.norm(primal) <= 1e-12 * scale
        decrement2 = float(dw @ hess @ dw)
        if feasible and decrement2 / 2 <= config.newton_tol:
            return w, nu + dnu, iteration

        sigma = _largest_interior_step(merit, w, dw)
        accepted = False
        if sigma is not None and feasible:
            slope = float(grad @ dw)
            while sigma > 1e-12:
                trial, _, _ = merit.evaluate(w + sigma * dw, hessian=False)
                if trial <= value + ARMIJO * sigma * slope:
                    accepted = True
                    break
                sigma *= BACKTRACK
        elif sigma is not None:
            residual = np.linalg.norm(np.concatenate([dual, primal]))
            while sigma > 1e-12:
                _, trial_grad, _ = merit.evaluate(w + sigma * dw, hessian=False)
                trial_nu = nu + sigma * dnu
                trial = np.concatenate(
                    [trial_grad + A.T @ trial_nu, A @ (w + sigma * dw) - b]
                )
                if np.linalg.norm(trial) <= (1 - ARMIJO * sigma) * residual:
                    accepted = True
                    break
                sigma *= BACKTRACK
        if not accepted:
            logging.debug(
                f"Centering at c={merit.c:.3g} stalled after {iteration} iterations "
                f"(decrement^2 {decrement2:.3g})"
            )
            return w, nu, iteration

        w = w + sigma * dw
        nu = nu + sigma * dnu
        if stop is not None and stop(w):
            return w, nu, iteration + 1
    raise OracleFailure(
        f"Newton did not converge within {config.max_newton_iters} iterations "
        f"at c={merit.c:.3g}"
    )


def _phase_one(problem, t, x, config) -> Tuple[np.ndarray, int]:
    """
    Finds a strictly feasible point by driving the slack s below zero.
    """
    values = eval_constraint_values(problem, x, t)
    A, b = _equality_system(problem, t, extra_columns=1)
    w = np.append(x, max(0.0, float(np.max(values))) + 1.0)
    nu = np.zeros(A.shape[0])
    weight = 1.0
    c = config.c_start
    iterations = 0
    for _ in range(config.max_phase1_stages):
        merit = _Merit(problem, t, c, weight)
        w, nu, taken = _center(merit, w, nu, A, b, config, stop=lambda w: w[-1] < 0)
        iterations += taken
        if w[-1] < 0:
            return w[:-1], iterations
        c *= config.c_factor
        weight *= 10.0
    raise OracleFailure(f"no strictly feasible point found at t={t:.6g}")


def kkt_residual(problem: TimeVaryingProblem, t: float, x, lambdas, nu) -> float:
    """
    Largest violation among stationarity, complementary slackness, primal
    and dual feasibility, in the max norm.
    """
    bundle = eval_derivative_bundle(problem, x, t)
    lambdas = np.asarray(lambdas, dtype=float)
    nu = np.asarray(nu, dtype=float)
    stationarity = (
        bundle.grad_f0 + bundle.grads_ineq.T @ lambdas + bundle.eq_A.T @ nu
    )
    parts = [float(np.max(np.abs(stationarity)))]
    if bundle.num_inequalities:
        f = bundle.f_ineq
        parts.append(float(np.max(np.abs(lambdas * f))))
        parts.append(float(np.max(np.maximum(f, 0.0))))
        parts.append(float(np.max(np.maximum(-lambdas, 0.0))))
    if bundle.num_equalities:
        parts.append(float(np.max(np.abs(bundle.eq_A @ x - bundle.eq_b))))
    return max(parts)


def _polish(problem, t, x, lambdas, nu, config):
    """
    Newton on the KKT system with the active constraints as equalities.
    Returns ``(x, λ, ν)`` or ``None`` when the active set is not usable.
    """
    p = lambdas.shape[0]
    psi = -eval_constraint_values(problem, x, t)
    active = np.flatnonzero(lambdas > psi)
    multipliers = np.concatenate([lambdas[active], nu])
    for _ in range(10):
        bundle = eval_derivative_bundle(problem, x, t)
        hess = bundle.hess_f0
        if bundle.hess_ineq is not None and active.size:
            hess = hess + np.einsum(
                "i,ijk->jk", multipliers[: active.size], bundle.hess_ineq[active]
            )
        C = np.vstack([bundle.grads_ineq[active], bundle.eq_A])
        residual = np.concatenate(
            [bundle.f_ineq[active], bundle.eq_A @ x - bundle.eq_b]
        )
        if C.shape[0] > x.shape[0]:
            return None
        try:
            rhs = -np.concatenate([bundle.grad_f0, residual])
            solution = solve_kkt(hess, C if C.shape[0] else None, rhs)
        except SingularSystem:
            return None
        dx = solution[: x.shape[0]]
        x = x + dx
        multipliers = solution[x.shape[0] :]
        if np.linalg.norm(dx) <= 1e-14 * (1.0 + np.linalg.norm(x)):
            break
    polished = np.zeros(p)
    polished[active] = multipliers[: active.size]
    return x, polished, multipliers[active.size :]


def solve_static(
    problem: TimeVaryingProblem,
    t: float,
    config: Optional[OracleConfig] = None,
    x0=None,
) -> StaticSolution:
    """
    Solves the problem frozen at time ``t``.

    The result unpacks as ``x_star, lambda_star, nu_star``.

    :param problem: Problem satisfying Slater's condition at ``t``.
    :param t: Time at which to freeze the problem.
    :param config: Oracle settings.
    :param x0: Starting point; zeros when omitted.
    :raises OracleFailure: on Newton failure or when no interior point exists.
    """
    config = (config or OracleConfig()).validate()
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    n = problem.dimension
    p = problem.num_inequalities
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    iterations = 0
    try:
        if p and np.any(eval_constraint_values(problem, x, t) >= 0):
            x, iterations = _phase_one(problem, t, x, config)

        A, b = _equality_system(problem, t, extra_columns=0)
        nu = np.zeros(A.shape[0])
        c = config.c_start
        while True:
            x, nu, taken = _center(_Merit(problem, t, c), x, nu, A, b, config)
            iterations += taken
            if p == 0 or p / c <= config.barrier_gap:
                break
            c *= config.c_factor
    except OracleFailure:
        raise
    except TvipmError as e:
        raise OracleFailure(f"static solve failed at t={t:.6g}: {e}") from e

    lambdas = np.zeros(p)
    if p:
        lambdas = 1.0 / (c * -eval_constraint_values(problem, x, t))
    residual = kkt_residual(problem, t, x, lambdas, nu)
    polished = False
    if p and config.polish and residual > config.tol:
        candidate = _polish(problem, t, x, lambdas, nu, config)
        if candidate is not None:
            cx, clam, cnu = candidate
            candidate_residual = kkt_residual(problem, t, cx, clam, cnu)
            if candidate_residual < residual:
                x, lambdas, nu, residual = cx, clam, cnu, candidate_residual
                polished = True

    limit = config.tol if p == 0 else max(config.tol, 10.0 * p / c)
    if residual > limit:
        raise OracleFailure(
            f"KKT residual {residual:.3g} above {limit:.3g} at t={t:.6g}"
        )
    logging.debug(
        f"Static solve at t={t:.6g}: {iterations} Newton iterations, "
        f"c={c:.3g}, residual {residual:.3g}, polished={polished}"
    )
    return StaticSolution(x, lambdas, nu, residual, c, iterations, polished)


def solve_equality_qp(H, g, A, b) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solves ``min ½ xᵀHx + gᵀx  s.t.  Ax = b`` from its KKT system.
    """
    H = np.asarray(H, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rhs = np.concatenate([-np.asarray(g, dtype=float), np.atleast_1d(b)])
    solution = solve_kkt(H, A, rhs)
    n = H.shape[0]
    return solution[:n], solution[n:]


@dataclass(frozen=True)
class ErrorSeries:
    times: np.ndarray
    errors: np.ndarray
    failed: np.ndarray

    def __len__(self) -> int:
        return self.times.shape[0]

    def max_error(self, t_min: float = 0.0) -> float:
        """
        Largest successful error at ``t >= t_min``; NaN if there is none.
        """
        mask = (self.times >= t_min) & ~self.failed
        if not np.any(mask):
            return math.nan
        return float(np.max(self.errors[mask]))


def tracking_error(
    traj,
    problem: TimeVaryingProblem,
    sample_stride: int = 1,
    config: Optional[OracleConfig] = None,
    workers: int = 1,
) -> ErrorSeries:
    """
    ‖x(t_k) - x*(t_k)‖ at every ``sample_stride``-th trajectory sample.

    Failed oracle solves are flagged and reported as NaN; the series
    continues.

    :param workers: Threads used for the independent oracle solves.
    """
    if len(traj) == 0:
        raise ValueError("trajectory has no samples")
    if sample_stride < 1:
        raise ValueError(f"sample_stride must be positive, got {sample_stride}")
    samples = traj.samples[::sample_stride]

    def measure(sample) -> Tuple[float, bool]:
        try:
            x_star = solve_static(problem, sample.t, config).x_star
        except OracleFailure as e:
            logging.warning(f"Oracle failed at t={sample.t:.6g}: {e}")
            return float("nan"), True
        return float(np.linalg.norm(sample.x - x_star)), False

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: List[Tuple[float, bool]] = list(pool.map(measure, samples))
    else:
        results = [measure(sample) for sample in samples]

    return ErrorSeries(
        times=np.array([sample.t for sample in samples]),
        errors=np.array([error for error, _ in results]),
        failed=np.array([failed for _, failed in results], dtype=bool),
    )
