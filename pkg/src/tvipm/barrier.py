"""
Barrier-augmented objective

    Φ(x, c, s, t) = f0(x, t) - (1/c) Σ log(s - f_i(x, t))

with its partial derivatives, the exponential c(t), s(t) schedules and
the central-path dual estimates λ̂_i = 1 / (c ψ_i).
"""
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import DomainViolation
from .problem_model import DerivativeBundle, TimeVaryingProblem, eval_constraint_values

C_CAP = 1e12


@dataclass(frozen=True)
class BarrierSchedules:
    """
    ``c(t) = min(c0 e^{γc t}, c_cap)`` and ``s(t) = s0 e^{-γs t}``.

    ``s0=None`` asks the integrator to pick ``max(0, max_i f_i(x0, 0)) + 1``.
    """

    c0: float = 10.0
    gamma_c: float = 1.0
    s0: Optional[float] = 0.0
    gamma_s: float = 0.0
    c_cap: float = C_CAP

    def validate(self) -> "BarrierSchedules":
        if not self.c0 > 0:
            raise ValueError(f"c0 must be positive, got {self.c0}")
        if self.gamma_c < 0 or self.gamma_s < 0:
            raise ValueError("schedule rates must be nonnegative")
        if self.s0 is not None and self.s0 < 0:
            raise ValueError(f"s0 must be nonnegative, got {self.s0}")
        if not self.c_cap >= self.c0:
            raise ValueError(f"c_cap must be at least c0, got {self.c_cap}")
        return self

    def with_slack_for(self, problem: TimeVaryingProblem, x0) -> "BarrierSchedules":
        """
        Returns a copy whose ``s0`` makes ``x0`` strictly interior at t=0.
        """
        if self.s0 is not None:
            return self
        values = eval_constraint_values(problem, x0, 0.0)
        worst = float(np.max(values)) if values.size else 0.0
        return BarrierSchedules(
            self.c0, self.gamma_c, max(0.0, worst) + 1.0, self.gamma_s, self.c_cap
        )


class ScheduleValues(NamedTuple):
    c: float
    c_dot: float
    s: float
    s_dot: float


def eval_schedules(sched: BarrierSchedules, t: float) -> ScheduleValues:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    exponent = sched.gamma_c * t
    if math.log(sched.c0) + exponent >= math.log(sched.c_cap):
        c, c_dot = sched.c_cap, 0.0
    else:
        c = sched.c0 * math.exp(exponent)
        c_dot = sched.gamma_c * c
    s0 = sched.s0 or 0.0
    s = s0 * math.exp(-sched.gamma_s * t)
    return ScheduleValues(c, c_dot, s, -sched.gamma_s * s)


@dataclass(frozen=True)
class PhiEvaluation:
    phi: float
    psi: np.ndarray
    grad: np.ndarray
    hess: Optional[np.ndarray]
    d_ds: np.ndarray
    d_dc: np.ndarray
    d_dt: np.ndarray
    c: float
    s: float

    def bracket(self, alpha: float, c_dot: float, s_dot: float) -> np.ndarray:
        return alpha * self.grad + self.prediction_terms(c_dot, s_dot)

    def prediction_terms(self, c_dot: float, s_dot: float) -> np.ndarray:
        return self.d_ds * s_dot + self.d_dc * c_dot + self.d_dt

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad))


def barrier_residuals(f_ineq: np.ndarray, s: float) -> np.ndarray:
    """
    ``ψ_i = s - f_i``; raises :class:`DomainViolation` on the first
    non-positive entry.
    """
    psi = s - np.asarray(f_ineq, dtype=float)
    bad = np.flatnonzero(~(psi > 0))
    if bad.size:
        raise DomainViolation(int(bad[0]) + 1)
    return psi


def eval_phi(
    bundle: DerivativeBundle,
    c: float,
    s: float,
    c_dot: float = 0.0,
    s_dot: float = 0.0,
    with_hessian: bool = True,
) -> PhiEvaluation:
    """
    Evaluates Φ and its partial derivatives at the bundle's point.

    ``c_dot`` and ``s_dot`` do not enter the partials; they are accepted so
    a caller can hand over one schedule tuple. Use
    :meth:`PhiEvaluation.prediction_terms` to combine them.

    :param bundle: Derivatives of the underlying problem.
    :param c: Barrier parameter, positive.
    :param s: Slack.
    :param with_hessian: Skip the Hessian (line searches only need Φ, ∇Φ).
    :raises DomainViolation: if some ψ_i <= 0.
    """
    if not c > 0:
        raise ValueError(f"barrier parameter must be positive, got {c}")
    psi = barrier_residuals(bundle.f_ineq, s)
    inv = 1.0 / psi
    inv2 = inv * inv
    G = bundle.grads_ineq

    phi = bundle.f0 - float(np.sum(np.log(psi))) / c
    grad = bundle.grad_f0 + (G.T @ inv) / c
    hess = None
    if with_hessian:
        hess = bundle.hess_f0 + (G.T * (inv2 / c)) @ G
        if bundle.hess_ineq is not None:
            hess = hess + np.einsum("i,ijk->jk", inv / c, bundle.hess_ineq)
    d_ds = -(G.T @ inv2) / c
    d_dc = -(G.T @ inv) / (c * c)
    drift = bundle.grad_t_ineq.T @ inv + G.T @ (bundle.dt_ineq * inv2)
    d_dt = bundle.grad_t_f0 + drift / c
    return PhiEvaluation(phi, psi, grad, hess, d_ds, d_dc, d_dt, float(c), float(s))


@dataclass(frozen=True)
class DualEstimate:
    lambdas: np.ndarray


def estimate_duals(psi, c: float) -> DualEstimate:
    psi = np.asarray(psi, dtype=float)
    bad = np.flatnonzero(~(psi > 0))
    if bad.size:
        raise DomainViolation(int(bad[0]) + 1)
    return DualEstimate(1.0 / (c * psi))


def suboptimality_bound(p: int, c: float, lambdas, s: float) -> float:
    """
    Bound ``p/c + s Σ λ_i`` on f0(x_c(t), t) - f0(x*(t), t) for the
    barrier minimizer at parameters ``(c, s)``.
    """
    if not c > 0:
        raise ValueError(f"barrier parameter must be positive, got {c}")
    if p == 0:
        return 0.0
    return p / c + float(np.sum(lambdas)) * s
