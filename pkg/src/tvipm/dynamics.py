"""
Prediction-correction vector fields.

Every field is a pure function of already evaluated derivatives; schedule
values are passed in by the caller.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .barrier import PhiEvaluation
from .linalg import solve_kkt, solve_spd
from .problem_model import DerivativeBundle


@dataclass(frozen=True)
class GainSettings:
    """
    :param alpha: Correction gain, per unit time.
    :param alpha0: Numerator of the state-dependent robust gain.
    :param epsilon: Floor of ‖∇xΦ‖ in the robust gain.
    :param gamma_filter: Low-pass gain of the second-order field.
    :param eta_bound: Known bound on the prediction error.
    """

    alpha: float = 5.0
    alpha0: float = 1.0
    epsilon: float = 1e-2
    gamma_filter: float = 1.0
    eta_bound: float = 0.0

    def validate(self, robust: bool = False) -> "GainSettings":
        for name in ("alpha", "alpha0", "epsilon", "gamma_filter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eta_bound < 0:
            raise ValueError(f"eta_bound must be nonnegative, got {self.eta_bound}")
        if robust and not self.alpha0 > self.eta_bound:
            raise ValueError(
                f"robust mode needs alpha0 > eta_bound, got {self.alpha0} <= "
                f"{self.eta_bound}"
            )
        return self


@dataclass(frozen=True)
class KktState:
    x: np.ndarray
    nu: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.nu])

    @classmethod
    def from_packed(cls, z, n: int) -> "KktState":
        z = np.asarray(z, dtype=float)
        return cls(z[:n], z[n:])


@dataclass(frozen=True)
class FilterState:
    y: np.ndarray


def unconstrained_field(bundle: DerivativeBundle, alpha: float) -> np.ndarray:
    """
    ẋ = -∇xx f0⁻¹ [α ∇x f0 + ∇xt f0]
    """
    return -solve_spd(bundle.hess_f0, alpha * bundle.grad_f0 + bundle.grad_t_f0)


def _lagrangian_field(
    state: KktState,
    bundle: DerivativeBundle,
    hess: np.ndarray,
    grad: np.ndarray,
    grad_t: np.ndarray,
    alpha: float,
) -> np.ndarray:
    A, A_dot = bundle.eq_A, bundle.eq_A_dot
    grad_z = np.concatenate([grad + A.T @ state.nu, A @ state.x - bundle.eq_b])
    grad_zt = np.concatenate(
        [grad_t + A_dot.T @ state.nu, A_dot @ state.x - bundle.eq_b_dot]
    )
    return -solve_kkt(hess, A, alpha * grad_z + grad_zt)


def equality_field(
    state: KktState, bundle: DerivativeBundle, alpha: float
) -> np.ndarray:
    """
    ż = -∇zz L⁻¹ [α ∇z L + ∇zt L] for L = f0 + νᵀ(Ax - b), z = (x, ν).
    """
    return _lagrangian_field(
        state, bundle, bundle.hess_f0, bundle.grad_f0, bundle.grad_t_f0, alpha
    )


def barrier_field(
    phi: PhiEvaluation, c_dot: float, s_dot: float, alpha: float
) -> np.ndarray:
    """
    ẋ = -∇xxΦ⁻¹ [α∇xΦ + ∇xsΦ ṡ + ∇xcΦ ċ + ∇xtΦ]
    """
    return -solve_spd(phi.hess, phi.bracket(alpha, c_dot, s_dot))


def barrier_field_split(
    phi: PhiEvaluation, c_dot: float, s_dot: float, alpha: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Correction and prediction parts of :func:`barrier_field`, solved with
    one factorization. Their sum is the full field.
    """
    columns = np.column_stack([alpha * phi.grad, phi.prediction_terms(c_dot, s_dot)])
    solved = -solve_spd(phi.hess, columns)
    return solved[:, 0], solved[:, 1]


def combined_field(
    state: KktState,
    bundle: DerivativeBundle,
    phi: PhiEvaluation,
    c_dot: float,
    s_dot: float,
    alpha: float,
) -> np.ndarray:
    """
    Barrier field over z = (x, ν) for the Lagrangian L = Φ + νᵀ(Ax - b).
    """
    return _lagrangian_field(
        state, bundle, phi.hess, phi.grad, phi.prediction_terms(c_dot, s_dot), alpha
    )


def second_order_field(
    filter_state: FilterState,
    phi: PhiEvaluation,
    c_dot: float,
    s_dot: float,
    gains: GainSettings,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    ẋ = -∇xxΦ⁻¹ [α y + ∇xsΦ ṡ + ∇xcΦ ċ + ∇xtΦ],  ẏ = -γ y + α ∇xΦ
    """
    y = filter_state.y
    bracket = gains.alpha * y + phi.prediction_terms(c_dot, s_dot)
    x_dot = -solve_spd(phi.hess, bracket)
    y_dot = -gains.gamma_filter * y + gains.alpha * phi.grad
    return x_dot, y_dot


def adaptive_alpha(grad_norm: float, gains: GainSettings) -> float:
    return gains.alpha0 / max(grad_norm, gains.epsilon)


def robust_field(
    phi: PhiEvaluation,
    c_dot: float,
    s_dot: float,
    noisy_d_dt: np.ndarray,
    gains: GainSettings,
) -> np.ndarray:
    """
    Barrier field with the estimated ``∇xtΦ`` and the gain
    ``α0 / max(‖∇xΦ‖, ε)``.
    """
    alpha = adaptive_alpha(phi.grad_norm, gains)
    bracket = alpha * phi.grad + phi.d_ds * s_dot + phi.d_dc * c_dot + noisy_d_dt
    return -solve_spd(phi.hess, bracket)
