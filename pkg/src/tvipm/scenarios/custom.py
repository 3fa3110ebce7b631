"""
User-defined problem family for ``--scenario custom``:

    minimize    ½ (x - r(t))ᵀ H (x - r(t)),   r(t) = center + amplitude · sin(ω t)
    subject to  G x <= h,  A x = b
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..problem_model import AffineSystem, TimeVaryingProblem, quadratic_objective

Matrix = Tuple[Tuple[float, ...], ...]
Vector = Tuple[float, ...]


@dataclass(frozen=True)
class CustomSettings:
    H: Matrix
    center: Vector
    amplitude: Optional[Vector] = None
    frequency: float = 1.0
    G: Optional[Matrix] = None
    h: Optional[Vector] = None
    A: Optional[Matrix] = None
    b: Optional[Vector] = None

    def validate(self) -> "CustomSettings":
        H = np.asarray(self.H, dtype=float)
        n = len(self.center)
        if H.shape != (n, n):
            raise ValueError(f"custom.H has shape {H.shape}, expected ({n}, {n})")
        if self.amplitude is not None and len(self.amplitude) != n:
            raise ValueError("custom.amplitude must match custom.center")
        if (self.G is None) != (self.h is None):
            raise ValueError("custom.G and custom.h must be given together")
        if (self.A is None) != (self.b is None):
            raise ValueError("custom.A and custom.b must be given together")
        eigenvalues = np.linalg.eigvalsh(0.5 * (H + H.T))
        if not eigenvalues[0] > 0:
            raise ValueError("custom.H must be positive definite")
        return self


def build_custom(settings: CustomSettings) -> TimeVaryingProblem:
    settings.validate()
    H = np.asarray(settings.H, dtype=float)
    center = np.asarray(settings.center, dtype=float)
    amplitude = np.zeros_like(center)
    if settings.amplitude is not None:
        amplitude = np.asarray(settings.amplitude, dtype=float)
    omega = settings.frequency

    objective = quadratic_objective(
        H,
        center=lambda t: center + amplitude * math.sin(omega * t),
        center_rate=lambda t: amplitude * omega * math.cos(omega * t),
    )
    inequalities = None
    if settings.G is not None:
        inequalities = AffineSystem.constant(settings.G, settings.h)
    equality = None
    if settings.A is not None:
        equality = AffineSystem.constant(settings.A, settings.b)
    return TimeVaryingProblem(
        dimension=center.shape[0],
        objective=objective,
        affine_inequalities=inequalities,
        equality=equality,
        strong_convexity=float(np.linalg.eigvalsh(0.5 * (H + H.T))[0]),
        name="custom",
    )
