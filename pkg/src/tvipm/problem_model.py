"""
Time-varying problem abstraction and derivative evaluation.

A :class:`TimeVaryingProblem` bundles the oracles of

    minimize    f0(x, t)
    subject to  f_i(x, t) <= 0,   i = 1..p
                A(t) x = b(t)

Inequalities come either as individual :class:`ScalarField` oracles or as
one vectorized affine block ``G(t) x - h(t) <= 0`` (:class:`AffineSystem`),
which is how the l1-LS and robot scenarios keep hundreds of constraints
cheap. Scalar constraints are numbered first, then the rows of the block.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import EvaluationError

FD_STEP = 1e-5
OBJECTIVE_INDEX = 0
EQUALITY_INDEX = -1

ValueFn = Callable[[np.ndarray, float], float]
VectorFn = Callable[[np.ndarray, float], np.ndarray]
MatrixPair = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """
    Oracle of a scalar function of ``(x, t)``.

    ``dt`` (∂f/∂t) and ``grad_t`` (∇xt f) are optional; when either is
    missing both time partials are obtained from :func:`fd_time_partials`.
    """

    value: ValueFn
    grad: VectorFn
    hess: Callable[[np.ndarray, float], np.ndarray]
    dt: Optional[ValueFn] = None
    grad_t: Optional[VectorFn] = None

    @property
    def analytic_time_partials(self) -> bool:
        return self.dt is not None and self.grad_t is not None


@dataclass(frozen=True)
class AffineSystem:
    """
    Oracle of a time-dependent pair ``(M(t), v(t))``.

    Used both for the equality system ``A(t) x = b(t)`` and for an affine
    inequality block ``G(t) x - h(t) <= 0``.

    :param matrices: ``t -> (M, v)``.
    :param rates: ``t -> (dM/dt, dv/dt)``; finite differences when omitted.
    :param static: the pair does not depend on t; rates are exactly zero.
    """

    matrices: Callable[[float], MatrixPair]
    rates: Optional[Callable[[float], MatrixPair]] = None
    static: bool = False

    @classmethod
    def constant(cls, M, v) -> "AffineSystem":
        M = np.atleast_2d(np.asarray(M, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return cls(matrices=lambda t: (M, v), static=True)

    @property
    def analytic_time_partials(self) -> bool:
        return self.static or self.rates is not None


@dataclass(frozen=True)
class TimeVaryingProblem:
    dimension: int
    objective: ScalarField
    inequality_constraints: Tuple[ScalarField, ...] = ()
    affine_inequalities: Optional[AffineSystem] = None
    equality: Optional[AffineSystem] = None
    strong_convexity: float = 1.0
    name: str = "problem"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not self.strong_convexity > 0:
            raise ValueError(
                f"strong_convexity must be positive, got {self.strong_convexity}"
            )
        object.__setattr__(
            self, "inequality_constraints", tuple(self.inequality_constraints)
        )
        if self.equality is not None:
            A, b = self.equality.matrices(0.0)
            A = np.atleast_2d(A)
            if A.shape[1] != self.dimension or A.shape[0] != np.size(b):
                raise ValueError(f"equality system has inconsistent shape {A.shape}")
            if A.shape[0] >= self.dimension:
                raise ValueError(
                    f"need fewer equalities than variables, got q={A.shape[0]}, "
                    f"n={self.dimension}"
                )
        if self.affine_inequalities is not None:
            G, h = self.affine_inequalities.matrices(0.0)
            if np.shape(G) != (np.size(h), self.dimension):
                raise ValueError(f"affine inequality block has shape {np.shape(G)}")

    @property
    def num_inequalities(self) -> int:
        p = len(self.inequality_constraints)
        if self.affine_inequalities is not None:
            p += int(np.size(self.affine_inequalities.matrices(0.0)[1]))
        return p

    @property
    def num_equalities(self) -> int:
        if self.equality is None:
            return 0
        return int(np.size(self.equality.matrices(0.0)[1]))


@dataclass(frozen=True)
class DerivativeBundle:
    """
    Every derivative the dynamics need, evaluated at one ``(x, t)``.

    Arrays are read-only. ``hess_ineq`` is ``None`` when every inequality
    is affine. The equality fields have zero rows when the problem has no
    equality system.
    """

    x: np.ndarray
    t: float
    f0: float
    grad_f0: np.ndarray
    hess_f0: np.ndarray
    grad_t_f0: np.ndarray
    f_ineq: np.ndarray
    grads_ineq: np.ndarray
    hess_ineq: Optional[np.ndarray]
    dt_ineq: np.ndarray
    grad_t_ineq: np.ndarray
    eq_A: np.ndarray
    eq_b: np.ndarray
    eq_A_dot: np.ndarray
    eq_b_dot: np.ndarray

    @property
    def num_inequalities(self) -> int:
        return self.f_ineq.shape[0]

    @property
    def num_equalities(self) -> int:
        return self.eq_b.shape[0]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _finite(value, index: int, what: str):
    if not np.all(np.isfinite(value)):
        raise EvaluationError(index, f"oracle {index} returned non-finite {what}")
    return value


def _check_point(x, t: float, n: int) -> np.ndarray:
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected a point of shape ({n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite entries")
    return x


def _time_difference(g: Callable[[float], object], t: float, h: float):
    """
    Derivative of ``g`` at ``t``: central difference when ``t >= h``,
    otherwise the second-order forward formula, so no t < 0 is evaluated.
    """
    if t >= h:
        return (np.asarray(g(t + h)) - np.asarray(g(t - h))) / (2 * h)
    g0, g1, g2 = (np.asarray(g(t + k * h)) for k in range(3))
    return (-3 * g0 + 4 * g1 - g2) / (2 * h)


def fd_time_partials(
    oracle: ScalarField, x, t: float, h: float = FD_STEP, index: int = 0
) -> Tuple[float, np.ndarray]:
    """
    Finite-difference estimates of ``∂f/∂t`` and ``∇xt f``.

    :param oracle: The scalar field to differentiate.
    :param x: Evaluation point.
    :param t: Evaluation time, ``t >= 0``.
    :param h: Time step.
    :param index: Oracle index reported on non-finite values.
    """
    if not h > 0:
        raise ValueError(f"step must be positive, got {h}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    x = np.asarray(x, dtype=float)

    def sample(tau: float) -> np.ndarray:
        value = float(oracle.value(x, tau))
        grad = np.asarray(oracle.grad(x, tau), dtype=float)
        return _finite(np.concatenate(([value], grad)), index, "value")

    derivative = _time_difference(sample, t, h)
    return float(derivative[0]), derivative[1:]


def _affine_rates(
    system: AffineSystem, t: float, shape: Tuple[int, int], h: float, index: int
) -> MatrixPair:
    if system.static:
        return np.zeros(shape), np.zeros(shape[0])
    if system.rates is not None:
        M_dot, v_dot = system.rates(t)
    else:

        def packed(tau: float) -> np.ndarray:
            M, v = system.matrices(tau)
            return np.column_stack([np.atleast_2d(M), np.atleast_1d(v)])

        derivative = _time_difference(packed, t, h)
        M_dot, v_dot = derivative[:, :-1], derivative[:, -1]
    M_dot = _finite(np.atleast_2d(np.asarray(M_dot, dtype=float)), index, "rate")
    v_dot = _finite(np.atleast_1d(np.asarray(v_dot, dtype=float)), index, "rate")
    return M_dot.reshape(shape), v_dot.reshape(shape[0])


def eval_derivative_bundle(
    problem: TimeVaryingProblem, x, t: float, h: float = FD_STEP
) -> DerivativeBundle:
    """
    Evaluates the objective, all constraints and their space and time
    derivatives at ``(x, t)``.

    :raises EvaluationError: when an oracle produces a non-finite value.
    """
    n = problem.dimension
    x = _check_point(x, t, n)

    objective = problem.objective
    f0 = _finite(float(objective.value(x, t)), OBJECTIVE_INDEX, "value")
    grad_f0 = _finite(np.asarray(objective.grad(x, t), float), OBJECTIVE_INDEX, "grad")
    hess_f0 = _finite(np.asarray(objective.hess(x, t), float), OBJECTIVE_INDEX, "hess")
    if objective.analytic_time_partials:
        grad_t_f0 = np.asarray(objective.grad_t(x, t), dtype=float)
        _finite(grad_t_f0, OBJECTIVE_INDEX, "time partial")
    else:
        _, grad_t_f0 = fd_time_partials(objective, x, t, h, OBJECTIVE_INDEX)

    values, grads, hessians, dts, grads_t = [], [], [], [], []
    for i, constraint in enumerate(problem.inequality_constraints, start=1):
        values.append(_finite(float(constraint.value(x, t)), i, "value"))
        grads.append(_finite(np.asarray(constraint.grad(x, t), float), i, "grad"))
        hessians.append(_finite(np.asarray(constraint.hess(x, t), float), i, "hess"))
        if constraint.analytic_time_partials:
            dts.append(_finite(float(constraint.dt(x, t)), i, "time partial"))
            grads_t.append(
                _finite(np.asarray(constraint.grad_t(x, t), float), i, "time partial")
            )
        else:
            dt_value, grad_t = fd_time_partials(constraint, x, t, h, i)
            dts.append(dt_value)
            grads_t.append(grad_t)

    f_ineq = np.array(values, dtype=float)
    grads_ineq = np.array(grads, dtype=float).reshape(len(values), n)
    dt_ineq = np.array(dts, dtype=float)
    grad_t_ineq = np.array(grads_t, dtype=float).reshape(len(values), n)
    hess_ineq = np.array(hessians, dtype=float).reshape(len(values), n, n)

    block = problem.affine_inequalities
    if block is not None:
        first = len(values) + 1
        G, rhs = block.matrices(t)
        G = _finite(np.atleast_2d(np.asarray(G, dtype=float)), first, "matrix")
        rhs = _finite(np.atleast_1d(np.asarray(rhs, dtype=float)), first, "vector")
        G_dot, rhs_dot = _affine_rates(block, t, G.shape, h, first)
        f_ineq = np.concatenate([f_ineq, G @ x - rhs])
        grads_ineq = np.vstack([grads_ineq, G])
        dt_ineq = np.concatenate([dt_ineq, G_dot @ x - rhs_dot])
        grad_t_ineq = np.vstack([grad_t_ineq, G_dot])
        if values:
            hess_ineq = np.concatenate([hess_ineq, np.zeros((G.shape[0], n, n))])
        else:
            hess_ineq = None
    elif not values:
        hess_ineq = None

    if problem.equality is not None:
        A, b = problem.equality.matrices(t)
        A = _finite(np.atleast_2d(np.asarray(A, dtype=float)), EQUALITY_INDEX, "A")
        b = _finite(np.atleast_1d(np.asarray(b, dtype=float)), EQUALITY_INDEX, "b")
        A_dot, b_dot = _affine_rates(problem.equality, t, A.shape, h, EQUALITY_INDEX)
    else:
        A, b = np.zeros((0, n)), np.zeros(0)
        A_dot, b_dot = np.zeros((0, n)), np.zeros(0)

    return DerivativeBundle(
        x=_frozen(x),
        t=float(t),
        f0=f0,
        grad_f0=_frozen(grad_f0),
        hess_f0=_frozen(hess_f0),
        grad_t_f0=_frozen(grad_t_f0),
        f_ineq=_frozen(f_ineq),
        grads_ineq=_frozen(grads_ineq),
        hess_ineq=None if hess_ineq is None else _frozen(hess_ineq),
        dt_ineq=_frozen(dt_ineq),
        grad_t_ineq=_frozen(grad_t_ineq),
        eq_A=_frozen(A),
        eq_b=_frozen(b),
        eq_A_dot=_frozen(A_dot),
        eq_b_dot=_frozen(b_dot),
    )


def eval_constraint_values(problem: TimeVaryingProblem, x, t: float) -> np.ndarray:
    """
    Values f_i(x, t) of all inequality constraints, without derivatives.
    """
    x = _check_point(x, t, problem.dimension)
    values = [
        _finite(float(c.value(x, t)), i, "value")
        for i, c in enumerate(problem.inequality_constraints, start=1)
    ]
    values = np.array(values, dtype=float)
    if problem.affine_inequalities is not None:
        first = len(values) + 1
        G, rhs = problem.affine_inequalities.matrices(t)
        G = _finite(np.atleast_2d(np.asarray(G, dtype=float)), first, "matrix")
        rhs = _finite(np.atleast_1d(np.asarray(rhs, dtype=float)), first, "vector")
        values = np.concatenate([values, G @ x - rhs])
    return values


def min_hessian_eigenvalue(bundle: DerivativeBundle) -> float:
    return float(np.linalg.eigvalsh(bundle.hess_f0)[0])


def quadratic_objective(
    H,
    center: Callable[[float], np.ndarray],
    center_rate: Optional[Callable[[float], np.ndarray]] = None,
) -> ScalarField:
    """
    ``f0(x, t) = ½ (x - r(t))ᵀ H (x - r(t))`` with analytic time partials
    when ``center_rate`` is given.
    """
    H = np.asarray(H, dtype=float)

    def value(x, t):
        d = x - center(t)
        return 0.5 * float(d @ H @ d)

    def grad(x, t):
        return H @ (x - center(t))

    def hess(x, t):
        return H

    if center_rate is None:
        return ScalarField(value, grad, hess)

    def dt(x, t):
        return -float(grad(x, t) @ center_rate(t))

    def grad_t(x, t):
        return -H @ center_rate(t)

    return ScalarField(value, grad, hess, dt, grad_t)


def affine_constraint(g, h0: float, h_rate=None, h_fun=None) -> ScalarField:
    """
    Static-gradient constraint ``gᵀx - h(t) <= 0``.

    :param g: Constant gradient.
    :param h0: Constant offset when ``h_fun`` is not given.
    :param h_rate: ``t -> dh/dt`` paired with ``h_fun``.
    :param h_fun: ``t -> h(t)``.
    """
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    offset = h_fun if h_fun is not None else (lambda t: h0)
    zero = np.zeros((n, n))

    def value(x, t):
        return float(g @ x) - offset(t)

    def grad_t(x, t):
        return np.zeros(n)

    if h_fun is not None and h_rate is None:
        return ScalarField(value, lambda x, t: g, lambda x, t: zero)
    rate = h_rate if h_rate is not None else (lambda t: 0.0)
    return ScalarField(
        value, lambda x, t: g, lambda x, t: zero, lambda x, t: -rate(t), grad_t
    )
