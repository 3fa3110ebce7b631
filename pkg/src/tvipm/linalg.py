import logging
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, lapack

from .errors import SingularSystem

SYMMETRY_TOL = 1e-10
TIKHONOV_SHIFT = 1e-10


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def check_symmetric(M: np.ndarray, tol: float = SYMMETRY_TOL) -> None:
    """
    Raises ``ValueError`` unless ``M`` is square and symmetric up to
    ``tol`` relative to its largest entry.
    """
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix is not square: {M.shape}")
    if M.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(M))))
    asymmetry = float(np.max(np.abs(M - M.T)))
    if asymmetry > tol * scale:
        raise ValueError(f"matrix is not symmetric (max |M - M^T| = {asymmetry:.3g})")


def condition_estimate(M) -> float:
    """
    2-norm condition number, for diagnostics only.
    """
    return float(np.linalg.cond(np.asarray(M, dtype=float)))


def _cholesky(M: np.ndarray) -> np.ndarray:
    factor, info = lapack.dpotrf(M, lower=0, clean=1)
    if info > 0:
        raise SingularSystem(info - 1)
    assert info == 0, f"dpotrf rejected its input (info={info})"
    return factor


def solve_spd(M, rhs) -> np.ndarray:
    """
    Solves ``M w = rhs`` for symmetric positive definite ``M`` through a
    Cholesky factorization.

    A failed factorization is retried once with ``M + 1e-10 I``; if that
    also fails the pivot index of the second attempt is reported.

    :param M: Symmetric n×n matrix.
    :param rhs: n-vector or n×k block of right-hand sides.
    :raises SingularSystem: on a non-positive pivot.
    """
    M = _as_matrix(M, "M")
    check_symmetric(M)
    M = 0.5 * (M + M.T)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != M.shape[0]:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {M.shape[0]}")

    try:
        factor = _cholesky(M)
    except SingularSystem as e:
        logging.warning(
            f"Cholesky pivot {e.pivot} not positive; "
            f"retrying with shift {TIKHONOV_SHIFT}"
        )
        factor = _cholesky(M + TIKHONOV_SHIFT * np.eye(M.shape[0]))
    return cho_solve((factor, False), rhs)


def _assemble_kkt(H: np.ndarray, A: np.ndarray) -> np.ndarray:
    q = A.shape[0]
    return np.block([[H, A.T], [A, np.zeros((q, q))]])


def _symmetric_indefinite_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    b = rhs.reshape(K.shape[0], -1)
    _, _, x, info = lapack.dsysv(K, b)
    if info > 0:
        raise SingularSystem(info - 1)
    assert info == 0, f"dsysv rejected its input (info={info})"
    return x.reshape(rhs.shape)


def solve_kkt(H, A: Optional[np.ndarray], rhs) -> np.ndarray:
    """
    Solves the block system ``[[H, A^T], [A, 0]] w = rhs`` with a pivoted
    symmetric-indefinite (Bunch-Kaufman) factorization.

    With an empty ``A`` this is exactly :func:`solve_spd`.

    :param H: Symmetric n×n block.
    :param A: q×n constraint matrix of full row rank, or ``None``.
    :param rhs: (n+q)-vector.
    :raises SingularSystem: if ``A`` is rank deficient or the assembled
        matrix is singular.
    """
    H = _as_matrix(H, "H")
    if A is None or np.size(A) == 0:
        return solve_spd(H, rhs)

    A = _as_matrix(A, "A")
    n = H.shape[0]
    q = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A has {A.shape[1]} columns, expected {n}")
    check_symmetric(H)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != n + q:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {n + q}")

    rank = int(np.linalg.matrix_rank(A))
    if rank < q:
        raise SingularSystem(n + rank, f"constraint matrix has rank {rank} < {q}")

    H = 0.5 * (H + H.T)
    try:
        return _symmetric_indefinite_solve(_assemble_kkt(H, A), rhs)
    except SingularSystem as e:
        logging.warning(
            f"KKT pivot {e.pivot} is zero; retrying with shift {TIKHONOV_SHIFT} on H"
        )
        shifted = H + TIKHONOV_SHIFT * np.eye(n)
        return _symmetric_indefinite_solve(_assemble_kkt(shifted, A), rhs)
