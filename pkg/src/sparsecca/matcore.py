"""Dense matrix primitives: SVD, PSD square roots, Ky Fan norms, subspace distances.

Matrices are plain 2-D float ``numpy`` arrays throughout the package.
"""

from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FactorizationError, SingularMatrixError

ORTHO_TOL = 1e-10


class SvdResult(NamedTuple):
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def svd(M) -> SvdResult:
    """Thin SVD ``M = left @ diag(s) @ right.T`` with ``s`` nonincreasing."""
    M = as_matrix(M)
    try:
        left, s, right_t = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(M.shape) from exc
    return SvdResult(left, s, right_t.T)


def op_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def psd_sqrt_invsqrt(S, ridge_tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric square root and inverse square root of an SPD matrix.

    Eigenvalues below ``ridge_tol`` (default ``1e-10 * ||S||_op``) raise
    :class:`SingularMatrixError` instead of being regularized.
    """
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise ValueError(f"S must be square, got {S.shape}")
    scale = op_norm(S)
    if np.max(np.abs(S - S.T)) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ValueError("S is not symmetric")
    if ridge_tol is None:
        ridge_tol = 1e-10 * scale
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] < ridge_tol or w[0] <= 0.0:
        raise SingularMatrixError(w[0], ridge_tol)
    root = np.sqrt(w)
    sqrt = (Q * root) @ Q.T
    inv_sqrt = (Q / root) @ Q.T
    return sqrt, inv_sqrt


def kyfan2(M, r: int) -> float:
    """Euclidean norm of the ``r`` largest singular values of ``M``.

    This is the supremum of ``<M, K>`` over ``rank(K) <= r`` and ``||K||_F <= 1``.
    """
    M = as_matrix(M)
    if not 1 <= r <= min(M.shape):
        raise ValueError(f"r must lie in [1, {min(M.shape)}], got {r}")
    s = np.linalg.svd(M, compute_uv=False)
    return float(np.sqrt(np.sum(s[:r] ** 2)))


def projector(A) -> np.ndarray:
    """Orthogonal projector onto the column space of a full column rank ``A``."""
    A = as_matrix(A, "A")
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    if A.shape[1] > A.shape[0] or d.min() <= 1e-12 * max(d.max(), 1.0):
        raise ValueError("matrix is not of full column rank")
    return Q @ Q.T


def projection_distance(A, B) -> float:
    """``||P_A - P_B||_F`` for the column spaces of ``A`` and ``B``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"row counts differ: {A.shape[0]} vs {B.shape[0]}")
    return float(np.linalg.norm(projector(A) - projector(B)))


def _check_orthonormal(A: np.ndarray, name: str, tol: float = 1e-8) -> None:
    if np.max(np.abs(A.T @ A - np.eye(A.shape[1]))) > tol:
        raise ValueError(f"{name} does not have orthonormal columns")


def procrustes_distance(A, B) -> float:
    """``min_W ||A - B W||_F`` over orthogonal ``W``.

    The minimizer is the polar factor of ``B'A``.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"shapes differ: {A.shape} vs {B.shape}")
    _check_orthonormal(A, "A")
    _check_orthonormal(B, "B")
    P, _, Qt = np.linalg.svd(B.T @ A)
    W = P @ Qt
    return float(np.linalg.norm(A - B @ W))


def random_orthonormal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((rows, cols)))
    return Q * np.sign(np.diag(R))


# CSV: no header, one row per line, 17 significant digits.
def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, fmt="%.16e", delimiter=",")


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return as_matrix(M, str(path))
