"""Classical, support-restricted, and support-enumeration CCA estimators.

Every estimator returns a :class:`DirectionEstimate` whose ``A`` and ``B``
satisfy ``A' Sx A = B' Sy B = I_r`` for the covariance they were fitted on,
with rows outside the selected supports exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    EnumerationBudgetError,
    EstimationFailure,
    SingularMatrixError,
    SupportConditioningError,
)
from .matcore import projection_distance, psd_sqrt_invsqrt, svd
from .model import CcaModel, Covariance

DEFAULT_BUDGET = 10**7
# relative window in which batched objectives are re-scored one by one
_RESCORE_WINDOW = 1e-10
# upper bound on floats held by one enumeration chunk
_CHUNK_FLOATS = 4_000_000


@dataclass(frozen=True, eq=False)
class DirectionEstimate:
    A: np.ndarray
    B: np.ndarray
    objective: float
    support_u: tuple[int, ...]
    support_v: tuple[int, ...]
    singular_values: np.ndarray
    cov: Covariance = field(repr=False)
    skipped: int = 0

    @property
    def product(self) -> np.ndarray:
        return self.A @ self.B.T

    @property
    def r(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class TruncatedEstimate:
    product: np.ndarray
    truncated: bool


class LossReport(NamedTuple):
    loss: float
    proj_loss_u: float
    proj_loss_v: float


def _index_set(idx, dim: int, name: str) -> tuple[int, ...]:
    s = tuple(sorted(set(int(i) for i in idx)))
    if not s or s[0] < 0 or s[-1] >= dim:
        raise ValueError(f"{name} must be a non-empty subset of range({dim}), got {tuple(idx)}")
    return s


def _canonicalize_signs(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cols = np.arange(A.shape[1])
    signs = np.sign(A[np.argmax(np.abs(A), axis=0), cols])
    signs[signs == 0] = 1.0
    return A * signs, B * signs


def restricted_cca(cov: Covariance, I: Sequence[int], J: Sequence[int], r: int) -> DirectionEstimate:
    """Solve the normalized trace program with ``supp(A) ⊂ I`` and ``supp(B) ⊂ J``.

    Raises :class:`SupportConditioningError` when ``Sx[I, I]`` or ``Sy[J, J]``
    is numerically singular.
    """
    I = _index_set(I, cov.p, "I")
    J = _index_set(J, cov.m, "J")
    if r < 1 or len(I) < r or len(J) < r:
        raise ValueError(f"supports of sizes {len(I)}, {len(J)} cannot carry rank r={r}")
    ii, jj = np.asarray(I), np.asarray(J)
    try:
        _, wx = psd_sqrt_invsqrt(cov.sx[np.ix_(ii, ii)])
        _, wy = psd_sqrt_invsqrt(cov.sy[np.ix_(jj, jj)])
    except SingularMatrixError as exc:
        raise SupportConditioningError(I, J, exc.min_eigenvalue, exc.ridge_tol) from exc
    P, d, Q = svd(wx @ cov.sxy[np.ix_(ii, jj)] @ wy)
    A = np.zeros((cov.p, r))
    B = np.zeros((cov.m, r))
    A[ii] = wx @ P[:, :r]
    B[jj] = wy @ Q[:, :r]
    A, B = _canonicalize_signs(A, B)
    return DirectionEstimate(
        A=A,
        B=B,
        objective=float(np.sum(d[:r])),
        support_u=I,
        support_v=J,
        singular_values=d[:r].copy(),
        cov=cov,
    )


def classical_cca(cov: Covariance, r: int) -> DirectionEstimate:
    if not 1 <= r <= min(cov.p, cov.m):
        raise ValueError(f"r must lie in [1, {min(cov.p, cov.m)}], got {r}")
    return restricted_cca(cov, range(cov.p), range(cov.m), r)


def oracle_estimator(cov: Covariance, S_u, S_v, r: int) -> DirectionEstimate:
    """Fit with the effective supports known in advance."""
    return restricted_cca(cov, S_u, S_v, r)


def sparse_approximation(model: CcaModel, S_u, S_v, r: int) -> DirectionEstimate:
    """Population-optimal directions restricted to ``S_u`` and ``S_v``."""
    return restricted_cca(model.population_cov(), S_u, S_v, r)


def _batched_whiteners(S: np.ndarray, combos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse square roots of every principal submatrix ``S[c, c]``; mask of usable ones."""
    blocks = S[combos[:, :, None], combos[:, None, :]]
    w, Q = np.linalg.eigh(blocks)
    ok = (w[:, 0] > 0) & (w[:, 0] >= 1e-10 * w[:, -1])
    w = np.where(ok[:, None], w, 1.0)
    W = (Q / np.sqrt(w)[:, None, :]) @ np.swapaxes(Q, 1, 2)
    return W, ok


def enumeration_count(p: int, m: int, k_u: int, k_v: int) -> int:
    return math.comb(p, k_u) * math.comb(m, k_v)


def sparse_cca(
    cov: Covariance, k_u: int, k_v: int, r: int, budget: int = DEFAULT_BUDGET
) -> DirectionEstimate:
    """Best restricted fit over all support pairs of sizes ``(k_u, k_v)``.

    Ties in the objective go to the lexicographically smallest ``(I, J)``.
    Support pairs with singular covariance submatrices are skipped and
    counted in ``skipped``.
    """
    p, m = cov.p, cov.m
    if not (1 <= r <= k_u <= p and r <= k_v <= m):
        raise ValueError(f"need r <= k_u <= p and r <= k_v <= m, got r={r}, k=({k_u}, {k_v}), p={p}, m={m}")
    required = enumeration_count(p, m, k_u, k_v)
    if required > budget:
        raise EnumerationBudgetError(required, budget)

    cu = np.array(list(combinations(range(p), k_u)), dtype=np.intp)
    cv = np.array(list(combinations(range(m), k_v)), dtype=np.intp)
    Wx, ok_u = _batched_whiteners(cov.sx, cu)
    Wy, ok_v = _batched_whiteners(cov.sy, cv)
    nu, nv = len(cu), len(cv)
    skipped = nu * nv - int(ok_u.sum()) * int(ok_v.sum())
    if not ok_u.any() or not ok_v.any():
        raise EstimationFailure(f"all {required} support pairs have singular covariance submatrices")

    objective = np.full((nu, nv), -np.inf)
    chunk = max(1, _CHUNK_FLOATS // max(1, nv * k_u * k_v))
    sxy = cov.sxy
    for start in range(0, nu, chunk):
        sl = slice(start, min(nu, start + chunk))
        C = sxy[cu[sl][:, None, :, None], cv[None, :, None, :]]
        T = Wx[sl][:, None] @ C @ Wy[None]
        s = np.linalg.svd(T, compute_uv=False)
        objective[sl] = s[..., :r].sum(axis=-1)
    objective[~ok_u] = -np.inf
    objective[:, ~ok_v] = -np.inf

    flat = objective.ravel()
    top = flat.max()
    window = top - _RESCORE_WINDOW * (1.0 + abs(top))
    best = None
    for idx in np.flatnonzero(flat >= window):
        i, j = divmod(int(idx), nv)
        try:
            est = restricted_cca(cov, cu[i], cv[j], r)
        except SupportConditioningError:
            continue
        if best is None or est.objective > best.objective:
            best = est
    if best is None:
        raise EstimationFailure("no support pair could be fitted")
    return DirectionEstimate(
        best.A, best.B, best.objective, best.support_u, best.support_v,
        best.singular_values, cov, skipped,
    )


def truncate(est, M_bound: float, r: int) -> TruncatedEstimate:
    """Replace the product estimate by zero when its Frobenius norm exceeds ``2 M sqrt(r)``."""
    product = est.product if isinstance(est, DirectionEstimate) else np.asarray(est, dtype=float)
    if np.linalg.norm(product) > 2.0 * M_bound * math.sqrt(r):
        return TruncatedEstimate(np.zeros_like(product), True)
    return TruncatedEstimate(product, False)


def loss(truth, estimate) -> float:
    """Squared Frobenius distance between ``U1 V1'`` and its estimate."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {estimate.shape}")
    return float(np.sum((truth - estimate) ** 2))


def loss_report(model: CcaModel, est: DirectionEstimate, product=None) -> LossReport:
    """Loss on the product plus squared projection distances of the column spaces."""
    product = est.product if product is None else product
    return LossReport(
        loss(model.truth(), product),
        projection_distance(model.U1, est.A) ** 2,
        projection_distance(model.V1, est.B) ** 2,
    )
