"""Numerical checks of the perturbation tools behind the upper bound.

Covers the generalized sin-theta bound for weighted singular products, the
rank-constrained Gaussian quadratic-form statistic, the two constant-free
matrix inequalities, and a term-by-term evaluation of the loss
decomposition. Unspecified constants are never asserted; they are reported.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .estimators import (
    DirectionEstimate,
    oracle_estimator,
    sparse_approximation,
    sparse_cca,
)
from .matcore import as_matrix, kyfan2, procrustes_distance, random_orthonormal, svd
from .model import CcaModel, Covariance, ParamSpace, build_model, effective_support
from .sampler import make_rng, sample, sample_covariance

RANKSUP_STREAM = 2
CHECK_TOL = 1e-9
NORM_KINDS = ("frobenius", "operator")


def matrix_norm(M: np.ndarray, kind: str) -> float:
    if M.size == 0:
        return 0.0
    if kind == "frobenius":
        return float(np.linalg.norm(M))
    if kind == "operator":
        return float(np.linalg.norm(M, 2))
    raise ValueError(f"norm_kind must be one of {NORM_KINDS}, got {kind!r}")


@dataclass(frozen=True)
class SinThetaReport:
    eps: float
    delta: float
    d1: float
    d1_hat: float
    d_r: float
    lhs_weighted: float
    rhs_weighted: float
    lhs_plain: float
    ratio_plain: float
    kappa_bar: float
    norm_kind: str
    hypothesis: bool

    @property
    def margin(self) -> float:
        return self.rhs_weighted - self.lhs_weighted

    @property
    def holds(self) -> bool:
        return (not self.hypothesis) or self.lhs_weighted <= self.rhs_weighted + CHECK_TOL


def sintheta_check(X, Y, r: int, norm_kind: str = "frobenius") -> SinThetaReport:
    """Compare the rank-``r`` weighted singular products of ``X`` and ``Y``.

    ``delta`` is taken as ``sigma_r(X) - sigma_{r+1}(Y)``, the largest gap the
    hypothesis admits. When it is not positive the report is returned with
    ``hypothesis=False`` and nothing is claimed.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"shapes differ: {X.shape} vs {Y.shape}")
    if not 1 <= r <= min(X.shape):
        raise ValueError(f"r must lie in [1, {min(X.shape)}], got {r}")
    sx, sy = svd(X), svd(Y)
    d, dh = sx.singular_values, sy.singular_values
    if d[r - 1] <= 0:
        raise ValueError("sigma_r(X) must be positive")
    tail = dh[r] if dh.size > r else 0.0
    delta = float(d[r - 1] - tail)

    A1, B1 = sx.left[:, :r], sx.right[:, :r]
    Ah1, Bh1 = sy.left[:, :r], sy.right[:, :r]
    diff = X - Y
    eps = max(matrix_norm(A1.T @ diff, norm_kind), matrix_norm(diff @ B1, norm_kind))
    lhs_w = matrix_norm((A1 * d[:r]) @ B1.T - (Ah1 * dh[:r]) @ Bh1.T, norm_kind)
    lhs_p = matrix_norm(A1 @ B1.T - Ah1 @ Bh1.T, norm_kind)
    hypothesis = delta > 0
    if hypothesis:
        rhs = (math.sqrt(2.0) * (d[0] + dh[0]) / delta + 1.0) * eps
        if eps > 0:
            ratio = lhs_p * delta / eps
        else:
            ratio = 0.0 if lhs_p == 0 else math.inf
    else:
        rhs, ratio = math.nan, math.nan
    return SinThetaReport(
        eps=eps,
        delta=delta,
        d1=float(d[0]),
        d1_hat=float(dh[0]),
        d_r=float(d[r - 1]),
        lhs_weighted=lhs_w,
        rhs_weighted=float(rhs),
        lhs_plain=lhs_p,
        ratio_plain=float(ratio),
        kappa_bar=float(max(d[0], dh[0]) / d[r - 1]),
        norm_kind=norm_kind,
        hypothesis=hypothesis,
    )


def rank_sup_statistic(n: int, d: int, r: int, seed: int) -> float:
    """``sup |<W, K>|`` over ``rank(K) <= r``, ``||K||_F <= 1`` for ``W = (1/n) sum z z' - I``."""
    if n < 1 or d < 1 or not 1 <= r <= d:
        raise ValueError(f"need n, d >= 1 and 1 <= r <= d, got n={n}, d={d}, r={r}")
    z = make_rng(seed, RANKSUP_STREAM).standard_normal((n, d))
    W = z.T @ z / n - np.eye(d)
    return kyfan2(W, r)


@dataclass(frozen=True)
class LinearLossReport:
    lower: float
    middle: float
    upper: float
    lower_ok: bool
    upper_ok: bool

    @property
    def holds(self) -> bool:
        return self.lower_ok and self.upper_ok


def _orthonormal(M, name: str, tol: float = 1e-8) -> np.ndarray:
    M = as_matrix(M, name)
    if np.max(np.abs(M.T @ M - np.eye(M.shape[1]))) > tol:
        raise ValueError(f"{name} does not have orthonormal columns")
    return M


def linearloss_check(A, B, E, F, D, tol: float = 1e-10) -> LinearLossReport:
    """Sandwich ``<A D B', AB' - EF'>`` between ``(d_r/2)`` and ``(d_1/2)`` times ``||AB' - EF'||_F^2``."""
    A, B = _orthonormal(A, "A"), _orthonormal(B, "B")
    E, F = _orthonormal(E, "E"), _orthonormal(F, "F")
    d = np.asarray(D, dtype=float)
    d = np.diag(d) if d.ndim == 2 else d.ravel()
    r = A.shape[1]
    if not (B.shape[1] == E.shape[1] == F.shape[1] == d.size == r):
        raise ValueError("A, B, E, F and D must share the rank r")
    if A.shape != E.shape or B.shape != F.shape:
        raise ValueError("A/E and B/F must have matching shapes")
    if d[-1] <= 0 or np.any(np.diff(d) > 0):
        raise ValueError("D must be positive and nonincreasing")
    G = A @ B.T - E @ F.T
    g2 = float(np.sum(G**2))
    lower = d[-1] / 2.0 * g2
    middle = float(np.sum(((A * d) @ B.T) * G))
    upper = d[0] / 2.0 * g2
    return LinearLossReport(lower, middle, upper, lower <= middle + tol, middle <= upper + tol)


@dataclass(frozen=True)
class ProcrustesReport:
    distance: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.distance <= self.bound + CHECK_TOL


def procrustes_check(A, B) -> ProcrustesReport:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    return ProcrustesReport(procrustes_distance(A, B), float(np.linalg.norm(A @ A.T - B @ B.T)))


@dataclass(frozen=True)
class DecompositionReport:
    total_loss: float
    sparse_approx_term: float
    oracle_term: float
    bias_term: float
    excess1_term: float
    excess2_term: float
    certificate: float
    triangle_bound: float
    linear_term: float
    whitened_gap: float
    lambda_r: float

    @property
    def triangle_ok(self) -> bool:
        return self.total_loss <= self.triangle_bound + CHECK_TOL

    @property
    def certificate_ok(self) -> bool:
        return self.certificate <= 1e-10

    @property
    def linear_ok(self) -> bool:
        # (lambda_r / 2) ||Sx^1/2 D Sy^1/2||_F^2 <= <Sx U* L V*' Sy, D>
        return self.lambda_r / 2.0 * self.whitened_gap <= self.linear_term + CHECK_TOL

    @property
    def holds(self) -> bool:
        return self.triangle_ok and self.certificate_ok and self.linear_ok


def _same_cov(a: Covariance, b: Covariance) -> bool:
    return a is b or (
        np.array_equal(a.sx, b.sx) and np.array_equal(a.sy, b.sy) and np.array_equal(a.sxy, b.sxy)
    )


def loss_decomposition(
    model: CcaModel,
    cov: Covariance,
    sparse_est: DirectionEstimate,
    oracle_est: DirectionEstimate,
    approx: DirectionEstimate,
) -> DecompositionReport:
    """Evaluate each term of the loss decomposition, without the unknown prefactors.

    ``bias_term``, ``excess1_term`` and ``excess2_term`` are the raw inner
    products against ``D = U*_hat V*_hat' - U_hat V_hat'``.
    """
    r = model.r
    for name, est in (("sparse", sparse_est), ("oracle", oracle_est), ("approx", approx)):
        if est.A.shape != (model.p, r) or est.B.shape != (model.m, r):
            raise ValueError(f"{name} estimate has shape {est.A.shape}/{est.B.shape}, expected rank {r}")
    if not (_same_cov(sparse_est.cov, cov) and _same_cov(oracle_est.cov, cov)):
        raise ValueError("sparse and oracle estimates must be fitted on the supplied covariance")
    if len(oracle_est.support_u) != len(sparse_est.support_u) or len(oracle_est.support_v) != len(
        sparse_est.support_v
    ):
        raise ValueError("oracle and sparse supports differ in size")
    if tuple(oracle_est.support_u) != tuple(approx.support_u) or tuple(oracle_est.support_v) != tuple(
        approx.support_v
    ):
        raise ValueError("oracle and sparse-approximation supports differ")

    truth = model.truth()
    uv = sparse_est.product
    uv_oracle = oracle_est.product
    uv_approx = approx.product
    gap = uv_oracle - uv
    lam1 = model.leading_correlations
    lead_hat = cov.sx @ (oracle_est.A * lam1) @ oracle_est.B.T @ cov.sy
    lead = model.sigma_x @ (model.U1 * lam1) @ model.V1.T @ model.sigma_y

    def inner(a, b):
        return float(np.sum(a * b))

    approx_err = inner(uv_approx - truth, uv_approx - truth)
    oracle_err = inner(uv_oracle - uv_approx, uv_oracle - uv_approx)
    gap2 = inner(gap, gap)
    return DecompositionReport(
        total_loss=inner(uv - truth, uv - truth),
        sparse_approx_term=3.0 * approx_err,
        oracle_term=3.0 * oracle_err,
        bias_term=inner(model.residual_cross(), gap),
        excess1_term=inner(model.sigma_xy - cov.sxy, gap),
        excess2_term=inner(lead_hat - lead, gap),
        certificate=inner(cov.sxy, gap),
        triangle_bound=3.0 * (approx_err + oracle_err + gap2),
        linear_term=inner(lead_hat, gap),
        whitened_gap=float(np.trace(cov.sx @ gap @ cov.sy @ gap.T)),
        lambda_r=float(lam1[-1]),
    )


def decompose_replicate(model: CcaModel, cov: Covariance, k_u: int, k_v: int, budget: int = 10**7):
    """Fit sparse, oracle and population-restricted estimates on effective supports and decompose."""
    S_u = effective_support(model.U1, k_u)
    S_v = effective_support(model.V1, k_v)
    est = sparse_cca(cov, k_u, k_v, model.r, budget=budget)
    oracle = oracle_estimator(cov, S_u, S_v, model.r)
    approx = sparse_approximation(model, S_u, S_v, model.r)
    return loss_decomposition(model, cov, est, oracle, approx), est, oracle


# --- randomized sweeps -----------------------------------------------------------

def _rand_spectrum(rng, k: int) -> np.ndarray:
    return np.sort(np.exp(rng.uniform(-1.5, 1.5, size=k)))[::-1]


def random_sintheta_pair(rng: np.random.Generator, max_tries: int = 1000):
    """Random ``(X, Y, r)`` that satisfies the gap hypothesis."""
    for _ in range(max_tries):
        p, m = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        k = min(p, m)
        r = int(rng.integers(1, k + 1))
        s = _rand_spectrum(rng, k)
        if rng.random() < 0.3 and r < k:
            s[r:] *= rng.uniform(0.0, 0.3)
        X = (random_orthonormal(rng, p, k) * s) @ random_orthonormal(rng, m, k).T
        E = rng.standard_normal((p, m))
        E /= np.linalg.norm(E)
        Y = X + 10 ** rng.uniform(-4, 0.3) * s[0] * E
        sy = np.linalg.svd(Y, compute_uv=False)
        tail = sy[r] if sy.size > r else 0.0
        if s[r - 1] - tail > 0:
            return X, Y, r
    raise RuntimeError("could not draw a hypothesis-satisfying pair")


def random_orthonormal_quadruple(rng: np.random.Generator):
    p, m = int(rng.integers(2, 9)), int(rng.integers(2, 9))
    r = int(rng.integers(1, min(p, m) + 1))
    A, E = random_orthonormal(rng, p, r), random_orthonormal(rng, p, r)
    B, F = random_orthonormal(rng, m, r), random_orthonormal(rng, m, r)
    if rng.random() < 0.2:
        E = A @ np.linalg.qr(rng.standard_normal((r, r)))[0]
    d = np.sort(rng.uniform(0.05, 3.0, size=r))[::-1]
    return A, B, E, F, d


def random_orthonormal_pair(rng: np.random.Generator):
    p = int(rng.integers(2, 10))
    r = int(rng.integers(1, p + 1))
    A = random_orthonormal(rng, p, r)
    if rng.random() < 0.3:
        B = A + 10 ** rng.uniform(-4, -0.5) * rng.standard_normal((p, r))
        B = np.linalg.qr(B)[0]
    else:
        B = random_orthonormal(rng, p, r)
    return A, B


def sweep(check: str, trials: int, seed: int, **options) -> list[dict]:
    """Run ``trials`` randomized instances of one check; one flat dict per trial."""
    rng = make_rng(seed, 3)
    rows = []
    for t in range(trials):
        if check == "sintheta":
            X, Y, r = random_sintheta_pair(rng)
            rep = sintheta_check(X, Y, r, options.get("norm_kind", "frobenius"))
            row = {"p": X.shape[0], "m": X.shape[1], "r": r, **asdict(rep), "margin": rep.margin}
        elif check == "ranksup":
            n, d, r = options.get("n", 1000), options.get("d", 10), options.get("r", 2)
            s = int(rng.integers(0, 2**31 - 1))
            stat = rank_sup_statistic(n, d, r, s)
            z = make_rng(s, RANKSUP_STREAM).standard_normal((n, d))
            W = z.T @ z / n - np.eye(d)
            opn, fro = float(np.linalg.norm(W, 2)), float(np.linalg.norm(W))
            rep = None
            row = {"n": n, "d": d, "r": r, "seed": s, "statistic": stat, "op_norm": opn, "frobenius": fro}
            row["holds"] = opn - CHECK_TOL <= stat <= fro + CHECK_TOL
        elif check == "linearloss":
            A, B, E, F, d = random_orthonormal_quadruple(rng)
            rep = linearloss_check(A, B, E, F, d)
            row = {"p": A.shape[0], "m": B.shape[0], "r": A.shape[1], **asdict(rep)}
        elif check == "procrustes":
            A, B = random_orthonormal_pair(rng)
            rep = procrustes_check(A, B)
            row = {"p": A.shape[0], "r": A.shape[1], **asdict(rep)}
        elif check == "decomposition":
            rep = _decomposition_trial(rng, options)
            row = asdict(rep)
        else:
            raise ValueError(f"unknown check {check!r}")
        if rep is not None:
            row["holds"] = rep.holds
        rows.append({"trial": t, **row})
    return rows


def _decomposition_trial(rng, options) -> DecompositionReport:
    p = options.get("p", 8)
    s = options.get("s", 2)
    n = options.get("n", 2000)
    r2 = options.get("r2", 1)
    space = ParamSpace(p=p, m=p, r=1, s_u=s, s_v=s, lam=0.9, r2=r2)
    seed = int(rng.integers(0, 2**31 - 1))
    su = np.sort(rng.choice(p, s, replace=False))
    sv = np.sort(rng.choice(p, s, replace=False))
    model = build_model(space, "identity", [0.9] + [0.09] * r2, su, sv, seed=seed)
    cov = sample_covariance(sample(model, n, seed))
    report, _, _ = decompose_replicate(model, cov, s, s)
    return report
