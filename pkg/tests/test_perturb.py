import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import record
from sparsecca.matcore import kyfan2, random_orthonormal
from sparsecca.model import ParamSpace, build_model, effective_support
from sparsecca.estimators import oracle_estimator, sparse_approximation, sparse_cca
from sparsecca.perturb import (
    decompose_replicate,
    linearloss_check,
    loss_decomposition,
    procrustes_check,
    rank_sup_statistic,
    random_sintheta_pair,
    sintheta_check,
    sweep,
)
from sparsecca.sampler import make_rng, sample, sample_covariance


# --- sin-theta ------------------------------------------------------------------

@pytest.mark.parametrize("norm", ["frobenius", "operator"])
def test_sintheta_identical_inputs(rng, norm):
    X = rng.standard_normal((5, 4))
    rep = sintheta_check(X, X, 2, norm)
    assert rep.eps == 0 and rep.lhs_weighted <= 1e-12 and rep.holds


@pytest.mark.parametrize("r", [1, 2])
@pytest.mark.parametrize("norm", ["frobenius", "operator"])
def test_sintheta_small_perturbation_of_diagonal(rng, r, norm):
    X = np.diag([2.0, 1.0, 0.0])
    E = rng.standard_normal((3, 3))
    rep = sintheta_check(X, X + 0.01 * E / np.linalg.norm(E), r, norm)
    assert rep.hypothesis and rep.holds
    # delta = sigma_r(X) - sigma_{r+1}(Y) is close to 1 for both ranks
    assert rep.delta == pytest.approx(1.0, abs=0.02)


def test_sintheta_no_gap_claims_nothing():
    rep = sintheta_check(np.diag([1.0, 1.0]), np.diag([1.0, 1.0 + 1e-3]), 1)
    assert not rep.hypothesis and rep.holds


def test_sintheta_rejects_bad_input():
    with pytest.raises(ValueError):
        sintheta_check(np.eye(3), np.eye(2), 1)
    with pytest.raises(ValueError):
        sintheta_check(np.eye(3), np.eye(3), 4)
    with pytest.raises(ValueError):
        sintheta_check(np.eye(3), np.eye(3), 1, "nuclear")


def test_sintheta_psd_projector_constant():
    # symmetric PSD inputs: the plain projector gap times delta / eps is a Davis-Kahan-type constant
    g = np.random.default_rng(4)
    worst = 0.0
    for _ in range(2000):
        d = int(g.integers(2, 7))
        r = int(g.integers(1, d))
        Q = random_orthonormal(g, d, d)
        w = np.sort(g.uniform(0.1, 2.0, d))[::-1]
        X = (Q * w) @ Q.T
        E = g.standard_normal((d, d))
        Y = X + 10 ** g.uniform(-4, -0.5) * (E + E.T)
        rep = sintheta_check(X, Y, r)
        if rep.hypothesis:
            worst = max(worst, rep.ratio_plain)
    record(f"INFO  sintheta PSD case: max ||P - P_hat||_F * delta / eps = {worst:.4f}")
    assert np.isfinite(worst)


def test_sintheta_plain_ratio_reported_for_bounded_condition():
    g = make_rng(8, 3)
    ratios = []
    while len(ratios) < 2000:
        X, Y, r = random_sintheta_pair(g)
        rep = sintheta_check(X, Y, r)
        if rep.kappa_bar <= 2:
            ratios.append(rep.ratio_plain)
    record(f"INFO  sintheta kappa_bar<=2: max ratio_plain = {max(ratios):.4f} over {len(ratios)} pairs")
    assert np.all(np.isfinite(ratios))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sintheta_property(seed):
    X, Y, r = random_sintheta_pair(np.random.default_rng(seed))
    for norm in ("frobenius", "operator"):
        assert sintheta_check(X, Y, r, norm).holds


# --- rank-constrained statistic ------------------------------------------------------

def test_ranksup_large_n_is_small():
    small = sum(rank_sup_statistic(10**6, 2, 1, s) <= 0.01 for s in range(100))
    assert small >= 95


def test_ranksup_full_rank_is_frobenius():
    z = make_rng(5, 2).standard_normal((50, 4))
    W = z.T @ z / 50 - np.eye(4)
    assert rank_sup_statistic(50, 4, 4, 5) == pytest.approx(np.linalg.norm(W), rel=1e-12)
    assert rank_sup_statistic(50, 4, 1, 5) == pytest.approx(np.linalg.norm(W, 2), rel=1e-12)


def test_ranksup_matches_kyfan_definition():
    z = make_rng(9, 2).standard_normal((30, 6))
    W = z.T @ z / 30 - np.eye(6)
    assert rank_sup_statistic(30, 6, 3, 9) == kyfan2(W, 3)


def test_ranksup_tail_decreases_in_t_and_n():
    ts = np.array([0.2, 0.4, 0.6, 0.8])
    tails = {}
    for n in (100, 400):
        stats = np.array([rank_sup_statistic(n, 5, 2, s) for s in range(2000)])
        tails[n] = np.array([(stats > t).mean() for t in ts])
        assert np.all(np.diff(tails[n]) <= 0)
    assert np.all(tails[400] <= tails[100])
    assert tails[400][1] < tails[100][1]


def test_ranksup_argument_errors():
    with pytest.raises(ValueError):
        rank_sup_statistic(10, 3, 4, 0)


# --- constant-free inequalities ------------------------------------------------------

def test_linearloss_equal_pairs_are_zero(rng):
    A, B = random_orthonormal(rng, 5, 2), random_orthonormal(rng, 4, 2)
    rep = linearloss_check(A, B, A, B, [2.0, 1.0])
    assert rep.lower == rep.middle == rep.upper == 0 and rep.holds


def test_linearloss_scalar_d_is_equality(rng):
    A, B = random_orthonormal(rng, 6, 3), random_orthonormal(rng, 5, 3)
    E, F = random_orthonormal(rng, 6, 3), random_orthonormal(rng, 5, 3)
    rep = linearloss_check(A, B, E, F, [0.7, 0.7, 0.7])
    assert rep.middle == pytest.approx(rep.lower, rel=1e-12)
    assert rep.middle == pytest.approx(rep.upper, rel=1e-12)


def test_linearloss_rejects_non_orthonormal(rng):
    A = random_orthonormal(rng, 4, 2)
    with pytest.raises(ValueError):
        linearloss_check(2 * A, A, A, A, [1.0, 0.5])
    with pytest.raises(ValueError):
        linearloss_check(A, A, A, A, [0.5, 1.0])


def test_procrustes_identical_and_rotated(rng):
    A = random_orthonormal(rng, 6, 3)
    Q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    rep = procrustes_check(A, A @ Q)
    assert rep.distance <= 1e-12 and rep.bound <= 1e-12


@pytest.mark.parametrize("check", ["linearloss", "procrustes", "ranksup"])
def test_sweeps_hold(check):
    rows = sweep(check, 500, 1, n=200, d=6, r=2)
    assert len(rows) == 500 and all(r["holds"] for r in rows)


def test_sweep_is_deterministic():
    a = sweep("sintheta", 20, 3)
    b = sweep("sintheta", 20, 3)
    assert a == b
    with pytest.raises(ValueError):
        sweep("unknown", 1, 0)


# --- loss decomposition ------------------------------------------------------------

def _fit(model, n, seed, k):
    cov = sample_covariance(sample(model, n, seed))
    return cov, decompose_replicate(model, cov, k, k)


def test_decomposition_q0_without_residual(sparse_model):
    for seed in range(10):
        cov, (rep, est, oracle) = _fit(sparse_model, 500, seed, 2)
        assert rep.sparse_approx_term <= 1e-20
        assert rep.bias_term == 0
        assert rep.holds
        assert rep.total_loss == pytest.approx(np.sum((est.product - sparse_model.truth()) ** 2))


def test_decomposition_with_residual_identity():
    space = ParamSpace(p=8, m=8, r=1, s_u=3, s_v=3, lam=0.8, r2=1)
    model = build_model(space, "ar1", [0.8, 0.2], [0, 3, 6], [1, 2, 7], seed=2)
    for seed in range(20):
        cov, (rep, _, _) = _fit(model, 300, seed, 3)
        assert rep.holds
        assert rep.linear_term - rep.certificate == pytest.approx(
            rep.excess1_term + rep.excess2_term - rep.bias_term, abs=1e-10
        )


def test_decomposition_rejects_mismatched_inputs(sparse_model):
    cov = sample_covariance(sample(sparse_model, 200, 0))
    other = sample_covariance(sample(sparse_model, 200, 1))
    est = sparse_cca(cov, 2, 2, 1)
    approx = sparse_approximation(sparse_model, [1, 5], [2, 6], 1)
    with pytest.raises(ValueError):
        loss_decomposition(sparse_model, cov, est, oracle_estimator(other, [1, 5], [2, 6], 1), approx)
    with pytest.raises(ValueError):
        loss_decomposition(sparse_model, cov, est, oracle_estimator(cov, [1, 4], [2, 6], 1), approx)
    with pytest.raises(ValueError):
        loss_decomposition(sparse_model, cov, est, oracle_estimator(cov, [1], [2], 1), approx)


def test_decomposition_sweep():
    rows = sweep("decomposition", 30, 0, p=6, n=500)
    assert all(r["holds"] for r in rows)
    assert max(r["certificate"] for r in rows) <= 1e-10
