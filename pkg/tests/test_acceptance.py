"""Acceptance criteria C1-C9. Each test records one PASS/FAIL line in the terminal summary."""

import json
import time
from itertools import product

import numpy as np
import pytest

from conftest import record
from oracles import brute_force_reversed, brute_force_scipy, random_sample_cov
from sparsecca.cli import main
from sparsecca.errors import EstimationFailure
from sparsecca.estimators import classical_cca, loss, sparse_approximation, sparse_cca, truncate
from sparsecca.harness import ExperimentConfig, fit_rate_slope, run_experiment
from sparsecca.model import ParamSpace, build_model
from sparsecca.perturb import rank_sup_statistic, sweep

BASE = ParamSpace(p=8, m=8, r=1, s_u=2, s_v=2, lam=0.9)
N_GRID = (250, 500, 1000, 2000)
REPS = 100

pytestmark = pytest.mark.slow


def _report(tag, ok, detail):
    record(f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}")
    assert ok, detail


def _run(**kw):
    cfg = ExperimentConfig(space=BASE, n_grid=N_GRID, replicates=REPS, base_seed=2015, **kw)
    return run_experiment(cfg)


def _means(table):
    return {k[0]: v for k, v in sorted(table.mean_loss("sparse").items())}


@pytest.fixture(scope="session")
def baseline():
    return _run()


@pytest.fixture(scope="session")
def nuisance_runs():
    return {
        "ar1": _run(cov_kind="ar1", cov_param=0.3),
        "residual": _run(residual=(1, 0.1)),
        "ar1+residual": _run(cov_kind="ar1", cov_param=0.3, residual=(1, 0.1)),
    }


@pytest.fixture(scope="session")
def dimension_run():
    cfg = ExperimentConfig(space=BASE, n_grid=(2000,), replicates=REPS, base_seed=2016,
                           dim_grid=((8, 8), (16, 16), (32, 32)))
    return run_experiment(cfg)


def test_c1_rate_in_n(baseline):
    rows = baseline.select("sparse")
    assert len(rows) == len(N_GRID) * REPS
    fit = fit_rate_slope(baseline, "sparse", "n")
    _report("C1 rate in n", abs(fit.slope + 1) <= 0.15,
            f"slope {fit.slope:.3f} (target -1 +/- 0.15); loss/eps^2 in [{fit.ratio_min:.3f}, {fit.ratio_max:.3f}]")


def test_c2_rate_in_dimension(dimension_run):
    assert len(dimension_run.select("sparse")) == 3 * REPS
    ratios = {k[1]: np.mean([r.loss for r in v]) / v[0].eps_n_sq
              for k, v in dimension_run.groups("sparse").items()}
    spread = max(ratios.values()) / min(ratios.values())
    detail = ", ".join(f"p={p}: {x:.4f}" for p, x in sorted(ratios.items()))
    _report("C2 rate in dimension", spread <= 3, f"max/min loss/eps^2 = {spread:.3f} (<= 3); {detail}")


def test_c3_nuisance_robustness(baseline, nuisance_runs):
    base = _means(baseline)
    worst, parts = 1.0, []
    for name, table in nuisance_runs.items():
        assert len(table.select("sparse")) == len(N_GRID) * REPS
        means = _means(table)
        factors = [max(means[n] / base[n], base[n] / means[n]) for n in N_GRID]
        worst = max(worst, max(factors))
        parts.append(f"{name} max factor {max(factors):.3f}")
    _report("C3 nuisance robustness", worst <= 2, f"{'; '.join(parts)} (each <= 2)")


def test_c4_support_recovery(baseline):
    rows = [r for r in baseline.select("sparse") if r.n == 2000]
    hits = sum(r.support_exact for r in rows)
    _report("C4 support recovery", hits >= 90, f"{hits}/{len(rows)} exact at n=2000 (>= 90)")


def test_c5_sintheta_suite():
    parts, ok = [], True
    for norm in ("frobenius", "operator"):
        start = time.perf_counter()
        rows = sweep("sintheta", 10_000, 5, norm_kind=norm)
        elapsed = time.perf_counter() - start
        fails = sum(not r["holds"] for r in rows)
        margin = min(r["margin"] for r in rows)
        ok &= fails == 0 and margin >= -1e-9 and elapsed < 60 and all(r["hypothesis"] for r in rows)
        parts.append(f"{norm}: {fails} failures, min margin {margin:.2e}, {elapsed:.1f}s")
    _report("C5 sin-theta suite", ok, "; ".join(parts))


def _population_recovery_failures():
    fails = 0
    for kind, seed, r in product(("identity", "ar1", "random_spd"), range(10), (1, 2)):
        space = ParamSpace(p=7, m=6, r=r, s_u=3, s_v=3, lam=0.5, kappa=1.4)
        model = build_model(space, kind, None, [0, 2, 5], [1, 3, 4], seed=seed)
        fails += loss(model.truth(), classical_cca(model.population_cov(), r).product) > 1e-10
        approx = sparse_approximation(model, model.support_u, model.support_v, r)
        fails += loss(model.truth(), approx.product) > 1e-10
    return fails


def _truncation_failures(trials=10_000):
    g = np.random.default_rng(77)
    fails = 0
    for _ in range(trials):
        p, m, r = int(g.integers(2, 8)), int(g.integers(2, 8)), 1
        M = float(g.uniform(1, 3))
        truth = g.standard_normal((p, m))
        truth *= g.uniform(0, M * np.sqrt(r)) / np.linalg.norm(truth)
        est = g.standard_normal((p, m)) * g.uniform(0.1, 20)
        t = truncate(est, M, r)
        fails += loss(truth, t.product) > loss(truth, est) + 1e-12
    return fails


def test_c6_exact_identities(baseline, nuisance_runs, dimension_run):
    pop = _population_recovery_failures()
    trunc = _truncation_failures()
    sandwich = sum(not r["holds"] for r in sweep("linearloss", 10_000, 8))
    procrustes = sum(not r["holds"] for r in sweep("procrustes", 10_000, 10))
    rows = [r for t in (baseline, dimension_run, *nuisance_runs.values()) for r in t.select("sparse")]
    cert = sum(not (r.certificate <= 1e-10) for r in rows)
    ok = pop == trunc == sandwich == procrustes == cert == 0
    _report("C6 exact identities", ok,
            f"failures: population/q=0 approx {pop}, truncation {trunc}/10000, "
            f"sandwich {sandwich}/10000, procrustes {procrustes}/10000, certificate {cert}/{len(rows)} replicates")


def test_c7_rank_constrained_statistic():
    ns = np.array([100, 1000, 10_000])
    means = [np.mean([rank_sup_statistic(int(n), 10, 2, s) for s in range(200)]) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(means), 1)[0]
    _report("C7 rank-constrained statistic", abs(slope + 0.5) <= 0.1,
            f"slope {slope:.3f} (target -0.5 +/- 0.1); means {', '.join(f'{x:.4f}' for x in means)}")


def test_c8_exhaustive_equivalence():
    g = np.random.default_rng(88)
    checked = mismatches = 0
    for p, m in product(range(1, 7), repeat=2):
        for draw in range(50):
            cov = random_sample_cov(g, p, m)
            if draw % 5 == 0 and p >= 2:
                # duplicate a column of x: exact objective ties and singular pairs
                sx = cov.sx.copy()
                sx[1], sx[:, 1] = sx[0], sx[:, 0]
                sx[1, 1] = sx[0, 0]
                sxy = cov.sxy.copy()
                sxy[1] = sxy[0]
                cov = type(cov)(sx, cov.sy, sxy, cov.n)
            for k_u, k_v, r in product((1, 2), (1, 2), (1, 2)):
                if not (r <= k_u <= p and r <= k_v <= m):
                    continue
                ref = brute_force_reversed(cov, k_u, k_v, r)
                sup, obj = brute_force_scipy(cov, k_u, k_v, r)
                checked += 1
                if ref is None:
                    # every pair singular: both oracles agree, the estimator must refuse
                    try:
                        sparse_cca(cov, k_u, k_v, r)
                        mismatches += 1
                    except EstimationFailure:
                        mismatches += sup is not None
                    continue
                est = sparse_cca(cov, k_u, k_v, r)
                mismatches += (
                    (est.support_u, est.support_v) != (ref.support_u, ref.support_v)
                    or est.objective != ref.objective
                    or sup != (est.support_u, est.support_v)
                    or abs(obj - est.objective) > 1e-10
                )
    _report("C8 exhaustive equivalence", mismatches == 0, f"{mismatches} mismatches over {checked} fits")


def _snapshot(directory):
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_c9_cli_determinism(tmp_path, capsys):
    model_cfg = tmp_path / "model.json"
    model_cfg.write_text(json.dumps({"p": 6, "m": 6, "r": 1, "r2": 1, "s_u": 2, "s_v": 2, "lambda": 0.8,
                                     "correlations": [0.8, 0.05], "cov_kind": "random_spd",
                                     "rho_or_cond": 3.0, "seed": 5}))
    exp_cfg = tmp_path / "exp.json"
    exp_cfg.write_text(json.dumps({"p": 6, "m": 6, "r": 1, "s_u": 2, "s_v": 2, "lambda": 0.9,
                                   "n_grid": [100, 200, 400], "replicates": 4,
                                   "estimators": ["sparse", "oracle", "classical"]}))
    data = tmp_path / "data"
    commands = {
        "rate": lambda d: "rate --q 0.5 --r 2 --su 3 --sv 3 --p 50 --m 40 --n 500 --lambda 0.6".split(),
        "simulate": lambda d: ["simulate", "--config", str(model_cfg), "--n", "300", "--out", str(d)],
        "estimate-sparse": lambda d: ["estimate", "--data-dir", str(data), "--rank", "1",
                                      "--k-u", "2", "--k-v", "2", "--out", str(d)],
        "estimate-oracle": lambda d: ["estimate", "--data-dir", str(data), "--rank", "1", "--mode", "oracle",
                                      "--support-u", "0,1", "--support-v", "0,1", "--out", str(d)],
        "estimate-classical": lambda d: ["estimate", "--data-dir", str(data), "--rank", "2",
                                         "--mode", "classical", "--out", str(d)],
        "experiment": lambda d: ["experiment", "--config", str(exp_cfg), "--out", str(d), "--threads", "3"],
    }
    for check in ("sintheta", "ranksup", "linearloss", "procrustes", "decomposition"):
        commands[f"verify-{check}"] = (
            lambda d, c=check: ["verify", "--check", c, "--trials", "20", "--seed", "3", "--out", str(d / "report.csv")]
        )
    assert main(["simulate", "--config", str(model_cfg), "--n", "300", "--out", str(data)]) == 0
    differing = []
    for name, argv in commands.items():
        outputs = []
        for run in ("a", "b"):
            d = tmp_path / name / run
            d.mkdir(parents=True)
            capsys.readouterr()
            code = main(argv(d))
            outputs.append((code, capsys.readouterr().out, _snapshot(d)))
        if outputs[0] != outputs[1] or outputs[0][0] != 0:
            differing.append(name)
    _report("C9 CLI determinism", not differing,
            f"{len(commands) - len(differing)}/{len(commands)} invocations byte-identical"
            + (f"; differing: {differing}" if differing else ""))
