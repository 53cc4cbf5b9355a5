"""Monte Carlo risk experiments over grids of ``(n, p, m)``.

Each replicate draws a fresh model (random supports, fresh directions),
samples ``n`` observations, fits every requested estimator on the same
data, and records the truncated loss next to the minimax rate for that
grid point. Seeds derive from ``(base_seed, point, replicate)`` so output
does not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericalError
from .estimators import (
    DEFAULT_BUDGET,
    classical_cca,
    loss_report,
    oracle_estimator,
    sparse_cca,
    truncate,
)
from .model import (
    ParamSpace,
    build_model,
    effective_sparsity,
    effective_support,
    leading_correlations,
    minimax_rate,
)
from .sampler import make_rng, sample, sample_covariance

ESTIMATORS = ("sparse", "oracle", "classical")
SUPPORT_STREAM = 4
GROUP_KEYS = ("n", "p", "m", "s_u", "s_v", "r", "q", "lambda", "estimator")


@dataclass(frozen=True)
class ExperimentConfig:
    space: ParamSpace
    n_grid: tuple[int, ...]
    replicates: int
    estimators: tuple[str, ...] = ("sparse",)
    dim_grid: tuple[tuple[int, int], ...] | None = None
    cov_kind: str = "identity"
    cov_param: float | None = None
    residual: tuple[int, float] | None = None
    c: float = 0.2
    base_seed: int = 0
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("replicates must be >= 2")
        if not self.n_grid or min(self.n_grid) < 2:
            raise ValueError("n_grid must hold sample sizes >= 2")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad or not self.estimators:
            raise ValueError(f"estimators must be a non-empty subset of {ESTIMATORS}, got {self.estimators}")
        if self.residual is not None:
            r2, frac = self.residual
            if r2 < 1:
                raise ValueError("residual rank must be >= 1")
            if not 0.0 <= frac < self.c:
                raise ValueError(
                    f"residual correlation fraction {frac} must lie in [0, c) with c = {self.c}"
                )
        for p, m in self.dims():
            self.point_space(p, m)

    def dims(self) -> list[tuple[int, int]]:
        if self.dim_grid:
            return [tuple(map(int, d)) for d in self.dim_grid]
        return [(self.space.p, self.space.m)]

    def point_space(self, p: int, m: int) -> ParamSpace:
        r2 = self.residual[0] if self.residual else 0
        return replace(self.space, p=p, m=m, r2=r2)

    def points(self) -> list[tuple[int, int, int]]:
        return [(n, p, m) for p, m in self.dims() for n in self.n_grid]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        space = ParamSpace.from_dict(d.get("space", d))
        residual = d.get("residual")
        if residual is not None:
            residual = (int(residual["r2"]), float(residual["lambda_r2_fraction"]))
        dim_grid = d.get("dim_grid")
        return cls(
            space=space,
            n_grid=tuple(int(n) for n in d["n_grid"]),
            replicates=int(d["replicates"]),
            estimators=tuple(d.get("estimators", ["sparse"])),
            dim_grid=None if dim_grid is None else tuple((int(a), int(b)) for a, b in dim_grid),
            cov_kind=d.get("cov_kind", "identity"),
            cov_param=d.get("rho_or_cond"),
            residual=residual,
            c=float(d.get("c", 0.2)),
            base_seed=int(d.get("base_seed", 0)),
            budget=int(d.get("budget", DEFAULT_BUDGET)),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class RiskRow:
    n: int
    p: int
    m: int
    s_u: float
    s_v: float
    r: int
    q: float
    lam: float
    estimator: str
    replicate: int
    seed: int
    loss: float = math.nan
    proj_loss_u: float = math.nan
    proj_loss_v: float = math.nan
    truncated: bool = False
    support_exact: bool = False
    eps_n_sq: float = math.nan
    certificate: float = math.nan
    error: str = ""

    def key(self) -> tuple:
        return (self.n, self.p, self.m, self.s_u, self.s_v, self.r, self.q, self.lam, self.estimator)


@dataclass
class RiskTable:
    rows: list[RiskRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def select(self, estimator: str | None = None, ok_only: bool = True) -> list[RiskRow]:
        return [
            row for row in self.rows
            if (estimator is None or row.estimator == estimator) and (not ok_only or not row.error)
        ]

    def groups(self, estimator: str | None = None) -> dict[tuple, list[RiskRow]]:
        out: dict[tuple, list[RiskRow]] = {}
        for row in self.select(estimator):
            out.setdefault(row.key(), []).append(row)
        return out

    def mean_loss(self, estimator: str) -> dict[tuple, float]:
        return {k: float(np.mean([r.loss for r in v])) for k, v in self.groups(estimator).items()}

    def write_csv(self, path) -> None:
        names = [f.name for f in fields(RiskRow)]
        header = ["lambda" if n == "lam" else n for n in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in self.rows:
                w.writerow([_fmt(getattr(row, n)) for n in names])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def replicate_seed(base_seed: int, point: int, replicate: int) -> int:
    return int(np.random.SeedSequence([base_seed, point, replicate]).generate_state(1)[0])


def _run_replicate(config: ExperimentConfig, point: int, rep: int) -> list[RiskRow]:
    n, p, m = config.points()[point]
    space = config.point_space(p, m)
    seed = replicate_seed(config.base_seed, point, rep)
    base = dict(
        n=n, p=p, m=m, s_u=space.s_u, s_v=space.s_v, r=space.r, q=space.q,
        lam=space.lam, replicate=rep, seed=seed,
    )
    rows = {name: RiskRow(estimator=name, **base) for name in config.estimators}
    try:
        es = effective_sparsity(space, n)
        eps = minimax_rate(space, n)
        for row in rows.values():
            row.eps_n_sq = eps
        rng = make_rng(seed, SUPPORT_STREAM)
        support_u = np.sort(rng.choice(p, min(p, es.k_u), replace=False))
        support_v = np.sort(rng.choice(m, min(m, es.k_v), replace=False))
        correlations = leading_correlations(space)
        if config.residual:
            correlations += [config.residual[1] * space.lam] * config.residual[0]
        model = build_model(
            space, config.cov_kind, correlations, support_u, support_v,
            seed=seed, cov_param=config.cov_param,
        )
        cov = sample_covariance(sample(model, n, seed))
    except (NumericalError, ValueError) as exc:
        for row in rows.values():
            row.error = f"model:{type(exc).__name__}"
        return list(rows.values())

    S_u = effective_support(model.U1, es.k_u)
    S_v = effective_support(model.V1, es.k_v)
    fits = {}
    for name in config.estimators:
        row = rows[name]
        try:
            if name == "sparse":
                est = sparse_cca(cov, es.k_u, es.k_v, space.r, budget=config.budget)
                exact = est.support_u == model.support_u and est.support_v == model.support_v
            elif name == "oracle":
                est = oracle_estimator(cov, S_u, S_v, space.r)
                exact = est.support_u == model.support_u and est.support_v == model.support_v
            else:
                est = classical_cca(cov, space.r)
                exact = False
        except (NumericalError, ValueError) as exc:
            row.error = f"fit:{type(exc).__name__}"
            continue
        fits[name] = est
        trunc = truncate(est, space.M_bound, space.r)
        rep_ = loss_report(model, est, trunc.product)
        row.loss, row.proj_loss_u, row.proj_loss_v = rep_
        row.truncated = trunc.truncated
        row.support_exact = bool(exact)

    if "sparse" in fits:
        oracle = fits.get("oracle")
        if oracle is None:
            try:
                oracle = oracle_estimator(cov, S_u, S_v, space.r)
            except NumericalError:
                oracle = None
        if oracle is not None:
            rows["sparse"].certificate = float(
                np.sum(cov.sxy * (oracle.product - fits["sparse"].product))
            )
    return list(rows.values())


def worker_count() -> int:
    env = os.environ.get("SPARSE_CCA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> RiskTable:
    jobs = [(pt, rep) for pt in range(len(config.points())) for rep in range(config.replicates)]
    threads = worker_count() if threads is None else threads
    if threads <= 1:
        results = [_run_replicate(config, pt, rep) for pt, rep in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: _run_replicate(config, *job), jobs))
    order = {name: i for i, name in enumerate(config.estimators)}
    keyed = sorted(zip(jobs, results), key=lambda item: item[0])
    rows = [row for _, rs in keyed for row in sorted(rs, key=lambda r: order[r.estimator])]
    return RiskTable(rows)


@dataclass(frozen=True)
class RateFit:
    estimator: str
    vary: str
    slope: float
    intercept: float
    ratio_min: float
    ratio_median: float
    ratio_max: float


def fit_rate_slope(table: RiskTable, estimator: str, vary: str = "n") -> RateFit:
    """Least-squares slope of log mean loss against log n (or log eps_n^2 across dimensions)."""
    if vary not in ("n", "dimension"):
        raise ValueError(f"vary must be 'n' or 'dimension', got {vary!r}")
    groups = table.groups(estimator)
    if not groups:
        raise ValueError(f"no successful rows for estimator {estimator!r}")
    # the other axis must be held fixed
    fixed = {k[1:3] for k in groups} if vary == "n" else {k[0] for k in groups}
    if len(fixed) != 1:
        raise ValueError(f"varying {vary} needs the other grid axis fixed, found {sorted(fixed)}")
    means, eps, xs = [], [], []
    for key, rows in sorted(groups.items()):
        means.append(float(np.mean([r.loss for r in rows])))
        eps.append(rows[0].eps_n_sq)
        xs.append(key[0] if vary == "n" else rows[0].eps_n_sq)
    if len(set(xs)) < 3:
        raise ValueError(f"need at least 3 distinct values of {vary} to fit a slope")
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(means))
    slope, intercept = np.polyfit(x, y, 1)
    ratios = np.asarray(means) / np.asarray(eps)
    return RateFit(
        estimator, vary, float(slope), float(intercept),
        float(ratios.min()), float(np.median(ratios)), float(ratios.max()),
    )


def summarize(table: RiskTable, n_boot: int = 1000, seed: int = 0) -> list[dict]:
    """Mean loss per group with a 95% basic bootstrap interval."""
    rng = make_rng(seed, 5)
    out = []
    for key, rows in sorted(table.groups().items(), key=lambda kv: (kv[0][:-1], kv[0][-1])):
        losses = np.array([r.loss for r in rows])
        mean = float(losses.mean())
        boot = losses[rng.integers(0, losses.size, size=(n_boot, losses.size))].mean(axis=1)
        lo_q, hi_q = np.quantile(boot, [0.025, 0.975])
        out.append({
            **dict(zip(GROUP_KEYS, key)),
            "replicates": len(rows),
            "mean_loss": mean,
            "ci_low": float(2 * mean - hi_q),
            "ci_high": float(2 * mean - lo_q),
            "eps_n_sq": rows[0].eps_n_sq,
            "support_exact_rate": float(np.mean([r.support_exact for r in rows])),
        })
    return out


def slope_fits(table: RiskTable, estimators: Sequence[str]) -> list[RateFit]:
    fits = []
    for name in estimators:
        for vary in ("n", "dimension"):
            try:
                fits.append(fit_rate_slope(table, name, vary))
            except ValueError:
                pass
    return fits


def write_outputs(table: RiskTable, config: ExperimentConfig, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.write_csv(out_dir / "risks.csv")
    with open(out_dir / "slopes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["estimator", "vary", "slope", "intercept", "ratio_min", "ratio_median", "ratio_max"])
        for fit in slope_fits(table, config.estimators):
            w.writerow([_fmt(v) for v in asdict(fit).values()])
    summary = summarize(table, seed=config.base_seed)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        cols = list(GROUP_KEYS) + ["replicates", "mean_loss", "ci_low", "ci_high", "eps_n_sq", "support_exact_rate"]
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in summary:
            w.writerow([_fmt(rec[c]) for c in cols])
