"""Shared helpers for the experiment scripts."""

import argparse
from pathlib import Path

from sparsecca.harness import ExperimentConfig, fit_rate_slope, run_experiment, write_outputs

CONFIGS = Path(__file__).resolve().parent / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=str(CONFIGS / default_config))
    ap.add_argument("--out", default=None, help="output directory (default: results/<config stem>)")
    ap.add_argument("--replicates", type=int, default=None, help="override the replicate count")
    ap.add_argument("--threads", type=int, default=None)
    return ap


def run(args, **overrides):
    cfg = ExperimentConfig.load(args.config)
    if args.replicates is not None:
        overrides["replicates"] = args.replicates
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    out = Path(args.out or Path("results") / Path(args.config).stem)
    table = run_experiment(cfg, threads=args.threads)
    write_outputs(table, cfg, out)
    return cfg, table, out


def print_means(table, estimators):
    print(f"{'estimator':>10} {'n':>6} {'p':>4} {'mean loss':>12} {'eps_n^2':>10} {'ratio':>7} {'exact':>6}")
    for name in estimators:
        for key, rows in sorted(table.groups(name).items()):
            mean = sum(r.loss for r in rows) / len(rows)
            exact = sum(r.support_exact for r in rows) / len(rows)
            eps = rows[0].eps_n_sq
            print(f"{name:>10} {key[0]:>6} {key[1]:>4} {mean:12.6f} {eps:10.6f} {mean / eps:7.3f} {exact:6.2f}")


def print_slope(table, estimator, vary):
    try:
        fit = fit_rate_slope(table, estimator, vary)
    except ValueError as exc:
        print(f"{estimator}: no slope ({exc})")
        return None
    print(f"{estimator}: slope {fit.slope:.3f}, loss/eps^2 in [{fit.ratio_min:.3f}, {fit.ratio_max:.3f}]")
    return fit
