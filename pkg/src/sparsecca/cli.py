"""Command line workbench: ``rate``, ``simulate``, ``estimate``, ``experiment``, ``verify``.

Exit status is 0 on success, 1 on argument errors and 2 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .errors import NumericalError
from .estimators import (
    DEFAULT_BUDGET,
    classical_cca,
    oracle_estimator,
    sparse_cca,
    truncate,
)
from .harness import ExperimentConfig, run_experiment, write_outputs
from .matcore import write_matrix_csv
from .model import ModelConfig, ParamSpace, minimax_rate, minimax_rate_individual
from .perturb import NORM_KINDS, sweep
from .sampler import DataSet, sample, sample_covariance

CHECKS = ("sintheta", "ranksup", "linearloss", "procrustes", "decomposition")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _index_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparse-cca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    rate = sub.add_parser("rate", help="print the minimax rate eps_n^2")
    rate.add_argument("--q", type=float, default=0.0)
    rate.add_argument("--r", type=int, required=True)
    rate.add_argument("--su", type=float, required=True)
    rate.add_argument("--sv", type=float, required=True)
    rate.add_argument("--p", type=int, required=True)
    rate.add_argument("--m", type=int, required=True)
    rate.add_argument("--n", type=int, required=True)
    rate.add_argument("--lambda", dest="lam", type=float, required=True)
    rate.add_argument("--kappa", type=float, default=1.05)
    rate.add_argument("--M", type=float, default=3.0)
    rate.add_argument("--c0", type=float, default=0.05)
    rate.add_argument("--individual", action="store_true",
                      help="treat --su/--sv as column-wise radii and print the individual-sparsity rate")

    sim = sub.add_parser("simulate", help="build a model from JSON and draw a data set")
    sim.add_argument("--config", required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, default=None, help="sampling seed (default: the config seed)")
    sim.add_argument("--out", required=True)

    est = sub.add_parser("estimate", help="fit an estimator to x.csv / y.csv")
    est.add_argument("--data-dir", required=True)
    est.add_argument("--k-u", type=int)
    est.add_argument("--k-v", type=int)
    est.add_argument("--rank", type=int, required=True)
    est.add_argument("--mode", choices=("sparse", "oracle", "classical"), default="sparse")
    est.add_argument("--support-u", type=_index_list)
    est.add_argument("--support-v", type=_index_list)
    est.add_argument("--M", type=float, default=3.0, help="truncation radius constant")
    est.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    est.add_argument("--out", required=True)

    exp = sub.add_parser("experiment", help="run a Monte Carlo experiment from a JSON config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--out", default=".")
    exp.add_argument("--threads", type=int, default=None)

    ver = sub.add_parser("verify", help="randomized checks of the perturbation inequalities")
    ver.add_argument("--check", choices=CHECKS, required=True)
    ver.add_argument("--trials", type=int, default=100)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--norm", choices=NORM_KINDS, default="frobenius")
    ver.add_argument("--n", type=int, default=None)
    ver.add_argument("--d", type=int, default=None)
    ver.add_argument("--r", type=int, default=None)
    ver.add_argument("--out", default="report.csv")
    return parser


def _cmd_rate(args) -> int:
    space = ParamSpace(
        p=args.p, m=args.m, r=args.r, s_u=args.su, s_v=args.sv, lam=args.lam, q=args.q,
        kappa=args.kappa, M_bound=args.M, c0=args.c0,
    )
    if args.individual:
        value = minimax_rate_individual(args.su, args.sv, space, args.n)
    else:
        value = minimax_rate(space, args.n)
    print(repr(value))
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_json(args.config, ModelConfig.from_dict)
    model = cfg.build()
    out = Path(args.out)
    model.export(out)
    data = sample(model, args.n, cfg.seed if args.seed is None else args.seed)
    data.export(out)
    meta = cfg.to_dict()
    meta.update(
        n=args.n,
        sample_seed=data.seed,
        support_u=list(model.support_u),
        support_v=list(model.support_v),
    )
    _write_json(out / "model.json", meta)
    return 0


def _cmd_estimate(args) -> int:
    data = DataSet.load(args.data_dir)
    cov = sample_covariance(data)
    if args.mode == "sparse":
        if args.k_u is None or args.k_v is None:
            raise UsageError("--k-u and --k-v are required in sparse mode")
        est = sparse_cca(cov, args.k_u, args.k_v, args.rank, budget=args.budget)
    elif args.mode == "oracle":
        if not args.support_u or not args.support_v:
            raise UsageError("--support-u and --support-v are required in oracle mode")
        est = oracle_estimator(cov, args.support_u, args.support_v, args.rank)
    else:
        est = classical_cca(cov, args.rank)
    trunc = truncate(est, args.M, args.rank)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "A.csv", est.A)
    write_matrix_csv(out / "B.csv", est.B)
    write_matrix_csv(out / "product.csv", trunc.product)
    _write_json(out / "meta.json", {
        "mode": args.mode,
        "n": data.n,
        "rank": args.rank,
        "objective": est.objective,
        "support_u": list(est.support_u),
        "support_v": list(est.support_v),
        "singular_values": [float(s) for s in est.singular_values],
        "truncated": trunc.truncated,
        "skipped_supports": est.skipped,
    })
    return 0


def _cmd_experiment(args) -> int:
    config = _load_json(args.config, ExperimentConfig.from_dict)
    table = run_experiment(config, threads=args.threads)
    write_outputs(table, config, args.out)
    return 0


def _cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    options = {"norm_kind": args.norm}
    for key in ("n", "d", "r"):
        if getattr(args, key) is not None:
            options[key] = getattr(args, key)
    rows = sweep(args.check, args.trials, args.seed, **options)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])
    failures = sum(not row["holds"] for row in rows)
    print(f"{args.check}: {len(rows) - failures}/{len(rows)} trials pass")
    return 0 if failures == 0 else 2


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_json(path, factory):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return factory(raw)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"config {path} is missing or has a malformed field: {exc}") from exc


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


COMMANDS = {
    "rate": _cmd_rate,
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "experiment": _cmd_experiment,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sparse-cca {args.command}: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"sparse-cca {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FileNotFoundError) as exc:
        print(f"sparse-cca {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
