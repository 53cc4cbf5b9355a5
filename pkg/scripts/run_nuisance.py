"""Compare mean loss with and without nuisance structure (AR(1) covariances, residual directions)."""

from _common import parser, run
from sparsecca.harness import ExperimentConfig


def _means(table):
    return {k[0]: sum(r.loss for r in v) / len(v) for k, v in sorted(table.groups("sparse").items())}


def main():
    ap = parser(__doc__, "nuisance_ar1_residual.json")
    args = ap.parse_args()
    nuisance_cfg = ExperimentConfig.load(args.config)
    variants = {
        "baseline": dict(cov_kind="identity", cov_param=None, residual=None),
        "ar1": dict(residual=None),
        "residual": dict(cov_kind="identity", cov_param=None),
        "ar1+residual": {},
    }
    out_root = args.out or "results/nuisance"
    means = {}
    for name, overrides in variants.items():
        args.out = f"{out_root}/{name}"
        _, table, _ = run(args, estimators=("sparse",), **overrides)
        means[name] = _means(table)
    base = means["baseline"]
    print(f"{'n':>6} " + " ".join(f"{name:>14}" for name in variants))
    for n in nuisance_cfg.n_grid:
        print(f"{n:>6} " + " ".join(f"{means[name][n]:14.6f}" for name in variants))
    for name in list(variants)[1:]:
        worst = max(max(means[name][n] / base[n], base[n] / means[name][n]) for n in nuisance_cfg.n_grid)
        print(f"{name}: largest factor from baseline {worst:.3f}")


if __name__ == "__main__":
    main()
