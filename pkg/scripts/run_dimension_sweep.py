"""Loss divided by the minimax rate across dimensions at fixed n (expected roughly constant)."""

from _common import parser, print_means, print_slope, run


def main():
    args = parser(__doc__, "dimension_sweep.json").parse_args()
    cfg, table, out = run(args)
    print_means(table, cfg.estimators)
    for name in cfg.estimators:
        fit = print_slope(table, name, "dimension")
        if fit is not None:
            print(f"{name}: max/min loss/eps^2 = {fit.ratio_max / fit.ratio_min:.3f}")
    print(f"wrote {out}/risks.csv, slopes.csv, summary.csv")


if __name__ == "__main__":
    main()
