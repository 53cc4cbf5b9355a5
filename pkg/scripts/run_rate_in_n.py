"""Mean loss against n for the exhaustive-support estimator (expected log-log slope -1)."""

from _common import parser, print_means, print_slope, run


def main():
    args = parser(__doc__, "rate_in_n.json").parse_args()
    cfg, table, out = run(args)
    print_means(table, cfg.estimators)
    for name in cfg.estimators:
        print_slope(table, name, "n")
    print(f"wrote {out}/risks.csv, slopes.csv, summary.csv")


if __name__ == "__main__":
    main()
