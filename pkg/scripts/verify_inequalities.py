"""Randomized sweeps of every perturbation check; prints failures and the tightest margins."""

import argparse

from sparsecca.perturb import sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for check, opts in [
        ("sintheta", {"norm_kind": "frobenius"}),
        ("sintheta", {"norm_kind": "operator"}),
        ("linearloss", {}),
        ("procrustes", {}),
        ("ranksup", {}),
        ("decomposition", {}),
    ]:
        trials = min(args.trials, 200) if check == "decomposition" else args.trials
        rows = sweep(check, trials, args.seed, **opts)
        fails = sum(not r["holds"] for r in rows)
        label = check + (f"[{opts['norm_kind']}]" if opts else "")
        extra = ""
        if check == "sintheta":
            extra = f", min margin {min(r['margin'] for r in rows):.3e}"
        elif check == "decomposition":
            extra = f", max certificate {max(r['certificate'] for r in rows):.3e}"
        print(f"{label:>24}: {fails} failures / {trials}{extra}")


if __name__ == "__main__":
    main()
