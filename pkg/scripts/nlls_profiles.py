"""Data profiles of R-SGN over subspace sizes of 1%, 5%, 10%, 50% and 100% of d.

Writes results.csv and profile.csv under --out.  Sizes are floored at
--s so the s-hashing ensemble always has s <= l.

    python3 scripts/nlls_profiles.py --d 100 --seeds 0..4 --out out/nlls
"""
import argparse
import sys

from subspace_opt.cli import main as cli_main

FRACTIONS = (0.01, 0.05, 0.1, 0.5, 1.0)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=100)
    ap.add_argument("--problems", default="rosenbrock,broyden,powell,trigonometric,logistic,linear_inconsistent")
    ap.add_argument("--ensembles", default="gaussian,hashing_s,sampling")
    ap.add_argument("--s", type=int, default=3)
    ap.add_argument("--seeds", default="0..4")
    ap.add_argument("--tau", type=float, default=0.1)
    ap.add_argument("--out", default="out/nlls")
    args = ap.parse_args()
    sizes = sorted({max(args.s, round(f * args.d)) for f in FRACTIONS})
    return cli_main(["nlls", "--problems", args.problems, "--ensembles", args.ensembles,
                     "--l", ",".join(map(str, sizes)), "--s", str(args.s), "--d", str(args.d),
                     "--seeds", args.seeds, "--tau", str(args.tau), "--out", args.out])


if __name__ == "__main__":
    sys.exit(main())
