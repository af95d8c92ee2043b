"""Run acceptance criteria and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py                 # all twelve, full size
    python3 scripts/run_acceptance.py --scale 0.1 --criteria 1,5,12
"""
import argparse
import sys

from subspace_opt import acceptance


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--criteria", default="1..12", help="'1..12' or a comma list")
    ap.add_argument("--scale", type=float, default=1.0, help="fraction of the full trial counts")
    args = ap.parse_args()
    if ".." in args.criteria:
        a, b = args.criteria.split("..")
        numbers = range(int(a), int(b) + 1)
    else:
        numbers = [int(t) for t in args.criteria.split(",")]
    results = acceptance.run_criteria(numbers, scale=args.scale)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
