"""Run every statistical suite and print one line per suite.

usage: python3 scripts/run_acceptance.py [--scale quick|full] [--seed N] [--suite NAME ...]
"""

import argparse
import sys

from sndo.experiments import SUITES, run_suite


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", choices=("quick", "full"), default="full")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--suite", nargs="*", choices=sorted(SUITES))
    args = ap.parse_args()
    ok = True
    for name in args.suite or SUITES:
        res = run_suite(name, args.scale, args.seed)
        print(res.line(), flush=True)
        ok &= res.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
