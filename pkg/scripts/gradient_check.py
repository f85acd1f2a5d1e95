"""Steering-gradient and ridge-solver checks against independent references.

    python3 scripts/gradient_check.py [--instances 100 --ridge-instances 1000 --seed 0]
"""
import argparse
import sys

from maphdr.selftest import gradient_check, ridge_check


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--ridge-instances", type=int, default=1000)
    ap.add_argument("--block-size", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    reports = [gradient_check(args.instances, args.seed, args.block_size),
               ridge_check(args.ridge_instances, args.seed)]
    for rep in reports:
        print(f"{'PASS' if rep.passed else 'FAIL'} {rep.name}: {rep.instances} instances, "
              f"worst {rep.worst:.2e} (tolerance {rep.tolerance:.0e}), {rep.seconds:.2f}s")
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
