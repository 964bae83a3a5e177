"""Monte-Carlo check of the discovery-rate coverage bound over a grid of settings.

    python scripts/coverage_bound_check.py --trials 5000
"""

import argparse
import itertools
import sys

from dcopf_bases.learning import validate_theorem2_montecarlo, window_size


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    print("epsilon,delta,tail_mass,W,violation_rate,below_delta")
    worst = True
    for i, (eps, delta, factor) in enumerate(itertools.product([0.02, 0.05, 0.1], [0.01, 0.1], [1.05, 1.5, 3.0])):
        tail = min(1.0, eps * factor)
        rate = validate_theorem2_montecarlo(20, tail, eps, delta, args.trials, seed=args.seed + i)
        worst &= rate < delta
        print(f"{eps},{delta},{tail:.4f},{window_size(eps, delta)},{rate:.5f},{rate < delta}")
    return 0 if worst else 1


if __name__ == "__main__":
    sys.exit(main())
