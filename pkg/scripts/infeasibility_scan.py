"""Count LP-infeasible scenarios per case (the last column of the characteristics table).

    python scripts/infeasibility_scan.py --samples 10000 --cases case30_ieee case162_ieee_dtc
"""

import argparse
import sys

from dcopf_bases.cases import BENCHMARK_CASES, load_problem
from dcopf_bases.learning import UncertaintyModel, sample_omega, solve_scenarios
from dcopf_bases.lp import LpStatus


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cases", nargs="*")
    ap.add_argument("--sigma", type=float, default=0.03)
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    print("case,buses,lines,generators,constraints,infeasible")
    for case in args.cases or BENCHMARK_CASES:
        prob = load_problem(case)
        net = prob.net
        model = UncertaintyModel.from_loads(net.d, args.sigma, args.seed)
        res = solve_scenarios(prob, sample_omega(model, args.samples), args.threads)
        bad = sum(r.status is not LpStatus.OPTIMAL for r in res)
        print(f"{case},{net.v},{net.m},{net.n},{net.constraint_count},{bad}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
