"""Learn and evaluate every benchmark case, then merge the reports into summary tables.

    python scripts/reproduce_tables.py --out results/grid --cases case3_lmbd case14_ieee
    python scripts/reproduce_tables.py --sigmas 0.01 0.03 0.05 --threads 4

Cases that finish inconclusive are still evaluated.
"""

import argparse
import sys
import time
from pathlib import Path

from dcopf_bases.cases import BENCHMARK_CASES
from dcopf_bases.cli import EXIT_ERROR, main

LARGE = {"case1888_rte", "case1951_rte", "case240_pserc"}


def run(args) -> int:
    cases = args.cases or [c for c in BENCHMARK_CASES if args.large or c not in LARGE]
    reports = []
    for case in cases:
        for sigma in args.sigmas:
            common = ["--case", case, "--sigma", str(sigma), "--seed", str(args.seed), "--samples", str(args.samples),
                      "--n-test", str(args.n_test), "--threads", str(args.threads), "--out", args.out]
            t0 = time.perf_counter()
            if main(["learn", *common]) == EXIT_ERROR or main(["evaluate", *common, "--format", "json"]) != 0:
                print(f"{case} sigma={sigma}: failed", file=sys.stderr)
                continue
            print(f"  ({time.perf_counter() - t0:.1f}s)")
            reports += sorted(Path(args.out).glob(f"*_{sigma:g}_{args.seed}_report.json"))
    paths = sorted({str(p) for p in reports})
    for fmt, ext in (("text", "txt"), ("csv", "csv")):
        main(["report", *paths, "--format", fmt, "--out", str(Path(args.out) / f"summary.{ext}")])
    print((Path(args.out) / "summary.txt").read_text())
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--cases", nargs="*")
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.03])
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--n-test", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/grid")
    ap.add_argument("--large", action="store_true", help="include the 1888/1951/240-bus cases")
    sys.exit(run(ap.parse_args()))
