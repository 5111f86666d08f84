"""Scaling benchmark: forward propagation time over a grid of N and L.

    python3 scripts/run_bench.py [--sizes 500,1000,2000] [--lengths 100,200,400]
                                 [--threads 1] [--repeats 5] [--out bench.csv]

Writes one CSV row per cell and prints the fitted log-log slopes (expected
near 2 against N and near 1 against L).
"""

import argparse
import sys

from lsengine.bench import run_bench, scaling_slopes, write_csv
from lsengine.kernels import detect_lane_width


def ints(text):
    return [int(x) for x in text.split(",") if x]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=ints, default=[500, 1000, 2000])
    ap.add_argument("--lengths", type=ints, default=[100, 200, 400])
    ap.add_argument("--threads", type=ints, default=[1])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out")
    args = ap.parse_args()

    print(f"lane width {detect_lane_width()}", file=sys.stderr)
    rows = run_bench(args.sizes, args.lengths, args.threads, repeats=args.repeats, seed=args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    for k, v in scaling_slopes(rows).items():
        print(f"slope vs {k}: {v:.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
