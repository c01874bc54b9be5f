#!/usr/bin/env python3
"""Fresh-valid-label guessing experiment across (n, h) cells.

Prints the empirical guessing rate against the h(2^(n+2)-2)/2^(2n) bound
and appends a report line per n.
"""
from __future__ import annotations

import argparse

from weldlab.harness import (ExperimentConfig, cmd_discovery, discovery_bound,
                             write_report)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[3, 4, 5])
    ap.add_argument("--h", type=int, nargs="+", default=[1, 4, 16])
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--out", type=str, default="discovery-report.jsonl")
    args = ap.parse_args()
    for n in args.n:
        cfg = ExperimentConfig(experiment="discovery", n=n, seed=args.seed,
                               trials=args.trials, h_values=tuple(args.h),
                               jobs=args.jobs, out=args.out)
        rep = cmd_discovery(cfg)
        write_report(rep, args.out)
        for chk in rep.checks:
            if chk.kind == "statistical":
                print(f"{chk.name}: rate={chk.measured:.5f} "
                      f"bound={chk.bound:.5f} sigma={chk.sigma:.5f} "
                      f"{'ok' if chk.passed else 'VIOLATION'}")
    print("exact bound at n=3, h=1:", discovery_bound(3, 1), "= 30/64")


if __name__ == "__main__":
    main()
