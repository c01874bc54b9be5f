#!/usr/bin/env python3
"""Sweep the continuous-time walk across tree heights and emit curves.

Writes one CSV per height plus a JSON-lines report, and prints the
best (t, p) per height together with the classical walker baseline at the
2^(n/3) query budget.
"""
from __future__ import annotations

import argparse

from weldlab.harness import ExperimentConfig, cmd_walk, write_report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-min", type=int, default=4)
    ap.add_argument("--n-max", type=int, default=9)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--t-max", type=float, default=60.0)
    ap.add_argument("--out", type=str, default="walk-report.jsonl")
    args = ap.parse_args()
    for n in range(args.n_min, args.n_max + 1):
        cfg = ExperimentConfig(experiment="walk", n=n, seed=args.seed,
                               steps=args.steps, t_max=args.t_max,
                               trials=2000, out=args.out)
        rep = cmd_walk(cfg)
        write_report(rep, args.out)
        best_t = next(c.measured for c in rep.checks if c.name == "best_t")
        best_p = next(c.measured for c in rep.checks if c.name == "best_p")
        walker = next(c.measured for c in rep.checks
                      if c.name.startswith("classical walker"))
        print(f"n={n}: best_p={best_p:.4f} at t={best_t:.2f}; "
              f"classical walker rate={walker}")


if __name__ == "__main__":
    main()
