#!/usr/bin/env python3
"""Exercise the classical simulators against the exact executor.

Runs the few-tier and Jozsa simulators on a batch of random relativized
circuits, reporting query counts against their ceilings and the
total-variation distance to the exact reference per labeling; then runs the
bottleneck pipeline on all-quantum circuits, including the tau=0
degeneration check.
"""
from __future__ import annotations

import argparse

import numpy as np

import sys
import pathlib
sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "tests"))

from weldlab import bottleneck as BN
from weldlab import circuits as C
from weldlab import hybrid_sim as HS
from weldlab import tree
from circuit_gen import random_hybrid, random_jozsa


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--circuits", type=int, default=10)
    ap.add_argument("--labelings", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    n = args.n
    g = 4 * n + 4
    structure = tree.generate_structure(n, args.seed)

    print("== few-tier hybrid circuits ==")
    for k in range(args.circuits):
        circ = random_hybrid(rng, n=n, g=g, eta=int(rng.integers(1, 5)),
                             max_c=3, max_q=3, p_query=0.7)
        rep = HS.compare_to_reference(circ, structure, args.labelings, seed=k)
        print(f"circuit {k}: eta={circ.eta} queries~{rep.mean_queries:.1f} "
              f"(ceiling {HS.wrapper_query_ceiling(circ)}), "
              f"mean TV={rep.mean_tv:.4f}, identity gap={rep.max_fidelity_gap:.1e}")

    print("== jozsa circuits ==")
    for k in range(max(args.circuits // 2, 1)):
        circ = random_jozsa(rng, n=n, g=g, eta=int(rng.integers(1, 3)),
                            max_c=2, max_q=2, p_query=0.6)
        rep = HS.compare_to_reference(circ, structure, args.labelings, seed=k)
        d = C.total_quantum_layers(circ)
        c_depth = C.accounting(circ).max_classical_depth
        print(f"jozsa {k}: queries~{rep.mean_queries:.1f} "
              f"(ceiling {4 ** d + c_depth * g}), mean TV={rep.mean_tv:.4f}")

    print("== bottleneck pipeline (all-quantum) ==")
    bbt = tree.make_blackbox(n, args.seed)
    for k in range(max(args.circuits // 2, 1)):
        circ = random_hybrid(rng, n=n, g=g, eta=int(rng.integers(1, 4)),
                             max_c=1, max_q=2, p_query=0.6, all_quantum=True)
        stats = C.accounting(circ)
        tape = BN.SeedTape.generate(k, n, circ.eta,
                                    max(stats.max_quantum_depth, 1), g)
        res = BN.bottleneck_wrapper(circ, bbt, seed=k, tape=tape)
        b0 = BN.bottleneck_wrapper(circ, bbt, seed=k,
                                   cfg=BN.BottleneckConfig(tau=0.0), tape=tape)
        f0 = HS.few_tier_wrapper(circ, bbt, seed=k, tier_seed_fn=tape.tier_seed)
        degen = b0.transcript.to_json() == f0.transcript.to_json()
        vout = res.known.size() if res.known is not None else "-"
        print(f"bottleneck {k}: aborted={res.aborted} |V|={vout} "
              f"|V_hist|={res.hist.size()} tau0-identical={degen}")


if __name__ == "__main__":
    main()
