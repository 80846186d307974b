#!/usr/bin/env python3
"""Throughput comparison across sweep strategies and grid sizes.

Times every requested strategy over a size sweep at a fixed cost parameter
and thread count, prints a ns-per-cell-update table, and optionally writes
the full per-repetition CSV.

    python scripts/speedup_experiment.py --sizes 16,32,64,128 --cost const:100
"""

import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stencil_lab.bench import BenchConfig, parse_cost, run_benchmark, write_csv
from stencil_lab.taskrt import Schedule


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="16,32,64,128")
    ap.add_argument("--stencil", default="fd5")
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--cost", default="const:100")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--strategies", default="serial,colouring,nd,taskgraph,hyb-depend,hyb-sync")
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    sizes = tuple(int(s) for s in args.sizes.split(","))
    strategies = args.strategies.split(",")
    cost = parse_cost(args.cost)

    all_results = []
    table = {}
    for strat in strategies:
        cfg = BenchConfig(dim=args.dim, sizes=sizes, stencil=args.stencil,
                          cost=cost, strategy=strat,
                          threads=(1,) if strat == "serial" else (args.threads,),
                          schedule=Schedule("static"), sweeps=args.sweeps,
                          reps=args.reps)
        results = run_benchmark(cfg)
        all_results.extend(results)
        for r in results:
            table[(strat, r.n)] = r.median_seconds() * 1e9 / r.cell_updates

    print(f"\nns per cell update ({args.stencil}, cost {args.cost}, "
          f"T={args.threads}, {args.sweeps} sweeps, median of {args.reps})")
    header = "strategy".ljust(12) + "".join(f"{n:>12}" for n in sizes)
    print(header)
    print("-" * len(header))
    for strat in strategies:
        cells = "".join(f"{table[(strat, n)]:>12.1f}" for n in sizes)
        print(strat.ljust(12) + cells)
    serial_row = [table.get(("serial", n)) for n in sizes]
    if all(serial_row):
        print("\nspeedup vs serial")
        for strat in strategies:
            if strat == "serial":
                continue
            cells = "".join(f"{serial_row[i] / table[(strat, n)]:>12.2f}"
                            for i, n in enumerate(sizes))
            print(strat.ljust(12) + cells)

    if args.csv:
        write_csv(args.csv, all_results)
        print(f"\nwrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
