#!/usr/bin/env python3
"""Render worker-assignment maps for every parallel strategy.

Reproduces the classic who-updated-which-cell pictures: one PPM per strategy
for a homogeneous cost and one for the 0..99 ramp, on a small 2D grid.

    python scripts/render_maps.py --out maps/ --size 10 --threads 3
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from stencil_lab.bench import StrategyRunner, parse_cost
from stencil_lab.taskrt import Schedule
from stencil_lab.trace import render_assignment_map

STRATEGIES = ("colouring", "nd", "taskgraph", "hyb-depend", "hyb-sync")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="maps")
    ap.add_argument("--size", type=int, default=10)
    ap.add_argument("--threads", type=int, default=3)
    ap.add_argument("--stencil", default="fd5")
    ap.add_argument("--schedule", default="static")
    args = ap.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = args.size
    for cost_text in ("const:0", "ramp"):
        cost = parse_cost(cost_text)
        tag = cost_text.replace(":", "")
        for strat in STRATEGIES:
            with StrategyRunner(2, n, args.stencil, cost, strat,
                                threads=args.threads,
                                schedule=Schedule.parse(args.schedule),
                                seed=12) as runner:
                runner.reinit()
                runner.start_trace(n * n)
                runner.sweep()
                trace = runner.stop_trace()
                ppm = render_assignment_map(trace, runner.mesh, sweep=0)
            path = out / f"{strat}_{args.stencil}_n{n}_T{args.threads}_{tag}.ppm"
            path.write_bytes(ppm)
            print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
