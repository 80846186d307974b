"""Command-line front end.

    stencil-lab run     time sweeps, emit CSV rows (one per repetition plus a
                        median summary per point)
    stencil-lab trace   run one traced configuration; dump records as text
                        and/or render the first sweep's assignment map as PPM
    stencil-lab verify  run the verification suites

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .bench import (BenchConfig, ConfigError, StrategyRunner, format_csv_rows,
                    parse_cost, run_benchmark, run_verification, write_csv)
from .taskrt import Schedule
from .trace import dump_text, render_assignment_map


def _int_list(text: str):
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integer(s), got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--size", type=_int_list, default=(16,),
                   help="interior extent n, or comma list")
    p.add_argument("--stencil", default="fd5",
                   choices=("fd5", "fe9", "fd7", "fe27"))
    p.add_argument("--cost", default="const:0", help="const:<k> or ramp")
    p.add_argument("--strategy", default="serial",
                   choices=("serial", "colouring", "nd", "taskgraph",
                            "hyb-depend", "hyb-sync"))
    p.add_argument("--threads", type=_int_list, default=(1,),
                   help="worker count, or comma list")
    p.add_argument("--schedule", default="static", help="static or dynamic:<chunk>")
    p.add_argument("--chunk", type=int, default=1,
                   help="cells per task for taskgraph/hyb-depend")
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)


def _config_from(args) -> BenchConfig:
    try:
        schedule = Schedule.parse(args.schedule)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return BenchConfig(dim=args.dim, sizes=args.size, stencil=args.stencil,
                       cost=parse_cost(args.cost), strategy=args.strategy,
                       threads=args.threads, schedule=schedule,
                       chunk=args.chunk, sweeps=args.sweeps, reps=args.reps,
                       seed=args.seed).validated()


def _cmd_run(args) -> int:
    config = _config_from(args)
    results = run_benchmark(config)
    if args.csv:
        write_csv(args.csv, results)
        print(f"wrote {args.csv}")
    else:
        print("\n".join(format_csv_rows(results)))
    for r in results:
        med = r.median_seconds()
        print(f"# {r.strategy} {r.stencil} n={r.n} T={r.threads}: "
              f"median {med:.6f}s over {r.sweeps} sweeps, "
              f"{med * 1e9 / r.cell_updates:.1f} ns/cell-update "
              f"(min {r.min_seconds():.6f}, max {r.max_seconds():.6f})",
              file=sys.stderr)
    return 0


def _cmd_trace(args) -> int:
    config = _config_from(args)
    if len(config.sizes) != 1 or len(config.threads) != 1:
        raise ConfigError("trace needs a single --size and a single --threads value")
    n, t = config.sizes[0], config.threads[0]
    with StrategyRunner(config.dim, n, config.stencil, config.cost,
                        config.strategy, threads=t, schedule=config.schedule,
                        chunk=config.chunk, seed=config.seed) as runner:
        runner.reinit()
        runner.start_trace(config.sweeps * n ** config.dim)
        runner.run_sweeps(config.sweeps)
        tr = runner.stop_trace()
        if args.dump:
            dump_text(tr, args.dump)
            print(f"wrote {args.dump} ({len(tr)} records)")
        if args.map:
            ppm = render_assignment_map(tr, runner.mesh, sweep=0)
            with open(args.map, "wb") as fh:
                fh.write(ppm)
            print(f"wrote {args.map}")
    return 0


def _cmd_verify(args) -> int:
    report = run_verification(args.suite, progress=print if args.verbose else None)
    if not args.verbose:
        print("\n".join(report.lines))
    print(f"verify {args.suite}: {'PASS' if report.ok else 'FAIL'}")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stencil-lab",
        description="Sweep-strategy laboratory for compact stencils on regular grids")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="time sweeps and emit CSV")
    _add_run_flags(p_run)
    p_run.add_argument("--csv", help="output path (default: print to stdout)")
    p_run.set_defaults(fn=_cmd_run)

    p_trace = sub.add_parser("trace", help="trace one configuration")
    _add_run_flags(p_trace)
    p_trace.add_argument("--map", help="write the first sweep's assignment map (PPM)")
    p_trace.add_argument("--dump", help="write the trace records as text")
    p_trace.set_defaults(fn=_cmd_trace)

    p_verify = sub.add_parser("verify", help="run the verification suites")
    p_verify.add_argument("--suite", default="all",
                          choices=("races", "deps", "convergence", "oracle", "all"))
    p_verify.add_argument("--verbose", action="store_true",
                          help="stream per-check lines as they finish")
    p_verify.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
