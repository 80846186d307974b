"""Benchmark harness: configuration, multi-sweep timing, CSV, verification.

A benchmark point is one (size, thread-count) combination of a config.  Per
repetition the mesh is re-initialised from the seed, warmed up with three
untimed sweeps, then `sweeps` consecutive sweeps are timed as one batch with
the shared monotonic clock (per-cell-update time is derived by division, the
figure of interest).  Worker threads are created once per point and parked
between sweeps, so task-strategy overhead measured is scheduling, not thread
creation.

The verification suites bundle the property checks:

  races        traced matrix of strategies; adjacency exclusion plus
               exactly-once / completeness per run
  deps         exhaustive small-mesh equivalence of the dependence tracker
               against the brute-force edge oracle
  convergence  every strategy must reach residual 1e-8 within twice the
               serial sweep budget (budget measured first, same run)
  oracle       parallel colouring must equal the single-threaded
               colour-order reference bit for bit
"""

from __future__ import annotations

import hashlib
import statistics
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from time import perf_counter_ns

import numpy as np

from . import strategies
from .kernels import CostModel, STENCILS, get_stencil, residual_max
from .mesh import Mesh, init
from .taskrt import Schedule, WorkerPool
from .trace import TraceLog, check_adjacency_exclusion, check_edge_order, merge_logs

CSV_HEADER = "dim,n,stencil,cost,strategy,threads,schedule,chunk,sweeps,rep,seconds,ns_per_cell_update,digest"

WARMUP_SWEEPS = 3
CONVERGENCE_TOL = 1e-8


class ConfigError(ValueError):
    """Invalid benchmark configuration (reported before any work runs)."""


def parse_cost(text: str) -> CostModel:
    if text == "ramp":
        return CostModel("ramp")
    if text.startswith("const"):
        _, _, rest = text.partition(":")
        try:
            return CostModel("const", int(rest))
        except ValueError:
            raise ConfigError(f"cannot parse cost {text!r}") from None
    raise ConfigError(f"cost must be 'const:<k>' or 'ramp', got {text!r}")


@dataclass(frozen=True)
class BenchConfig:
    dim: int = 2
    sizes: tuple = (16,)
    stencil: str = "fd5"
    cost: CostModel = CostModel("const", 0)
    strategy: str = "serial"
    threads: tuple = (1,)
    schedule: Schedule = Schedule("static")
    chunk: int = 1
    sweeps: int = 100
    reps: int = 3
    seed: int = 42
    boundary: float = 0.0

    def validated(self) -> "BenchConfig":
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        kind = STENCILS.get(self.stencil.lower())
        if kind is None:
            raise ConfigError(f"unknown stencil {self.stencil!r}")
        if kind.dim != self.dim:
            raise ConfigError(f"stencil {kind.name} is {kind.dim}D, config says dim={self.dim}")
        try:
            strat = strategies.canonical_strategy(self.strategy)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.sizes or any(n < 1 for n in self.sizes):
            raise ConfigError(f"sizes must be positive, got {self.sizes}")
        if not self.threads or any(t < 1 for t in self.threads):
            raise ConfigError(f"thread counts must be positive, got {self.threads}")
        if self.sweeps < 1:
            raise ConfigError("sweeps must be >= 1")
        if self.reps < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.chunk < 1:
            raise ConfigError("chunk must be >= 1")
        return replace(self, stencil=kind.name, strategy=strat)


@dataclass
class BenchResult:
    """Timing for one benchmark point: config echo plus per-repetition data."""

    dim: int
    n: int
    stencil: str
    cost: str
    strategy: str
    threads: int
    schedule: str
    chunk: int
    sweeps: int
    seconds: list = field(default_factory=list)
    digests: list = field(default_factory=list)

    @property
    def cell_updates(self) -> int:
        return self.sweeps * self.n ** self.dim

    def ns_per_cell_update(self, rep: int) -> float:
        return self.seconds[rep] * 1e9 / self.cell_updates

    def median_seconds(self) -> float:
        return statistics.median(self.seconds)

    def min_seconds(self) -> float:
        return min(self.seconds)

    def max_seconds(self) -> float:
        return max(self.seconds)

    def common_digest(self) -> str:
        return self.digests[0] if len(set(self.digests)) == 1 else "mixed"


def mesh_digest(mesh: Mesh) -> str:
    """Canonical bitwise digest of the value buffer."""
    return hashlib.sha256(mesh.values.tobytes()).hexdigest()


class StrategyRunner:
    """Mesh, plan, and (for parallel strategies) pool for one benchmark point."""

    def __init__(self, dim, n, stencil, cost, strategy, threads=1,
                 schedule=Schedule("static"), chunk=1, seed=42, boundary=0.0,
                 steal_seed=None, stall_timeout=10.0):
        self.kind = get_stencil(stencil) if isinstance(stencil, str) else stencil
        if self.kind.dim != dim:
            raise ConfigError(f"stencil {self.kind.name} is {self.kind.dim}D, not {dim}D")
        self.strategy = strategies.canonical_strategy(strategy)
        self.mesh = Mesh(dim, n)
        self.cost = cost
        self.schedule = schedule
        self.chunk = chunk
        self.seed = seed
        self.boundary = boundary
        self.plan = strategies.SweepPlan(self.mesh, self.kind, cost)
        self.pool = None
        if self.strategy != "serial":
            self.pool = WorkerPool(threads, steal_seed=steal_seed,
                                   stall_timeout=stall_timeout)
        self._serial_log = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()
            self.pool = None

    def reinit(self, seed=None):
        init(self.mesh, self.seed if seed is None else seed, self.boundary)

    def sweep(self):
        strategies.run_sweep(self.strategy, self.mesh, self.kind, self.cost,
                             pool=self.pool, schedule=self.schedule,
                             chunk=self.chunk, plan=self.plan,
                             log=self._serial_log)

    def run_sweeps(self, count: int):
        for _ in range(count):
            self.sweep()

    def start_trace(self, capacity_hint=0):
        if self.pool is not None:
            self.pool.start_trace(capacity_hint)
        else:
            self._serial_log = TraceLog(0, capacity_hint)

    def stop_trace(self):
        if self.pool is not None:
            return self.pool.stop_trace()
        log, self._serial_log = self._serial_log, None
        return merge_logs([log]) if log is not None else None

    def digest(self) -> str:
        return mesh_digest(self.mesh)


def run_benchmark(config: BenchConfig) -> list:
    """Time every (size, threads) point of the config; one result per point."""
    config = config.validated()
    results = []
    for n in config.sizes:
        for t in config.threads:
            result = BenchResult(config.dim, n, config.stencil,
                                 config.cost.describe(), config.strategy, t,
                                 config.schedule.describe(), config.chunk,
                                 config.sweeps)
            with StrategyRunner(config.dim, n, config.stencil, config.cost,
                                config.strategy, threads=t,
                                schedule=config.schedule, chunk=config.chunk,
                                seed=config.seed,
                                boundary=config.boundary) as runner:
                for _rep in range(config.reps):
                    runner.reinit()
                    runner.run_sweeps(WARMUP_SWEEPS)
                    t0 = perf_counter_ns()
                    runner.run_sweeps(config.sweeps)
                    t1 = perf_counter_ns()
                    result.seconds.append((t1 - t0) / 1e9)
                    result.digests.append(runner.digest())
            results.append(result)
    return results


# ---------------------------------------------------------------------------
# CSV


def format_csv_rows(results) -> list:
    rows = [CSV_HEADER]
    for r in results:
        base = (f"{r.dim},{r.n},{r.stencil},{r.cost},{r.strategy},{r.threads},"
                f"{r.schedule},{r.chunk},{r.sweeps}")
        for rep, (sec, dig) in enumerate(zip(r.seconds, r.digests)):
            rows.append(f"{base},{rep},{sec!r},{r.ns_per_cell_update(rep)!r},{dig}")
        med = r.median_seconds()
        med_ns = med * 1e9 / r.cell_updates
        rows.append(f"{base},median,{med!r},{med_ns!r},{r.common_digest()}")
    return rows


def write_csv(path, results):
    with open(path, "w") as fh:
        fh.write("\n".join(format_csv_rows(results)) + "\n")


def parse_csv(lines) -> list:
    """Rebuild BenchResults from CSV text lines (inverse of format_csv_rows)."""
    if isinstance(lines, str):
        lines = lines.strip().splitlines()
    lines = [ln.strip() for ln in lines if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("missing or unexpected CSV header")
    results = {}
    for ln in lines[1:]:
        (dim, n, stencil, cost, strategy, threads, schedule, chunk, sweeps,
         rep, seconds, ns, digest) = ln.split(",")
        key = (dim, n, stencil, cost, strategy, threads, schedule, chunk, sweeps)
        if key not in results:
            results[key] = BenchResult(int(dim), int(n), stencil, cost, strategy,
                                       int(threads), schedule, int(chunk),
                                       int(sweeps))
        r = results[key]
        if rep == "median":
            continue   # summary rows are derivable; rep rows carry the data
        if int(rep) != len(r.seconds):
            raise ValueError(f"repetition rows out of order near: {ln}")
        r.seconds.append(float(seconds))
        r.digests.append(digest)
    return list(results.values())


# ---------------------------------------------------------------------------
# verification suites


@dataclass
class Report:
    ok: bool
    lines: list

    def extend(self, other: "Report"):
        self.ok = self.ok and other.ok
        self.lines.extend(other.lines)


@contextmanager
def gil_switch_interval(interval: float):
    """Temporarily shrink the interpreter's thread switch interval so traced
    runs interleave densely and the overlap checks bite harder."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(interval)
    try:
        yield
    finally:
        sys.setswitchinterval(old)


def _kinds_for(kind_names=None):
    names = kind_names or tuple(STENCILS)
    return [STENCILS[k] for k in names]


def verify_races(reps=10, threads=(2, 4, 8), sizes=(8, 16, 32),
                 strategy_ids=strategies.STRATEGY_IDS, kind_names=None,
                 cost=CostModel("const", 0), fault=False, progress=None) -> Report:
    """Traced exclusion matrix plus exactly-once / completeness per run.

    With fault=True, runs the deliberately racy single-pass colouring variant
    instead; a healthy checker must then report violations (ok=False).
    """
    report = Report(True, [])
    if fault:
        return _verify_races_fault(report)
    with gil_switch_interval(1e-4):
        for kind in _kinds_for(kind_names):
            for n in sizes:
                for strat in strategy_ids:
                    for t in threads:
                        bad = _race_point(kind, n, strat, t, reps, cost)
                        line = (f"races {strat:>10} {kind.name:>4} n={n:<3} T={t}: "
                                + ("ok" if not bad else "; ".join(bad)))
                        report.lines.append(line)
                        if bad:
                            report.ok = False
                        if progress:
                            progress(line)
    return report


def _race_point(kind, n, strat, t, reps, cost) -> list:
    problems = []
    with StrategyRunner(kind.dim, n, kind, cost, strat, threads=t,
                        seed=1) as runner:
        interior = runner.mesh.interior_flat()
        for rep in range(reps):
            runner.reinit(seed=1000 + rep)
            record_edges = (strat in ("taskgraph", "hyb-depend")
                            and runner.pool is not None and rep == 0)
            if record_edges:
                runner.pool.record_edges(True)
            runner.start_trace(len(interior))
            runner.sweep()
            tr = runner.stop_trace()
            if len(tr) != len(interior):
                problems.append(f"rep {rep}: {len(tr)} records, expected {len(interior)}")
            counts = tr.write_counts(interior)
            if not (counts == 1).all():
                off = int(np.count_nonzero(counts != 1))
                problems.append(f"rep {rep}: {off} cells not written exactly once")
            viol = check_adjacency_exclusion(tr, kind, runner.mesh)
            if viol:
                problems.append(f"rep {rep}: {len(viol)} adjacency overlap(s)")
            if record_edges:
                bad_edges = check_edge_order(tr, runner.pool.edges)
                runner.pool.record_edges(False)
                if bad_edges:
                    problems.append(f"rep {rep}: {len(bad_edges)} edge-order violation(s)")
            if problems:
                break
    return problems


def _verify_races_fault(report: Report) -> Report:
    # negative control: single-pass "colouring" must trip the checker; the
    # dynamic(1) schedule puts adjacent rows on different workers at the same
    # time, so the injected race reliably materialises as interval overlap
    kind = STENCILS["fd5"]
    found = 0
    with gil_switch_interval(5e-6):
        with StrategyRunner(2, 24, kind, CostModel("const", 60), "colouring",
                            threads=4, schedule=Schedule("dynamic", 1),
                            seed=1) as runner:
            for rep in range(20):
                runner.reinit(seed=rep)
                runner.start_trace(runner.mesh.interior_count)
                strategies.sweep_colouring(runner.pool, runner.mesh, kind,
                                           runner.cost, runner.schedule,
                                           plan=runner.plan,
                                           _fault_merge_colours=True)
                tr = runner.stop_trace()
                found += len(check_adjacency_exclusion(tr, kind, runner.mesh))
                if found:
                    break
    report.ok = found == 0
    report.lines.append(f"races fault-injection: {found} violation(s) detected")
    return report


def verify_deps(progress=None) -> Report:
    """Exhaustive tracker-vs-oracle equivalence on small meshes.

    All four stencils, 2D n in 1..6 and 3D n in 1..4, both lexicographic and
    colour-major submission orders, nothing executing.
    """
    from .taskrt import DependencyTracker, make_task, oracle_edges

    report = Report(True, [])
    for kind in STENCILS.values():
        sizes = range(1, 7) if kind.dim == 2 else range(1, 5)
        for n in sizes:
            mesh = Mesh(kind.dim, n)
            plan = strategies.SweepPlan(mesh, kind, CostModel("const", 0))
            for order_name, colour_major in (("lex", False), ("colour", True)):
                groups = plan.task_groups(1, colour_major)
                tracker = DependencyTracker()
                tasks = []
                got = set()
                for i, (_act, ins, out) in enumerate(groups):
                    task = make_task(i, ins, out)
                    tasks.append(task)
                    got |= tracker.submit_edges(task)
                want = oracle_edges(tasks)
                same = got == want
                report.ok = report.ok and same
                line = (f"deps {kind.name:>4} n={n} {order_name:>6}-order: "
                        f"{len(got)} edges " + ("ok" if same else
                        f"MISMATCH (oracle {len(want)})"))
                report.lines.append(line)
                if progress:
                    progress(line)
    return report


def serial_convergence_budget(kind, n, seed=7, cap=20000) -> int:
    """Sweeps the serial baseline needs to push the residual below 1e-8."""
    mesh = Mesh(kind.dim, n)
    init(mesh, seed, 0.0)
    plan = strategies.SweepPlan(mesh, kind, CostModel("const", 0))
    for s in range(1, cap + 1):
        strategies.sweep_serial(mesh, kind, plan.cost, plan=plan)
        if residual_max(mesh, kind) < CONVERGENCE_TOL:
            return s
    raise RuntimeError(f"serial sweep did not converge within {cap} sweeps")


def verify_convergence(threads=4, cases=(("fd5", 33), ("fd7", 17)),
                       seed=7, progress=None) -> Report:
    """Every strategy must reach residual < 1e-8 within 2x the serial budget."""
    report = Report(True, [])
    for name, n in cases:
        kind = STENCILS[name]
        budget_base = serial_convergence_budget(kind, n, seed=seed)
        budget = 2 * budget_base
        line = f"convergence {kind.name} n={n}: serial budget {budget_base} sweeps (cap {budget})"
        report.lines.append(line)
        if progress:
            progress(line)
        for strat in strategies.STRATEGY_IDS:
            with StrategyRunner(kind.dim, n, kind, CostModel("const", 0), strat,
                                threads=threads, seed=seed) as runner:
                runner.reinit()
                used = None
                for s in range(1, budget + 1):
                    runner.sweep()
                    if residual_max(runner.mesh, kind) < CONVERGENCE_TOL:
                        used = s
                        break
            ok = used is not None
            report.ok = report.ok and ok
            line = (f"convergence {kind.name} n={n} {strat:>10}: "
                    + (f"{used} sweeps" if ok else f"NOT CONVERGED in {budget}"))
            report.lines.append(line)
            if progress:
                progress(line)
    return report


def verify_oracle(threads=(2, 4), n2=10, n3=6, sweeps=5, progress=None) -> Report:
    """Parallel colouring must equal the colour-order reference bit for bit."""
    report = Report(True, [])
    for kind in STENCILS.values():
        n = n2 if kind.dim == 2 else n3
        ref = Mesh(kind.dim, n)
        init(ref, 11, 0.0)
        for _ in range(sweeps):
            strategies.sweep_colouring_reference(ref, kind, CostModel("const", 0))
        for t in threads:
            for sched in (Schedule("static"), Schedule("dynamic", 1)):
                with StrategyRunner(kind.dim, n, kind, CostModel("const", 0),
                                    "colouring", threads=t, schedule=sched,
                                    seed=11) as runner:
                    runner.reinit()
                    runner.run_sweeps(sweeps)
                    same = np.array_equal(runner.mesh.values.view(np.int64),
                                          ref.values.view(np.int64))
                report.ok = report.ok and same
                line = (f"oracle {kind.name:>4} n={n} T={t} {sched.describe():>9}: "
                        + ("bit-equal" if same else "MISMATCH"))
                report.lines.append(line)
                if progress:
                    progress(line)
    return report


SUITES = ("races", "deps", "convergence", "oracle")


def run_verification(suite: str, progress=None, **kwargs) -> Report:
    """Run one named verification suite (or 'all'); kwargs shrink matrices."""
    if suite == "all":
        report = Report(True, [])
        for s in SUITES:
            report.extend(run_verification(s, progress=progress, **kwargs))
        return report
    if suite == "races":
        return verify_races(progress=progress, **kwargs)
    if suite == "deps":
        return verify_deps(progress=progress)
    if suite == "convergence":
        return verify_convergence(progress=progress, **kwargs)
    if suite == "oracle":
        return verify_oracle(progress=progress, **kwargs)
    raise ConfigError(f"unknown suite {suite!r}; choose from {SUITES + ('all',)}")
