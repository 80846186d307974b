"""Acceptance suite: one test per criterion, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s` to watch the lines appear;
several criteria run multi-minute matrices, noted per test.
"""

import math
import os
import time

import numpy as np
import pytest

from stencil_lab.bench import (BenchConfig, StrategyRunner, run_benchmark,
                               verify_convergence, verify_deps, verify_races)
from stencil_lab.kernels import FD5, FE9, STENCILS, CostModel
from stencil_lab.mesh import Mesh, init
from stencil_lab.strategies import (SweepPlan, colour_of, mesh_box, run_sweep,
                                    sweep_colouring, sweep_hyb_sync)
from stencil_lab.taskrt import (DependencyTracker, Schedule, WorkerPool,
                                make_task, oracle_edges)
from stencil_lab.trace import assignment_map, band_contiguity


def _verdict(num: int, ok: bool, t0: float, detail: str) -> str:
    line = (f"criterion {num:02d}: {'PASS' if ok else 'FAIL'} "
            f"({time.time() - t0:5.1f}s) {detail}")
    print(line, flush=True)
    return line


def test_criterion_01_dependence_oracle_equivalence():
    # all stencils, 2D n in 1..6 and 3D n in 1..4, both submission orders
    t0 = time.time()
    report = verify_deps()
    line = _verdict(1, report.ok, t0,
                    f"tracker == oracle on {len(report.lines)} graphs")
    assert report.ok, line


def test_criterion_02_wavefront_structure():
    t0 = time.time()
    mesh = Mesh(2, 3)
    plan = SweepPlan(mesh, FD5, CostModel("const", 0))
    groups = plan.task_groups(1, colour_major=False)
    tracker = DependencyTracker()
    tasks = []
    preds = {}
    for i, (_a, ins, out) in enumerate(groups):
        task = make_task(i, ins, out)
        tasks.append(task)
        preds[i] = {a for a, _b in tracker.submit_edges(task)}

    def tid(x, y):
        return (y - 1) * 3 + (x - 1)

    ok = True
    for y in range(1, 4):
        for x in range(1, 4):
            want = set()
            if x > 1:
                want.add(tid(x - 1, y))
            if y > 1:
                want.add(tid(x, y - 1))
            ok = ok and preds[tid(x, y)] == want
    derived = {(a, b) for b, aa in preds.items() for a in aa}
    ok = ok and derived == oracle_edges(tasks)
    line = _verdict(2, ok, t0, "3x3 fd5 predecessors are exactly {west, north}")
    assert ok, line


def test_criterion_03_hyb_depend_head_start():
    t0 = time.time()
    ok = True
    details = []
    for kind, head_of in ((FD5, lambda n: -(-n * n // 2)),
                          (FE9, lambda n: ((n + 1) // 2) ** 2)):
        for n in (4, 6, 8):
            plan = SweepPlan(Mesh(2, n), kind, CostModel("const", 0))
            head = head_of(n)
            assert head == len(plan.colour_cells[0])
            tracker = DependencyTracker()
            unmet = []
            for i, (_a, ins, out) in enumerate(plan.task_groups(1, colour_major=True)):
                task = make_task(i, ins, out)
                tracker.submit(task)
                unmet.append(task.unmet)
            free = all(u == 0 for u in unmet[:head])
            blocked = all(u > 0 for u in unmet[head:])
            ok = ok and free and blocked
            details.append(f"{kind.name} n={n}:{head}")
    line = _verdict(3, ok, t0, "first colour is dependency-free: " + " ".join(details))
    assert ok, line


def test_criterion_04_adjacency_exclusion_matrix():
    # full matrix: 6 strategies x 4 kinds x T{2,4,8} x n{8,16,32}, 10 traced
    # repetitions each; also asserts exactly-once and completeness per run
    t0 = time.time()
    report = verify_races(reps=10, threads=(2, 4, 8), sizes=(8, 16, 32))
    bad = [ln for ln in report.lines if not ln.endswith("ok")]
    line = _verdict(4, report.ok, t0,
                    f"{len(report.lines)} traced points, {len(bad)} with findings")
    assert report.ok, line + "\n" + "\n".join(bad)


def test_criterion_05_colouring_determinism():
    t0 = time.time()
    ok = True
    details = []
    sweeps = 100
    for kind in STENCILS.values():
        for n in (8, 33):
            mesh = Mesh(kind.dim, n)
            plan = SweepPlan(mesh, kind, CostModel("const", 0))
            digests = set()
            for strat_fn in (sweep_colouring, sweep_hyb_sync):
                for t in (1, 2, 4, 8):
                    for sched in (Schedule("static"), Schedule("dynamic", 1)):
                        init(mesh, 42, 0.0)
                        with WorkerPool(t) as pool:
                            for _ in range(sweeps):
                                strat_fn(pool, mesh, kind, plan.cost,
                                         schedule=sched, plan=plan)
                        digests.add(mesh.values.tobytes())
            ok = ok and len(digests) == 1
            details.append(f"{kind.name}/n={n}:{len(digests)}")
    line = _verdict(5, ok, t0,
                    "distinct digests per config (want 1): " + " ".join(details))
    assert ok, line


def test_criterion_06_convergence_within_twice_serial_budget():
    t0 = time.time()
    report = verify_convergence(threads=2, cases=(("fd5", 33), ("fd7", 17)))
    line = _verdict(6, report.ok, t0,
                    "; ".join(ln.split("convergence ")[1] for ln in report.lines))
    assert report.ok, line


def test_criterion_07_assignment_map_structure():
    t0 = time.time()
    with StrategyRunner(2, 10, FD5, CostModel("const", 0), "colouring",
                        threads=3, seed=9) as r:
        r.reinit()
        r.start_trace(100)
        r.sweep()
        amap = assignment_map(r.stop_trace(), r.mesh, 0)
        banded = band_contiguity(amap, r.plan.colour_cells)

    with StrategyRunner(2, 10, FD5, CostModel("const", 0), "nd",
                        threads=3, seed=9) as r:
        r.reinit()
        r.start_trace(100)
        r.sweep()
        amap = assignment_map(r.stop_trace(), r.mesh, 0)
        tree = r.plan.dissection(3)

        def leaves(node):
            return [node] if node.is_leaf else [l for c in node.children
                                                for l in leaves(c)]

        monochrome = all(
            len({int(amap[r.mesh.flat_index(c)]) for c in leaf.region.cells_lex()}) == 1
            for leaf in leaves(tree))
    ok = banded and monochrome
    line = _verdict(7, ok, t0,
                    f"colouring bands contiguous: {banded}; "
                    f"nd leaf blocks monochrome: {monochrome}")
    assert ok, line


def test_criterion_08_speedup_ordering_at_desk_scale():
    t0 = time.time()
    cores = os.cpu_count() or 1
    if cores < 2:
        pytest.skip("speedup ordering needs at least two cores")
    base = dict(sizes=(128,), stencil="fd5", cost=CostModel("const", 100),
                sweeps=50, reps=1, seed=3)
    (serial,) = run_benchmark(BenchConfig(strategy="serial", **base))
    (col,) = run_benchmark(BenchConfig(strategy="colouring",
                                       threads=(cores,), **base))
    ratio = serial.median_seconds() / col.median_seconds()
    ok = ratio >= 1.5
    line = _verdict(8, ok, t0,
                    f"colouring throughput {ratio:.1f}x serial at T={cores} "
                    f"(target 2.0x, hard floor 1.5x)")
    assert ok, line


def test_criterion_09_cheap_tiny_problems_favour_serial():
    t0 = time.time()
    base = dict(sizes=(4,), stencil="fd5", cost=CostModel("const", 0),
                sweeps=200, reps=3, seed=3)
    (serial,) = run_benchmark(BenchConfig(strategy="serial", **base))
    (graph,) = run_benchmark(BenchConfig(strategy="taskgraph", threads=(4,),
                                         **base))
    ns_serial = serial.median_seconds() * 1e9 / serial.cell_updates
    ns_graph = graph.median_seconds() * 1e9 / graph.cell_updates
    ok = ns_graph > ns_serial
    line = _verdict(9, ok, t0,
                    f"per-cell-task overhead dominates: taskgraph "
                    f"{ns_graph:.0f} ns/update vs serial {ns_serial:.0f}")
    assert ok, line


def test_criterion_10_exactly_once_and_completeness():
    # also enforced inside criterion 4's matrix; this is the focused check
    t0 = time.time()
    sweeps = 3
    ok = True
    for strat in ("serial", "colouring", "nd", "taskgraph", "hyb-depend",
                  "hyb-sync"):
        with StrategyRunner(2, 16, FD5, CostModel("const", 0), strat,
                            threads=4, seed=1) as r:
            r.reinit()
            r.start_trace(sweeps * 256)
            r.run_sweeps(sweeps)
            tr = r.stop_trace()
        counts = tr.write_counts(r.mesh.interior_flat())
        ok = ok and len(tr) == sweeps * 256 and (counts == sweeps).all()
    line = _verdict(10, ok, t0,
                    f"record count == sweeps x n^dim and per-cell writes == "
                    f"sweeps for all six strategies")
    assert ok, line
