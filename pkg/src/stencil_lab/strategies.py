"""The six sweep strategies: one full interior update pass per invocation.

serial        lexicographic pass on the calling thread; the timing baseline
              and the convergence oracle.
colouring     one parallel_for per colour class; same-colour cells are never
              stencil-adjacent, so each pass is embarrassingly parallel and
              its result is independent of worker count and schedule.
nd            nested dissection: recursive 2^d blocks around one-cell-wide
              separators, run as a fork-join task tree; children execute
              concurrently, each separator runs after its node's children.
taskgraph     one task per cell submitted lexicographically, writing its own
              location and reading its stencil neighbours; the tracker turns
              that into a wavefront DAG and workers race across it.
hyb-depend    same tasks and dependence lists as taskgraph but submitted in
              colour-major order, so the whole first colour is ready at once;
              a single taskwait ends the sweep.
hyb-sync      colouring's pass structure, but every visited cell spawns a
              dependency-free task and a taskwait closes each colour.

Colour classes use parity relative to the first interior cell: face-neighbour
stencils 2-colour on coordinate-sum parity, full-neighbourhood stencils use
the 2^d per-axis parity code.  Within one colour every pair of cells is at
least two steps apart on some axis, which is what makes the passes safe.

A `SweepPlan` precomputes the per-cell iteration structures (flat indices,
neighbour lists, colour partition, per-cell k) once per mesh/stencil/cost
combination so repeated sweeps pay no setup.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from time import monotonic_ns

import numpy as np

from .kernels import CostModel, ScalarCellKernel, StencilKind, update_cells_batch
from .mesh import Mesh
from .taskrt import Schedule, WaitScope, WorkerPool

STRATEGY_IDS = ("serial", "colouring", "nd", "taskgraph", "hyb-depend", "hyb-sync")

_ALIASES = {
    "nested_dissection": "nd",
    "hyb_depend": "hyb-depend",
    "hyb_sync": "hyb-sync",
}


def canonical_strategy(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in STRATEGY_IDS:
        raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGY_IDS}")
    return name


def colour_count(kind: StencilKind) -> int:
    """2 for the face-neighbour stencils, 2^d for the full neighbourhoods."""
    return kind.colours


def colour_of(kind: StencilKind, coord) -> int:
    """Colour class of an interior cell (parity relative to cell (1,..,1))."""
    if kind.colours == 2:
        return (sum(coord) - kind.dim) % 2
    code = 0
    for a, c in enumerate(coord):
        code |= ((c - 1) & 1) << a
    return code


# ---------------------------------------------------------------------------
# nested dissection geometry


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of interior coordinates, bounds inclusive."""

    lo: tuple
    hi: tuple

    def extents(self) -> tuple:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    def cell_count(self) -> int:
        out = 1
        for e in self.extents():
            out *= e
        return out

    def cells_lex(self):
        """All cells of the box in lexicographic order (outer axis slowest)."""
        if len(self.lo) == 2:
            return [(x, y)
                    for y in range(self.lo[1], self.hi[1] + 1)
                    for x in range(self.lo[0], self.hi[0] + 1)]
        return [(x, y, z)
                for z in range(self.lo[2], self.hi[2] + 1)
                for y in range(self.lo[1], self.hi[1] + 1)
                for x in range(self.lo[0], self.hi[0] + 1)]


@dataclass
class DissectionNode:
    region: Box
    depth: int
    mids: tuple = None
    children: list = field(default_factory=list)
    separator: list = field(default_factory=list)   # coords, lex order

    @property
    def is_leaf(self) -> bool:
        return not self.children


def dissection_depth_limit(workers: int, dim: int) -> int:
    """Recurse until 2^(dim*L) blocks meet the worker count, then once more."""
    level = 0
    while (1 << (dim * level)) < workers:
        level += 1
    return level + 1


def dissect(region: Box, workers: int, dim: int) -> DissectionNode:
    """Recursive 2^dim split at per-axis midpoints.

    A region with any extent <= 2 becomes a leaf regardless of depth; the
    one-cell-wide separator (cells with some coordinate equal to its axis
    midpoint) keeps sibling blocks non-adjacent for every width-1 stencil.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    limit = dissection_depth_limit(workers, dim)

    def build(box: Box, depth: int) -> DissectionNode:
        if depth >= limit or min(box.extents()) <= 2:
            return DissectionNode(box, depth)
        mids = tuple(l + e // 2 for l, e in zip(box.lo, box.extents()))
        node = DissectionNode(box, depth, mids)
        for octant in range(1 << dim):
            lo, hi = [], []
            for a in range(dim):
                if (octant >> a) & 1:
                    lo.append(mids[a] + 1)
                    hi.append(box.hi[a])
                else:
                    lo.append(box.lo[a])
                    hi.append(mids[a] - 1)
            node.children.append(build(Box(tuple(lo), tuple(hi)), depth + 1))
        node.separator = [c for c in box.cells_lex()
                          if any(c[a] == mids[a] for a in range(dim))]
        return node

    return build(region, 0)


def mesh_box(mesh: Mesh) -> Box:
    return Box((1,) * mesh.dim, (mesh.n,) * mesh.dim)


# ---------------------------------------------------------------------------
# sweep plan


class SweepPlan:
    """Precomputed iteration structures for one (mesh, stencil, cost) combo.

    Shared by every strategy: lexicographic cell specs for the serial and
    graph-based sweeps, the colour partition with per-row bounds for the
    pass-based sweeps, and cached task actions so repeated sweeps do not
    rebuild closures.  A spec is (flat, neighbour_flats, k, rank).
    """

    def __init__(self, mesh: Mesh, kind: StencilKind, cost: CostModel):
        if kind.dim != mesh.dim:
            raise ValueError(f"{kind.name} is {kind.dim}D but mesh is {mesh.dim}D")
        self.mesh = mesh
        self.kind = kind
        self.cost = cost
        self.kernel = ScalarCellKernel(mesh, kind)
        self.interior = mesh.interior_flat()
        self.total = len(self.interior)
        self.k_table = cost.k_table(self.total)
        self.const_k = cost.k if cost.mode == "const" else None
        self.flat_offsets = kind.flat_offsets(mesh)

        cid = self._colour_ids()
        self.colour_ranks = [np.flatnonzero(cid == c) for c in range(kind.colours)]
        self.colour_cells = [self.interior[r] for r in self.colour_ranks]
        self.colour_row_bounds = [self._row_bounds(cells) for cells in self.colour_cells]

        self._lex_specs = None
        self._colour_specs = None
        self._rank_of_flat = None
        self._cell_actions = {}
        self._group_cache = {}
        self._nd_cache = {}
        self._nd_action_cache = {}

    def _colour_ids(self) -> np.ndarray:
        side = self.mesh.side
        rem = self.interior.copy()
        axes = []
        for _ in range(self.mesh.dim):
            axes.append(rem % side)
            rem //= side
        if self.kind.colours == 2:
            total = sum(a - 1 for a in axes)
            return total % 2
        code = np.zeros(self.total, dtype=np.int64)
        for a, ax in enumerate(axes):
            code |= ((ax - 1) & 1) << a
        return code

    def _row_bounds(self, cells: np.ndarray) -> np.ndarray:
        # a row is one (y) / (y, z) line; rows are contiguous in lex order
        if len(cells) == 0:
            return np.zeros(1, dtype=np.int64)
        rows = cells // self.mesh.side
        steps = np.flatnonzero(np.diff(rows)) + 1
        return np.concatenate(([0], steps, [len(cells)]))

    # -- scalar cell specs ---------------------------------------------------

    def lex_specs(self) -> list:
        """(flat, nbrs, k, rank) per interior cell, lexicographic order."""
        if self._lex_specs is None:
            nbrs = (self.interior[:, None]
                    + np.asarray(self.flat_offsets, dtype=np.int64)[None, :]).tolist()
            flats = self.interior.tolist()
            ks = self.k_table.tolist()
            self._lex_specs = list(zip(flats, nbrs, ks, range(self.total)))
        return self._lex_specs

    def colour_specs(self) -> list:
        """Specs grouped per colour, lexicographic within each colour."""
        if self._colour_specs is None:
            lex = self.lex_specs()
            self._colour_specs = [[lex[r] for r in ranks.tolist()]
                                  for ranks in self.colour_ranks]
        return self._colour_specs

    def specs_for_coords(self, coords) -> list:
        if self._rank_of_flat is None:
            self._rank_of_flat = {f: r for r, f in enumerate(self.interior.tolist())}
        lex = self.lex_specs()
        return [lex[self._rank_of_flat[self.mesh.flat_index(c)]] for c in coords]

    # -- cached task bodies ----------------------------------------------------

    def cell_actions(self, colour: int) -> list:
        """Per-cell task actions for one colour, reused across sweeps."""
        acts = self._cell_actions.get(colour)
        if acts is None:
            upd = self.kernel.update
            acts = [_cell_action(upd, flat, nbrs, k)
                    for flat, nbrs, k, _ in self.colour_specs()[colour]]
            self._cell_actions[colour] = acts
        return acts

    def task_groups(self, chunk: int, colour_major: bool) -> list:
        """(action, in_locs, out_locs) per task for the graph-based sweeps.

        Groups `chunk` consecutive cells of the submission order into one
        task (never across a colour boundary); dependence lists are the
        union of the members' lists.
        """
        key = (chunk, colour_major)
        groups = self._group_cache.get(key)
        if groups is not None:
            return groups
        if colour_major:
            sequences = self.colour_specs()
        else:
            sequences = [self.lex_specs()]
        upd = self.kernel.update
        groups = []
        for seq in sequences:
            for i in range(0, len(seq), chunk):
                members = seq[i:i + chunk]
                out = tuple(m[0] for m in members)
                ins = []
                for m in members:
                    ins.extend(m[1])
                groups.append((_group_action(upd, members),
                               tuple(dict.fromkeys(ins)), out))
        self._group_cache[key] = groups
        return groups

    def dissection(self, workers: int) -> DissectionNode:
        tree = self._nd_cache.get(workers)
        if tree is None:
            tree = dissect(mesh_box(self.mesh), workers, self.mesh.dim)
            self._nd_cache[workers] = tree
        return tree


def _cell_action(upd, flat, nbrs, k):
    def act(ctx, task):
        log = ctx.log
        if log is None:
            upd(nbrs, flat, k)
        else:
            t0 = monotonic_ns()
            upd(nbrs, flat, k)
            log.add(task.id, flat, t0, monotonic_ns())
    return act


def _group_action(upd, members):
    def act(ctx, task):
        log = ctx.log
        if log is None:
            for flat, nbrs, k, _ in members:
                upd(nbrs, flat, k)
        else:
            tid = task.id
            for flat, nbrs, k, _ in members:
                t0 = monotonic_ns()
                upd(nbrs, flat, k)
                log.add(tid, flat, t0, monotonic_ns())
    return act


def _run_specs(specs, upd, log):
    if log is None:
        for flat, nbrs, k, _ in specs:
            upd(nbrs, flat, k)
    else:
        for flat, nbrs, k, rank in specs:
            t0 = monotonic_ns()
            upd(nbrs, flat, k)
            log.add(rank, flat, t0, monotonic_ns())


# ---------------------------------------------------------------------------
# strategies


def sweep_serial(mesh: Mesh, kind: StencilKind, cost: CostModel,
                 plan: SweepPlan = None, log=None):
    """Single-threaded lexicographic pass (baseline and convergence oracle)."""
    plan = plan or SweepPlan(mesh, kind, cost)
    _run_specs(plan.lex_specs(), plan.kernel.update, log)


def sweep_colouring(pool: WorkerPool, mesh: Mesh, kind: StencilKind,
                    cost: CostModel, schedule: Schedule = None,
                    plan: SweepPlan = None, _fault_merge_colours: bool = False):
    """One parallel_for per colour, over that colour's rows.

    Untraced constant-cost passes run the vectorised batch kernel over each
    worker's whole span; traced or ramp-cost passes fall back to the scalar
    per-cell path with per-cell records.  Both paths write bit-identical
    values, so the result does not depend on worker count or schedule.

    `_fault_merge_colours` (tests only) deliberately runs all cells as one
    pass, the classic adjacent-cell race the verification suite must catch.
    """
    plan = plan or SweepPlan(mesh, kind, cost)
    schedule = schedule or Schedule("static")
    use_batch = not pool.tracing and plan.const_k is not None
    if _fault_merge_colours:
        # racy on purpose: every cell in one pass, forced through the
        # per-cell path so the adjacent updates really interleave
        use_batch = False
        passes = [(plan.interior, plan._row_bounds(plan.interior))]
        specs_by_pass = [plan.lex_specs()]
    else:
        passes = [(plan.colour_cells[c], plan.colour_row_bounds[c])
                  for c in range(kind.colours)]
        specs_by_pass = None
    for p, (cells, bounds) in enumerate(passes):
        rows = len(bounds) - 1
        if rows <= 0:
            continue
        if use_batch:
            def body(lo, hi, ctx, _cells=cells, _b=bounds, _k=plan.const_k):
                span = _cells[_b[lo]:_b[hi]]
                if len(span):
                    update_cells_batch(mesh, kind, span, _k)
        else:
            if specs_by_pass is not None:
                specs = specs_by_pass[p]
            else:
                specs = plan.colour_specs()[p]
            upd = plan.kernel.update

            def body(lo, hi, ctx, _specs=specs, _b=bounds, _upd=upd):
                log = ctx.log
                _run_specs_range(_specs, _b[lo], _b[hi], _upd, log)
        pool.parallel_for(rows, body, schedule)


def _run_specs_range(specs, lo, hi, upd, log):
    if log is None:
        for i in range(lo, hi):
            flat, nbrs, k, _ = specs[i]
            upd(nbrs, flat, k)
    else:
        for i in range(lo, hi):
            flat, nbrs, k, rank = specs[i]
            t0 = monotonic_ns()
            upd(nbrs, flat, k)
            log.add(rank, flat, t0, monotonic_ns())


def sweep_colouring_reference(mesh: Mesh, kind: StencilKind, cost: CostModel,
                              log=None):
    """Independent oracle: colour-major scalar pass on the calling thread.

    Deliberately built from first principles (colour_of over the coordinate
    walk, single-cell updates) rather than the plan's partition arrays, so it
    can vouch for sweep_colouring bit for bit.
    """
    kernel = ScalarCellKernel(mesh, kind)
    deltas = kind.flat_offsets(mesh)
    total = mesh.interior_count
    for colour in range(colour_count(kind)):
        rank = 0
        for coord in mesh.interior_coords():
            if colour_of(kind, coord) == colour:
                flat = mesh.flat_index(coord)
                nbrs = [flat + d for d in deltas]
                k = cost.k_for_rank(rank, total)
                if log is None:
                    kernel.update(nbrs, flat, k)
                else:
                    t0 = monotonic_ns()
                    kernel.update(nbrs, flat, k)
                    log.add(rank, flat, t0, monotonic_ns())
            rank += 1


def sweep_nested_dissection(pool: WorkerPool, mesh: Mesh, kind: StencilKind,
                            cost: CostModel, plan: SweepPlan = None):
    """Fork-join over the dissection tree.

    Each internal node spawns its 2^d children as stealable tasks, helps the
    pool until they finish (scoped wait), then updates its separator cells
    serially; leaves update their whole block serially.  Block interiors are
    plain lexicographic passes, so the sweep is deterministic at every
    worker count.
    """
    plan = plan or SweepPlan(mesh, kind, cost)
    root = _nd_action(plan, pool, plan.dissection(pool.size))
    pool.spawn(root)
    pool.taskwait()


def _nd_action(plan: SweepPlan, pool: WorkerPool, node: DissectionNode):
    key = (id(pool), id(node))
    cached = plan._nd_action_cache.get(key)
    if cached is not None:
        return cached
    upd = plan.kernel.update
    if node.is_leaf:
        specs = plan.specs_for_coords(node.region.cells_lex())

        def act(ctx, task, _specs=specs):
            _run_specs(_specs, upd, ctx.log)
    else:
        kids = [_nd_action(plan, pool, ch) for ch in node.children]
        sep_specs = plan.specs_for_coords(node.separator)

        def act(ctx, task, _kids=kids, _specs=sep_specs):
            scope = WaitScope()
            for ka in _kids:
                pool.spawn(ka, scope=scope)
            pool.help_until(ctx, scope)
            _run_specs(_specs, upd, ctx.log)
    plan._nd_action_cache[key] = act
    return act


def sweep_taskgraph(pool: WorkerPool, mesh: Mesh, kind: StencilKind,
                    cost: CostModel, chunk: int = 1, plan: SweepPlan = None):
    """Per-cell dependence tasks submitted in lexicographic order.

    Each task writes its own location and reads its stencil neighbours (halo
    locations included; they never acquire a writer), which yields the
    wavefront DAG; a taskwait ends the sweep.
    """
    plan = plan or SweepPlan(mesh, kind, cost)
    pool.submit_batch(plan.task_groups(chunk, colour_major=False))
    pool.taskwait()


def sweep_hyb_depend(pool: WorkerPool, mesh: Mesh, kind: StencilKind,
                     cost: CostModel, chunk: int = 1, plan: SweepPlan = None):
    """taskgraph's tasks and dependence lists, submitted colour-major.

    The whole first colour is ready the moment it is submitted; later
    colours wire in behind their neighbours.  A single taskwait ends the
    sweep — the colour loop itself contains no waits.
    """
    plan = plan or SweepPlan(mesh, kind, cost)
    pool.submit_batch(plan.task_groups(chunk, colour_major=True))
    pool.taskwait()


def sweep_hyb_sync(pool: WorkerPool, mesh: Mesh, kind: StencilKind,
                   cost: CostModel, schedule: Schedule = None,
                   plan: SweepPlan = None):
    """Colouring's pass structure with dependency-free per-cell tasks.

    Per colour: a parallel_for over the colour's rows in which every visited
    cell spawns one task, then a taskwait — no colour p+1 task can start
    before all colour p tasks have completed.
    """
    plan = plan or SweepPlan(mesh, kind, cost)
    schedule = schedule or Schedule("static")
    spawn = pool.spawn
    for c in range(kind.colours):
        bounds = plan.colour_row_bounds[c]
        rows = len(bounds) - 1
        if rows <= 0:
            continue
        acts = plan.cell_actions(c)

        def body(lo, hi, ctx, _acts=acts, _b=bounds):
            for i in range(_b[lo], _b[hi]):
                spawn(_acts[i])

        pool.parallel_for(rows, body, schedule)
        pool.taskwait()


def run_sweep(strategy: str, mesh: Mesh, kind: StencilKind, cost: CostModel,
              pool: WorkerPool = None, schedule: Schedule = None,
              chunk: int = 1, plan: SweepPlan = None, log=None):
    """Dispatch one full sweep of the given strategy."""
    strategy = canonical_strategy(strategy)
    if strategy == "serial":
        sweep_serial(mesh, kind, cost, plan=plan, log=log)
        return
    if pool is None:
        raise ValueError(f"strategy {strategy!r} needs a worker pool")
    if strategy == "colouring":
        sweep_colouring(pool, mesh, kind, cost, schedule, plan=plan)
    elif strategy == "nd":
        sweep_nested_dissection(pool, mesh, kind, cost, plan=plan)
    elif strategy == "taskgraph":
        sweep_taskgraph(pool, mesh, kind, cost, chunk=chunk, plan=plan)
    elif strategy == "hyb-depend":
        sweep_hyb_depend(pool, mesh, kind, cost, chunk=chunk, plan=plan)
    else:
        sweep_hyb_sync(pool, mesh, kind, cost, schedule, plan=plan)
