"""Execution tracing, ordering/race checks, and assignment-map rendering.

Workers append (task, cell, start, end) records to private logs while a
traced sweep runs; afterwards the logs merge into one `Trace` whose columns
are numpy arrays.  All checks are single-threaded post-processing:

* `check_adjacency_exclusion` — no two wall-clock-overlapping records may
  touch the same or stencil-adjacent cells.  Sweep line over start times
  with an expiry heap and a cell-keyed active table, so each record probes
  only its own neighbourhood.
* `check_edge_order` — every dependence edge (a, b) must satisfy
  end(a) <= start(b).
* assignment maps — which worker updated each cell in a given sweep,
  renderable as a binary PPM (P6), one pixel per cell, halo white.

Timestamps come from one shared monotonic nanosecond clock; comparisons need
nothing beyond monotonicity.  Sub-tick overlaps are invisible to these
checks, which is why the dependence-semantics tests exist alongside them.
"""

from __future__ import annotations

import heapq
from array import array

import numpy as np

# worker id -> pixel colour, id taken mod 16
PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
    (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
)
_HALO_RGB = (255, 255, 255)


class TraceLog:
    """Append-only per-worker record buffer (contiguous int64 columns)."""

    __slots__ = ("worker", "tasks", "cells", "starts", "ends")

    def __init__(self, worker: int, capacity_hint: int = 0):
        self.worker = worker
        self.tasks = array("q")
        self.cells = array("q")
        self.starts = array("q")
        self.ends = array("q")

    def add(self, task_id: int, cell: int, start: int, end: int):
        self.tasks.append(task_id)
        self.cells.append(cell)
        self.starts.append(start)
        # a coarse clock can report start == end; keep intervals non-empty
        self.ends.append(end if end > start else start + 1)

    def __len__(self):
        return len(self.tasks)


class Trace:
    """Merged execution trace: parallel int64 columns, one row per record."""

    __slots__ = ("tasks", "workers", "cells", "starts", "ends")

    def __init__(self, tasks, workers, cells, starts, ends):
        self.tasks = np.asarray(tasks, dtype=np.int64)
        self.workers = np.asarray(workers, dtype=np.int64)
        self.cells = np.asarray(cells, dtype=np.int64)
        self.starts = np.asarray(starts, dtype=np.int64)
        self.ends = np.asarray(ends, dtype=np.int64)

    def __len__(self):
        return len(self.tasks)

    def write_counts(self, interior_flats: np.ndarray) -> np.ndarray:
        """How many records wrote each of the given cells."""
        counts = np.zeros(len(interior_flats), dtype=np.int64)
        uniq, n = np.unique(self.cells, return_counts=True)
        idx = np.searchsorted(interior_flats, uniq)
        ok = (idx < len(interior_flats))
        ok[ok] = interior_flats[idx[ok]] == uniq[ok]
        if not ok.all():
            bad = uniq[~ok]
            raise ValueError(f"trace contains writes outside the interior: {bad[:8].tolist()}")
        counts[idx] = n
        return counts


def merge_logs(logs) -> Trace:
    def col(name):
        parts = [np.frombuffer(getattr(lg, name), dtype=np.int64) if len(lg) else
                 np.empty(0, dtype=np.int64) for lg in logs]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    workers = [np.full(len(lg), lg.worker, dtype=np.int64) for lg in logs]
    return Trace(
        col("tasks"),
        np.concatenate(workers) if workers else np.empty(0, dtype=np.int64),
        col("cells"), col("starts"), col("ends"),
    )


def check_adjacency_exclusion(trace: Trace, kind, mesh):
    """Return (i, j) record index pairs that overlap in time on equal or
    stencil-adjacent cells; empty means the exclusion discipline held.

    Traced cells are interior, so flat-index arithmetic with the stencil's
    flat offsets lands exactly on the coordinate neighbours (the halo pads
    every axis, no wraparound is possible).
    """
    violations = []
    n = len(trace)
    if n == 0:
        return violations
    order = np.argsort(trace.starts, kind="stable").tolist()
    starts = trace.starts.tolist()
    ends = trace.ends.tolist()
    cells = trace.cells.tolist()
    deltas = kind.flat_offsets(mesh)
    heap = []           # (end, idx, cell) expiry queue
    active = {}         # cell -> [record idx] currently inside their interval
    for i in order:
        s = starts[i]
        while heap and heap[0][0] <= s:
            _, j, cj = heapq.heappop(heap)
            lst = active[cj]
            lst.remove(j)
            if not lst:
                del active[cj]
        ci = cells[i]
        hit = active.get(ci)
        if hit:
            violations.extend((j, i) for j in hit)
        for d in deltas:
            hit = active.get(ci + d)
            if hit:
                violations.extend((j, i) for j in hit)
        active.setdefault(ci, []).append(i)
        heapq.heappush(heap, (ends[i], i, ci))
    return violations


def check_edge_order(trace: Trace, edges):
    """Return the dependence edges (a, b) whose records violate
    end(a) <= start(b); edges whose endpoints left no record are skipped."""
    if not edges or len(trace) == 0:
        return []
    first_start = {}
    last_end = {}
    for t, s, e in zip(trace.tasks.tolist(), trace.starts.tolist(), trace.ends.tolist()):
        if t not in first_start or s < first_start[t]:
            first_start[t] = s
        if t not in last_end or e > last_end[t]:
            last_end[t] = e
    bad = []
    for a, b in edges:
        if a in last_end and b in first_start and last_end[a] > first_start[b]:
            bad.append((a, b))
    return bad


def assignment_map(trace: Trace, mesh, sweep: int = 0) -> np.ndarray:
    """Worker id per cell for the given sweep (halo slots hold -1).

    The sweep index selects each cell's (sweep+1)-th record in start order;
    sweeps separated by taskwait never interleave, so this recovers per-sweep
    assignment without a sweep tag in the records.
    """
    interior = mesh.interior_flat()
    order = np.lexsort((trace.starts, trace.cells))
    cells_sorted = trace.cells[order]
    workers_sorted = trace.workers[order]
    uniq, first, counts = np.unique(cells_sorted, return_index=True, return_counts=True)
    extra = np.setdiff1d(uniq, interior)
    if len(extra):
        raise ValueError(f"records for non-interior cells: {extra[:8].tolist()}")
    missing = np.setdiff1d(interior, uniq)
    if len(missing):
        names = [mesh.coord_of(int(f)) for f in missing[:8]]
        raise ValueError(f"trace incomplete, {len(missing)} cell(s) missing, first: {names}")
    short = uniq[counts <= sweep]
    if len(short):
        names = [mesh.coord_of(int(f)) for f in short[:8]]
        raise ValueError(f"sweep {sweep} not recorded for {len(short)} cell(s), first: {names}")
    amap = np.full(mesh.side ** mesh.dim, -1, dtype=np.int64)
    amap[uniq] = workers_sorted[first + sweep]
    return amap


def render_assignment_map(trace: Trace, mesh, sweep: int = 0, z_slice=None) -> bytes:
    """Binary PPM (P6) of the sweep's assignment map, one pixel per cell.

    Width = height = n + 2; halo pixels are white; worker w gets
    PALETTE[w % 16].  3D meshes render the given z plane (default: middle).
    Row y of the image is mesh row y (y grows downwards).
    """
    amap = assignment_map(trace, mesh, sweep)
    side = mesh.side
    if mesh.dim == 3:
        z = (mesh.n + 1) // 2 if z_slice is None else z_slice
        if not 0 <= z <= mesh.n + 1:
            raise ValueError(f"z slice {z} outside [0, {mesh.n + 1}]")
        plane = amap.reshape(side, side, side)[z]
    else:
        plane = amap.reshape(side, side)
    palette = np.array(PALETTE, dtype=np.uint8)
    rgb = np.empty((side, side, 3), dtype=np.uint8)
    halo = plane < 0
    rgb[halo] = _HALO_RGB
    rgb[~halo] = palette[plane[~halo] % 16]
    colours = " ".join(f"{r:02x}{g:02x}{b:02x}" for r, g, b in PALETTE)
    header = (f"P6\n# worker w -> palette[w mod 16]: {colours}; halo white\n"
              f"{side} {side}\n255\n").encode("ascii")
    return header + rgb.tobytes()


def band_contiguity(amap: np.ndarray, colour_orders) -> bool:
    """True iff, within every colour, each worker's cells occupy one
    contiguous interval of that colour's iteration order.

    `colour_orders` is one flat-index array per colour, in iteration order.
    """
    for cells in colour_orders:
        if len(cells) == 0:
            continue
        seq = amap[np.asarray(cells)]
        runs = int(np.count_nonzero(np.diff(seq))) + 1
        if runs != len(np.unique(seq)):
            return False
    return True


def dump_text(trace: Trace, path):
    """One line per record: `task worker cell start end`, space-separated."""
    with open(path, "w") as fh:
        for row in zip(trace.tasks.tolist(), trace.workers.tolist(),
                       trace.cells.tolist(), trace.starts.tolist(),
                       trace.ends.tolist()):
            fh.write("%d %d %d %d %d\n" % row)


def parse_text(path) -> Trace:
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip()]
    if not rows:
        z = np.empty(0, dtype=np.int64)
        return Trace(z, z, z, z, z)
    data = np.asarray(rows, dtype=np.int64)
    return Trace(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4])
