"""Stencil definitions, the in-place cell update, and the synthetic cost model.

Four compact stencils are supported: the 5-point and 7-point face-neighbour
kinds and the 9-point and 27-point full-neighbourhood kinds.  Every kind has
row sum zero (centre weight equals minus the sum of the neighbour weights),
which makes any globally constant mesh a fixed point of the update — the
basic correctness oracle used throughout the test-suite.

The update is the in-situ relaxation

    value(c)  <-  (- sum_j w_j * value(c + off_j)) / w_centre

so each cell immediately sees its already-updated neighbours, and the result
depends on traversal order.  All neighbour weights are negative for every
kind, so the implementation accumulates |w_j| * value and divides once; that
rewrite is exact in IEEE arithmetic and both the scalar and the vectorised
code paths below produce bit-identical values (a tested property, since
several sweep strategies mix the two paths and must agree bitwise).

Per-cell arithmetic load is tunable: with cost parameter k > 0, every stencil
entry is "computed" by k sine evaluations whose sum is folded into the entry
multiplied by 0.0.  The fold keeps the numbers bit-identical to the k = 0 run
while the sines still execute; their sum is accumulated into a work tally the
caller can consume, so the effort cannot be reasoned away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .mesh import Mesh


class NumericsError(ArithmeticError):
    """A cell update produced a non-finite value."""


@dataclass(frozen=True)
class StencilKind:
    """One stencil shape: neighbour offsets, their weights, centre weight."""

    name: str
    dim: int
    offsets: tuple          # displacement vectors, canonical order (outer axis slowest)
    weights: tuple          # per-offset coefficient, all equal and negative here
    centre_weight: float
    colours: int            # colour classes needed for conflict-free passes

    def __post_init__(self):
        assert len(self.offsets) == len(self.weights)
        assert all(w < 0.0 for w in self.weights)
        row_sum = self.centre_weight + sum(self.weights)
        assert abs(row_sum) < 1e-12, f"{self.name}: row sum {row_sum}"

    @property
    def entry_count(self) -> int:
        return len(self.offsets) + 1

    def flat_offsets(self, mesh: Mesh) -> tuple:
        """Offsets as flat-index deltas on `mesh`, canonical order."""
        return tuple(sum(o * s for o, s in zip(off, mesh.strides)) for off in self.offsets)

    def is_adjacent(self, a, b) -> bool:
        """True iff cells a, b are distinct and within each other's stencil."""
        if a == b:
            return False
        delta = tuple(bi - ai for ai, bi in zip(a, b))
        return delta in self._offset_set()

    def _offset_set(self):
        return frozenset(self.offsets)


def _canonical(offsets):
    # outer axis slowest: sort by reversed displacement so x varies fastest
    return tuple(sorted(offsets, key=lambda off: tuple(reversed(off))))


def _face_offsets(dim):
    offs = []
    for a in range(dim):
        for s in (-1, 1):
            off = [0] * dim
            off[a] = s
            offs.append(tuple(off))
    return _canonical(offs)


def _box_offsets(dim):
    offs = [off for off in product((-1, 0, 1), repeat=dim) if any(off)]
    return _canonical(offs)


FD5 = StencilKind("fd5", 2, _face_offsets(2), (-1.0,) * 4, 4.0, 2)
FE9 = StencilKind("fe9", 2, _box_offsets(2), (-1.0 / 3.0,) * 8, 8.0 / 3.0, 4)
FD7 = StencilKind("fd7", 3, _face_offsets(3), (-1.0,) * 6, 6.0, 2)
FE27 = StencilKind("fe27", 3, _box_offsets(3), (-1.0,) * 26, 26.0, 8)

STENCILS = {k.name: k for k in (FD5, FE9, FD7, FE27)}


def get_stencil(name: str) -> StencilKind:
    try:
        return STENCILS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown stencil {name!r}; choose from {sorted(STENCILS)}") from None


@dataclass(frozen=True)
class CostModel:
    """Per-cell extra-work parameter k.

    mode "const" applies the same k everywhere; mode "ramp" steps k from 0 to
    99 over the lexicographic interior ranks, each value covering
    floor(total/100) or ceil(total/100) consecutive ranks.
    """

    mode: str = "const"
    k: int = 0

    def __post_init__(self):
        if self.mode not in ("const", "ramp"):
            raise ValueError(f"cost mode must be 'const' or 'ramp', got {self.mode!r}")
        if self.k < 0:
            raise ValueError("k must be non-negative")

    def k_for_rank(self, rank: int, total: int) -> int:
        if not 0 <= rank < total:
            raise ValueError(f"rank {rank} outside [0, {total})")
        if self.mode == "const":
            return self.k
        return min((100 * rank) // total, 99)

    def k_table(self, total: int) -> np.ndarray:
        """k per lexicographic rank for a mesh of `total` interior cells."""
        if self.mode == "const":
            return np.full(total, self.k, dtype=np.int64)
        return np.minimum((100 * np.arange(total, dtype=np.int64)) // total, 99)

    def describe(self) -> str:
        return f"const:{self.k}" if self.mode == "const" else "ramp"


class ScalarCellKernel:
    """Single-cell in-place updates against one mesh/stencil pair.

    `update(nbrs, centre, k)` takes precomputed flat indices (neighbours in
    the stencil's canonical offset order) so per-cell callers pay no index
    arithmetic.  Reentrant: the only write is to the cell itself.
    """

    __slots__ = ("mesh", "kind", "_mv", "_absw", "_wc", "work_sum")

    def __init__(self, mesh: Mesh, kind: StencilKind):
        if kind.dim != mesh.dim:
            raise ValueError(f"{kind.name} is {kind.dim}D but mesh is {mesh.dim}D")
        self.mesh = mesh
        self.kind = kind
        self._mv = mesh.values.data            # memoryview: fast scalar access
        self._absw = -kind.weights[0]          # uniform |weight| per kind
        self._wc = kind.centre_weight
        self.work_sum = 0.0                    # consumed sine tally, k > 0 only

    def update(self, nbrs, centre: int, k: int) -> float:
        mv = self._mv
        absw = self._absw
        sin = math.sin
        s = 0.0
        if k == 0:
            if absw == 1.0:
                for a in nbrs:
                    s += mv[a]
            else:
                for a in nbrs:
                    s += absw * mv[a]
            new = s / self._wc
        else:
            dummy = 0.0
            for a in nbrs:
                x = mv[a]
                d = 0.0
                for i in range(k):
                    d += sin(x + i)
                dummy += d
                s += (absw + 0.0 * d) * x
            x = mv[centre]
            d = 0.0
            for i in range(k):
                d += sin(x + i)
            dummy += d
            new = s / (self._wc + 0.0 * d)
            self.work_sum += dummy
        if not math.isfinite(new):
            raise NumericsError(f"non-finite update at flat index {centre}")
        mv[centre] = new
        return new


def update_cell(mesh: Mesh, kind: StencilKind, coord, k: int = 0) -> float:
    """Convenience single-cell update by coordinate (interior cells only)."""
    if not mesh.is_interior(coord):
        raise IndexError(f"{coord!r} is not an interior cell")
    centre = mesh.flat_index(coord)
    nbrs = tuple(centre + d for d in kind.flat_offsets(mesh))
    return ScalarCellKernel(mesh, kind).update(nbrs, centre, k)


def update_cells_batch(mesh: Mesh, kind: StencilKind, flats: np.ndarray, k: int) -> float:
    """Vectorised in-place update of mutually non-adjacent interior cells.

    Caller contract: no two cells in `flats` are stencil-adjacent (one colour
    class, or a band of one), so every neighbour read is stable for the whole
    batch.  Produces bit-identical values to the scalar path; returns the
    consumed sine tally (0.0 when k == 0).
    """
    buf = mesh.values
    absw = -kind.weights[0]
    wc = kind.centre_weight
    deltas = kind.flat_offsets(mesh)
    acc = np.zeros(len(flats))
    if k == 0:
        if absw == 1.0:
            for d in deltas:
                acc += buf[flats + d]
        else:
            for d in deltas:
                acc += absw * buf[flats + d]
        out = acc / wc
        work = 0.0
    else:
        gathered = [buf[flats + d] for d in deltas]
        centre_vals = buf[flats]
        # one stacked sine pass per k step keeps the arrays large enough to
        # release the GIL, without changing the per-entry evaluation count
        stacked = np.stack(gathered + [centre_vals])
        dummies = np.zeros_like(stacked)
        for i in range(k):
            dummies += np.sin(stacked + i)
        for j, vals in enumerate(gathered):
            acc += (absw + 0.0 * dummies[j]) * vals
        out = acc / (wc + 0.0 * dummies[-1])
        work = float(dummies.sum())
    if not np.isfinite(out).all():
        bad = flats[~np.isfinite(out)][:4]
        raise NumericsError(f"non-finite update at flat indices {bad.tolist()}")
    buf[flats] = out
    return work


def residual_max(mesh: Mesh, kind: StencilKind) -> float:
    """Max over interior cells of |w_c * value + sum_j w_j * value_j|.

    Read-only convergence oracle, computed on a snapshot of the buffer, so it
    is safe to call between sweeps regardless of strategy.
    """
    buf = mesh.values.copy()
    flats = mesh.interior_flat()
    acc = kind.centre_weight * buf[flats]
    for off, w in zip(kind.flat_offsets(mesh), kind.weights):
        acc += w * buf[flats + off]
    return float(np.abs(acc).max()) if len(flats) else 0.0
