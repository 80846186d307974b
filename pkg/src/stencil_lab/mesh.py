"""Cartesian cell-value grids with a one-cell fixed-value halo.

A mesh is a flat, contiguous float64 buffer of shape (n+2)**dim holding an
n**dim interior surrounded by one layer of boundary (halo) cells.  Layout is
row-major with x fastest, so the innermost sweep loop streams contiguously.
Coordinates are (x, y) in 2D and (x, y, z) in 3D, each component in
[0, n+1]; a cell is interior iff every component is in [1, n].

Halo cells hold a fixed Dirichlet value: they are read by stencils but never
written by any sweep.  Sweeps mutate the buffer concurrently from several
workers; the mesh itself does no locking — disjoint-cell writes are safe and
the scheduling discipline of the strategy in use keeps adjacent cells apart.
"""

from __future__ import annotations

import numpy as np


class Mesh:
    """Flat float64 cell storage for a dim-dimensional grid, halo included."""

    __slots__ = ("dim", "n", "side", "strides", "values", "_interior_flat")

    def __init__(self, dim: int, n: int):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        if n < 1:
            raise ValueError(f"interior extent must be >= 1, got {n}")
        self.dim = dim
        self.n = n
        self.side = n + 2
        # strides[a] = number of flat slots one step along axis a covers
        self.strides = tuple(self.side ** a for a in range(dim))
        self.values = np.zeros(self.side ** dim, dtype=np.float64)
        self._interior_flat = None

    @property
    def interior_count(self) -> int:
        return self.n ** self.dim

    def flat_index(self, coord) -> int:
        """Row-major flat index of `coord`; raises IndexError out of bounds."""
        if len(coord) != self.dim:
            raise IndexError(f"expected {self.dim} coordinates, got {coord!r}")
        flat = 0
        for c in reversed(coord):
            if not 0 <= c <= self.n + 1:
                raise IndexError(f"coordinate {coord!r} outside [0, {self.n + 1}]")
            flat = flat * self.side + c
        return flat

    def coord_of(self, flat: int):
        """Inverse of flat_index."""
        if not 0 <= flat < len(self.values):
            raise IndexError(f"flat index {flat} outside buffer")
        coord = []
        for _ in range(self.dim):
            flat, c = divmod(flat, self.side)
            coord.append(c)
        return tuple(coord)

    def is_interior(self, coord) -> bool:
        return all(1 <= c <= self.n for c in coord)

    def interior_coords(self):
        """All interior cells in lexicographic order (outermost axis slowest)."""
        rng = range(1, self.n + 1)
        if self.dim == 2:
            for y in rng:
                for x in rng:
                    yield (x, y)
        else:
            for z in rng:
                for y in rng:
                    for x in rng:
                        yield (x, y, z)

    def interior_flat(self) -> np.ndarray:
        """Flat indices of the interior cells, lexicographic order (cached)."""
        if self._interior_flat is None:
            axis = np.arange(1, self.n + 1)
            if self.dim == 2:
                flats = axis[:, None] * self.side + axis[None, :]
            else:
                flats = (axis[:, None, None] * self.side + axis[None, :, None]) * self.side + axis[None, None, :]
            self._interior_flat = flats.ravel().astype(np.int64)
        return self._interior_flat

    def halo_flat(self) -> np.ndarray:
        """Flat indices of every halo cell."""
        mask = np.ones(len(self.values), dtype=bool)
        mask[self.interior_flat()] = False
        return np.flatnonzero(mask)

    def copy(self) -> "Mesh":
        other = Mesh(self.dim, self.n)
        other.values[:] = self.values
        return other


def init(mesh: Mesh, interior_seed: int, boundary_value: float = 0.0) -> Mesh:
    """Fill the halo with `boundary_value` and the interior with uniform [0,1).

    The interior draw uses numpy's seeded PCG64 generator in lexicographic
    cell order, so the same seed reproduces the same buffer bit for bit on
    every run and at every worker count.
    """
    mesh.values.fill(boundary_value)
    rng = np.random.default_rng(interior_seed)
    mesh.values[mesh.interior_flat()] = rng.random(mesh.interior_count)
    return mesh


def make_mesh(dim: int, n: int, seed: int = 0, boundary_value: float = 0.0) -> Mesh:
    """Construct and initialise a mesh in one step."""
    return init(Mesh(dim, n), seed, boundary_value)
