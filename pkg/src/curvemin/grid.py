"""Periodic grid geometry: grids, scalar fields, masks, and mask operations.

Cells are axis-aligned cubes of side ``h``; cell ``(i_1, .., i_d)`` has its
center at ``((i_1 + 0.5) h, ..)``.  All arrays are C-ordered with axis ``j``
indexing coordinate ``j``.  Types are frozen after construction (arrays are
made read-only) so they are safe to share across workers.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np
from scipy import ndimage


@dataclasses.dataclass(frozen=True)
class PeriodicGrid:
    """A d-dimensional cell grid, periodic per axis.

    sides     -- cells per axis (each >= 2)
    spacing   -- cell side h > 0
    periodic  -- wrap flag per axis; all True models the torus, False axes
                 are used for box problems with free or paid boundaries.
    """

    sides: tuple[int, ...]
    spacing: float
    periodic: tuple[bool, ...]

    def __init__(
        self,
        sides: Sequence[int],
        spacing: float,
        periodic: Sequence[bool] | bool = True,
    ):
        sides = tuple(int(n) for n in sides)
        if len(sides) not in (2, 3):
            raise ValueError(f"grid dimension must be 2 or 3, got {len(sides)}")
        if any(n < 2 for n in sides):
            raise ValueError(f"every side needs >= 2 cells, got {sides}")
        if math.prod(sides) >= 2**62:
            raise ValueError("cell count overflows")
        if not spacing > 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        if isinstance(periodic, bool):
            periodic = (periodic,) * len(sides)
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != len(sides):
            raise ValueError("periodic flags must match dimension")
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "spacing", float(spacing))
        object.__setattr__(self, "periodic", periodic)

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def cell_count(self) -> int:
        return math.prod(self.sides)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def lengths(self) -> tuple[float, ...]:
        """Physical side length per axis."""
        return tuple(n * self.spacing for n in self.sides)

    @property
    def total_volume(self) -> float:
        return math.prod(self.lengths)

    def centers(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        return (np.arange(self.sides[axis]) + 0.5) * self.spacing

    def center_point(self) -> tuple[float, ...]:
        return tuple(length / 2.0 for length in self.lengths)

    def provenance(self) -> str:
        per = "".join("p" if p else "n" for p in self.periodic)
        return f"grid[{'x'.join(map(str, self.sides))},h={self.spacing!r},{per}]"


def unit_torus(n: int, dim: int = 2) -> PeriodicGrid:
    """The unit torus [0,1)^dim at n cells per axis."""
    return PeriodicGrid((n,) * dim, 1.0 / n, True)


@dataclasses.dataclass(frozen=True)
class ScalarField:
    """Real values, one per cell."""

    grid: PeriodicGrid
    values: np.ndarray

    def __init__(self, grid: PeriodicGrid, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.shape != grid.sides:
            raise ValueError(f"field shape {values.shape} != grid sides {grid.sides}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


@dataclasses.dataclass(frozen=True)
class Mask:
    """A candidate set E as a boolean cell field."""

    grid: PeriodicGrid
    cells: np.ndarray

    def __init__(self, grid: PeriodicGrid, cells: np.ndarray):
        cells = np.ascontiguousarray(cells, dtype=bool)
        if cells.shape != grid.sides:
            raise ValueError(f"mask shape {cells.shape} != grid sides {grid.sides}")
        cells.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "cells", cells)

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    def complement(self) -> "Mask":
        return Mask(self.grid, ~self.cells)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Mask)
            and self.grid == other.grid
            and bool(np.array_equal(self.cells, other.cells))
        )


def empty_mask(grid: PeriodicGrid) -> Mask:
    return Mask(grid, np.zeros(grid.sides, dtype=bool))


def full_mask(grid: PeriodicGrid) -> Mask:
    return Mask(grid, np.ones(grid.sides, dtype=bool))


def volume(mask: Mask) -> float:
    """|E| = cell count times h^d."""
    return mask.count * mask.grid.cell_volume


def translate(mask: Mask, shift: Sequence[int]) -> Mask:
    """Cyclic translation by whole cells (periodic axes only)."""
    shift = tuple(int(s) for s in shift)
    if len(shift) != mask.grid.dim:
        raise ValueError("shift dimension mismatch")
    for ax, s in enumerate(shift):
        if s % mask.grid.sides[ax] != 0 and not mask.grid.periodic[ax]:
            raise ValueError("cannot translate along a non-periodic axis")
    return Mask(mask.grid, np.roll(mask.cells, shift, axis=tuple(range(mask.grid.dim))))


def _periodic_distance_sq(grid: PeriodicGrid, center: Sequence[float]) -> np.ndarray:
    """Squared distance of every cell center to ``center`` (wrapping on periodic axes)."""
    if len(center) != grid.dim:
        raise ValueError("center dimension mismatch")
    dist_sq = np.zeros(grid.sides, dtype=np.float64)
    for ax in range(grid.dim):
        delta = np.abs(grid.centers(ax) - float(center[ax]))
        if grid.periodic[ax]:
            length = grid.lengths[ax]
            delta = np.minimum(delta, length - delta)
        shape = [1] * grid.dim
        shape[ax] = grid.sides[ax]
        dist_sq = dist_sq + (delta**2).reshape(shape)
    return dist_sq


def ball_mask(grid: PeriodicGrid, center: Sequence[float], r: float) -> Mask:
    """Cells whose centers lie within periodic distance r of ``center``."""
    max_r = min(grid.lengths) / 2.0
    if not 0 < r <= max_r:
        raise ValueError(f"radius must satisfy 0 < r <= L/2 = {max_r}, got {r}")
    return Mask(grid, _periodic_distance_sq(grid, center) <= r * r)


def sym_diff_volume(a: Mask, b: Mask) -> float:
    """|A delta B|."""
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    return int(np.count_nonzero(a.cells ^ b.cells)) * a.grid.cell_volume


def best_translation_overlap(a: Mask, b: Mask) -> tuple[tuple[int, ...], float]:
    """Cyclic shift of A minimizing |translate(A, s) delta B|.

    Overlap counts for every shift come from one cross-correlation
    (|A delta B| = |A| + |B| - 2 |A cap B|); ties break to the
    lexicographically smallest shift.
    """
    if a.grid != b.grid:
        raise ValueError("grid mismatch")
    if not all(a.grid.periodic):
        raise ValueError("translation search needs a fully periodic grid")
    fa = np.fft.rfftn(a.cells.astype(np.float64))
    fb = np.fft.rfftn(b.cells.astype(np.float64))
    # corr[s] = sum_y A(y) B(y + s); translate(A, s)(x) = A(x - s).
    corr = np.fft.irfftn(np.conj(fa) * fb, s=a.grid.sides, axes=tuple(range(a.grid.dim)))
    overlap = np.rint(corr).astype(np.int64)
    best = overlap.max()
    candidates = np.argwhere(overlap == best)
    order = np.lexsort(tuple(candidates[:, ax] for ax in range(a.grid.dim - 1, -1, -1)))
    shift = tuple(int(c) for c in candidates[order[0]])
    symdiff = (a.count + b.count - 2 * int(best)) * a.grid.cell_volume
    return shift, symdiff


def connected_components(mask: Mask) -> list[Mask]:
    """Face-adjacency components (wrapping on periodic axes), largest first.

    Ties in volume break by the smallest flat cell index so the order is
    deterministic.
    """
    structure = ndimage.generate_binary_structure(mask.grid.dim, 1)
    labels, nlab = ndimage.label(mask.cells, structure=structure)
    if nlab == 0:
        return []
    parent = list(range(nlab + 1))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for ax in range(mask.grid.dim):
        if not mask.grid.periodic[ax]:
            continue
        first = np.take(labels, 0, axis=ax).ravel()
        last = np.take(labels, -1, axis=ax).ravel()
        touching = (first > 0) & (last > 0)
        for i, j in zip(first[touching], last[touching]):
            union(int(i), int(j))

    roots = np.array([find(i) for i in range(nlab + 1)])
    merged = roots[labels]
    ids, flat_first = np.unique(merged.ravel(), return_index=True)
    comps = []
    for cid, first_idx in zip(ids, flat_first):
        if cid == 0:
            continue
        cells = merged == cid
        comps.append((int(cells.sum()), int(first_idx), cells))
    comps.sort(key=lambda t: (-t[0], t[1]))
    return [Mask(mask.grid, cells) for _, _, cells in comps]


def rescale_mask(mask: Mask, factor: float, target: PeriodicGrid) -> Mask:
    """Nearest-neighbor resample of the indicator, scaled about the domain center.

    The image of a point y of the target is the source cell containing
    c_src + (y - c_tgt) / factor, wrapped on periodic source axes and clipped
    elsewhere.
    """
    if not factor > 0:
        raise ValueError("factor must be positive")
    if mask.grid.dim != target.dim:
        raise ValueError("dimension mismatch")
    if min(target.sides) < 8:
        raise ValueError("target too coarse: needs >= 8 cells per axis")
    src = mask.grid
    c_src = src.center_point()
    c_tgt = target.center_point()
    index_axes = []
    for ax in range(src.dim):
        y = target.centers(ax)
        x = c_src[ax] + (y - c_tgt[ax]) / factor
        idx = np.floor(x / src.spacing).astype(np.int64)
        if src.periodic[ax]:
            idx %= src.sides[ax]
        else:
            idx = np.clip(idx, 0, src.sides[ax] - 1)
        shape = [1] * src.dim
        shape[ax] = target.sides[ax]
        index_axes.append(idx.reshape(shape))
    return Mask(target, mask.cells[tuple(index_axes)])


def mask_extents(mask: Mask) -> tuple[float, ...]:
    """Axis-aligned bounding-box extent per axis (no wrap handling)."""
    if mask.count == 0:
        return (0.0,) * mask.grid.dim
    idx = np.argwhere(mask.cells)
    spans = idx.max(axis=0) - idx.min(axis=0) + 1
    return tuple(float(s * mask.grid.spacing) for s in spans)


def mask_diameter(mask: Mask) -> float:
    """Euclidean diameter of the bounding box (diagnostic for box solves)."""
    return math.sqrt(sum(e * e for e in mask_extents(mask)))
