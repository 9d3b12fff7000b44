"""Exact minimization of perimeter-minus-gain energies via minimum cuts.

The energy ``P(E) - sum_{x in E} cost(x)`` is submodular in the cell labels,
so its exact minimizers are minimum s-t cuts: each neighbor pair from the
perimeter stencil becomes a symmetric arc pair with the corresponding face
weight, positive cell costs become source arcs (paid when the cell is left
out) and negative ones become sink arcs (paid when the cell is taken).  One
max-flow run yields both the smallest and the largest minimizer.

Graph structure depends only on grid, stencil, and outside handling, so it is
cached and every probe with new costs just refills terminal capacities.
Labels can be pinned with ``forced_in`` / ``forced_out`` masks, which attach
terminal arcs too large for any optimal cut to sever.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .grid import Mask, PeriodicGrid
from .maxflow import GraphStructure, build_structure, solve_cut
from .stencil import PerimeterStencil, _outside_strip

_FloatArr = npt.NDArray[np.float64]

_CacheEntry = tuple[GraphStructure, "_FloatArr | None"]
_CACHE: OrderedDict[tuple, _CacheEntry] = OrderedDict()
_CACHE_LIMIT = 4


@dataclass(frozen=True)
class CutSolution:
    """Both extreme minimizers of one binary energy.

    Every minimizer contains ``minimal`` and is contained in ``maximal``;
    the two coincide exactly when the minimizer is unique.  ``cut_value`` is
    the solver-side objective (energy shifted by the sum of positive costs)
    and is kept for diagnostics only; report energies through the perimeter
    ledger instead.
    """

    minimal: Mask
    maximal: Mask
    cut_value: float


def clear_structure_cache() -> None:
    """Drop all cached graph structures (they can hold large arrays)."""
    _CACHE.clear()


def _pairs_and_boundary(
    grid: PeriodicGrid, stencil: PerimeterStencil, outside: str
) -> _CacheEntry:
    """Enumerate neighbor arcs and, for empty outside, per-cell exit weights."""
    idx = np.arange(grid.cell_count, dtype=np.int64).reshape(grid.sides)
    face = float(grid.spacing) ** (grid.dim - 1)
    all_axes = tuple(range(grid.dim))

    pair_u: list[npt.NDArray[np.int64]] = []
    pair_v: list[npt.NDArray[np.int64]] = []
    pair_w: list[_FloatArr] = []
    boundary = np.zeros(grid.cell_count) if outside == "empty" else None

    for offset, weight in zip(stencil.offsets, stencil.weights):
        shift = tuple(-int(c) for c in offset)
        neighbor = np.roll(idx, shift=shift, axis=all_axes)
        strip = _outside_strip(grid, offset)
        if strip is None:
            u = idx.ravel()
            v = neighbor.ravel()
        else:
            keep = ~strip
            u = idx[keep]
            v = neighbor[keep]
        # An offset that wraps to zero on a tiny torus pairs a cell with
        # itself and can never be cut; drop those arcs.
        proper = u != v
        if not proper.all():
            u = u[proper]
            v = v[proper]
        pair_u.append(u)
        pair_v.append(v)
        pair_w.append(np.full(u.shape[0], weight * face))
        if boundary is not None:
            for sign in (1, -1):
                signed = tuple(sign * int(c) for c in offset)
                exit_strip = _outside_strip(grid, signed)
                if exit_strip is not None:
                    boundary[exit_strip.ravel()] += weight * face

    caps = np.concatenate(pair_w) if pair_w else np.zeros(0)
    structure = build_structure(
        grid.cell_count,
        np.concatenate(pair_u) if pair_u else np.zeros(0, dtype=np.int64),
        np.concatenate(pair_v) if pair_v else np.zeros(0, dtype=np.int64),
        caps,
        caps.copy(),
    )
    return structure, boundary


def _structure_for(
    grid: PeriodicGrid, stencil: PerimeterStencil, outside: str
) -> _CacheEntry:
    key = (grid.sides, grid.periodic, grid.spacing, stencil.name, outside)
    entry = _CACHE.get(key)
    if entry is None:
        entry = _pairs_and_boundary(grid, stencil, outside)
        _CACHE[key] = entry
        while len(_CACHE) > _CACHE_LIMIT:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return entry


def minimize_binary(
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: _FloatArr,
    *,
    outside: str = "free",
    forced_in: Mask | None = None,
    forced_out: Mask | None = None,
    backend: str | None = None,
) -> CutSolution:
    """Exact minimizers of ``P(E) - sum_{x in E} cost(x)``.

    ``cost`` holds the full per-cell reward (forcing field plus multiplier,
    already scaled by cell volume).  ``outside`` picks how cuts across a
    non-periodic boundary are charged: 'free' ignores them, 'empty' charges a
    cell for every stencil direction that exits the grid, as if the outside
    were fixed to the complement.  ``forced_in`` / ``forced_out`` pin disjoint
    sets of cells; the returned minimizers are exact for the pinned problem.
    """
    if stencil.dim != grid.dim:
        raise ValueError("stencil dimension does not match the grid")
    if outside not in ("free", "empty"):
        raise ValueError("outside must be 'free' or 'empty'")
    if cost.shape != grid.sides:
        raise ValueError("cost field shape does not match the grid")
    if not np.isfinite(cost).all():
        raise ValueError("cost field must be finite")

    structure, boundary = _structure_for(grid, stencil, outside)
    flat = np.ascontiguousarray(cost, dtype=np.float64).ravel()
    source_cap = np.maximum(flat, 0.0)
    sink_cap = np.maximum(-flat, 0.0)
    if boundary is not None:
        sink_cap = sink_cap + boundary

    if forced_in is not None or forced_out is not None:
        big = float(structure.base_caps.sum() + source_cap.sum() + sink_cap.sum()) + 1.0
        if forced_in is not None:
            if forced_in.cells.shape != grid.sides:
                raise ValueError("forced_in shape does not match the grid")
            source_cap = source_cap + big * forced_in.cells.ravel()
        if forced_out is not None:
            if forced_out.cells.shape != grid.sides:
                raise ValueError("forced_out shape does not match the grid")
            if forced_in is not None and np.any(forced_in.cells & forced_out.cells):
                raise ValueError("forced_in and forced_out overlap")
            sink_cap = sink_cap + big * forced_out.cells.ravel()

    value, in_min, in_max = solve_cut(structure, source_cap, sink_cap, backend=backend)
    return CutSolution(
        minimal=Mask(grid, in_min.reshape(grid.sides)),
        maximal=Mask(grid, in_max.reshape(grid.sides)),
        cut_value=value,
    )


def minimize_restricted(
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: _FloatArr,
    free: npt.NDArray[np.bool_],
    fill: npt.NDArray[np.bool_],
    *,
    outside: str = "free",
    backend: str | None = None,
) -> CutSolution:
    """Exact minimizers over configurations that may differ from ``fill`` only
    on ``free`` cells.

    Cuts between two frozen cells are constant and ignored; a cut between a
    free cell and a frozen one folds into the free cell's terminal capacity
    (staying with the frozen neighbor's label is rewarded by the arc weight).
    The returned masks are full-grid compositions of the frozen fill with the
    restricted problem's smallest and largest minimizers, so the caller can
    evaluate them through the ordinary ledger.  The graph only contains the
    free cells, which makes narrow-corridor probes cheap on large grids.
    """
    if stencil.dim != grid.dim:
        raise ValueError("stencil dimension does not match the grid")
    if outside not in ("free", "empty"):
        raise ValueError("outside must be 'free' or 'empty'")
    if cost.shape != grid.sides or free.shape != grid.sides or fill.shape != grid.sides:
        raise ValueError("field shapes do not match the grid")

    free = np.ascontiguousarray(free, dtype=bool)
    fill = np.ascontiguousarray(fill, dtype=bool)
    n_free = int(np.count_nonzero(free))
    if n_free == 0:
        frozen = Mask(grid, fill)
        return CutSolution(minimal=frozen, maximal=frozen, cut_value=0.0)

    face = float(grid.spacing) ** (grid.dim - 1)
    local = np.full(grid.cell_count, -1, dtype=np.int64)
    free_flat = np.flatnonzero(free.ravel())
    local[free_flat] = np.arange(n_free, dtype=np.int64)
    idx = np.arange(grid.cell_count, dtype=np.int64).reshape(grid.sides)
    all_axes = tuple(range(grid.dim))

    # Effective reward on free cells: cost plus +-w per frozen neighbor,
    # rewarding agreement with that neighbor's label.
    eff = np.ascontiguousarray(cost, dtype=np.float64).copy()
    fill_signed = np.where(fill, 1.0, -1.0)

    pair_u: list[npt.NDArray[np.int64]] = []
    pair_v: list[npt.NDArray[np.int64]] = []
    pair_w: list[_FloatArr] = []
    for offset, weight in zip(stencil.offsets, stencil.weights):
        shift = tuple(-int(c) for c in offset)
        neighbor = np.roll(idx, shift=shift, axis=all_axes)
        inside = np.ones(grid.sides, dtype=bool)
        strip = _outside_strip(grid, offset)
        if strip is not None:
            inside = ~strip
            if outside == "empty":
                # Exiting offsets behave like frozen empty neighbors, both ways.
                eff[strip & free] -= weight * face
                back = _outside_strip(grid, tuple(-int(c) for c in offset))
                if back is not None:
                    eff[back & free] -= weight * face
        nb_free = np.zeros(grid.sides, dtype=bool)
        nb_free[inside] = free.ravel()[neighbor[inside]]
        both = free & nb_free & inside
        if both.any():
            u = local[idx[both]]
            v = local[neighbor[both]]
            proper = u != v
            pair_u.append(u[proper])
            pair_v.append(v[proper])
            pair_w.append(np.full(int(proper.sum()), weight * face))
        half = free & ~nb_free & inside
        if half.any():
            eff[half] += weight * face * fill_signed.ravel()[neighbor[half]]
        rev = ~free & nb_free & inside
        if rev.any():
            target = neighbor[rev]
            np.add.at(
                eff.ravel(), target, weight * face * fill_signed[rev]
            )

    caps = np.concatenate(pair_w) if pair_w else np.zeros(0)
    structure = build_structure(
        n_free,
        np.concatenate(pair_u) if pair_u else np.zeros(0, dtype=np.int64),
        np.concatenate(pair_v) if pair_v else np.zeros(0, dtype=np.int64),
        caps,
        caps.copy(),
    )
    flat_eff = eff.ravel()[free_flat]
    value, in_min, in_max = solve_cut(
        structure,
        np.maximum(flat_eff, 0.0),
        np.maximum(-flat_eff, 0.0),
        backend=backend,
    )

    out_min = fill.copy().ravel()
    out_min[free_flat] = in_min
    out_max = fill.copy().ravel()
    out_max[free_flat] = in_max
    return CutSolution(
        minimal=Mask(grid, out_min.reshape(grid.sides)),
        maximal=Mask(grid, out_max.reshape(grid.sides)),
        cut_value=value,
    )
