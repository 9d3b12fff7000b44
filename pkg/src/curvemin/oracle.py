"""Exhaustive ground truth on tiny grids.

Everything here enumerates all 2^N subsets of a grid with at most 20 cells
and scores them with the same canonical energy ledger the solvers use, so
equality checks against solver output are exact rather than toleranced.  The
enumeration is vectorized in chunks for speed, but near-minimal candidates
are always re-scored one by one through the ledger before anything is
reported; the vectorized sums only preselect.

The per-volume table doubles as the exact small-instance engine of the
volume-constrained solver, which keeps discrete-volume semantics identical
between solver and oracle on grids where enumeration is feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .grid import Mask, PeriodicGrid
from .stencil import PerimeterStencil, _outside_strip, energy_ledger

_MAX_CELLS = 20
_CHUNK_BITS = 16
_PRESELECT = 1e-9


@dataclass(frozen=True)
class OracleResult:
    """All global minimizers of one energy, with the exact minimal value."""

    energy: float
    minimizers: tuple[Mask, ...]

    @property
    def minimal(self) -> Mask:
        """Intersection of all minimizers (the solver's tie-break)."""
        cells = np.logical_and.reduce([m.cells for m in self.minimizers])
        return Mask(self.minimizers[0].grid, cells)

    @property
    def maximal(self) -> Mask:
        """Union of all minimizers."""
        cells = np.logical_or.reduce([m.cells for m in self.minimizers])
        return Mask(self.minimizers[0].grid, cells)


def _check_size(grid: PeriodicGrid) -> int:
    n = grid.cell_count
    if n > _MAX_CELLS:
        raise ValueError(f"grid with {n} cells is too large for exhaustive search")
    return n


def _pair_table(
    grid: PeriodicGrid, stencil: PerimeterStencil, outside: str
) -> tuple[list[tuple[np.ndarray, np.ndarray, float]], np.ndarray]:
    """Interior neighbor pairs per offset, plus per-cell boundary exit weight."""
    if outside not in ("free", "empty"):
        raise ValueError(f"unknown outside mode {outside!r}")
    idx = np.arange(grid.cell_count, dtype=np.int64).reshape(grid.sides)
    pairs = []
    boundary = np.zeros(grid.cell_count)
    face = float(grid.spacing) ** (grid.dim - 1)
    for offset, weight in zip(stencil.offsets, stencil.weights):
        shift = tuple(-int(c) for c in offset)
        neighbor = np.roll(idx, shift=shift, axis=tuple(range(grid.dim)))
        strip = _outside_strip(grid, offset)
        if strip is None:
            u, v = idx.ravel(), neighbor.ravel()
        else:
            keep = ~strip
            u, v = idx[keep], neighbor[keep]
        proper = u != v
        pairs.append((u[proper], v[proper], weight * face))
        if outside == "empty":
            for sign in (1, -1):
                signed = tuple(sign * int(c) for c in offset)
                exit_strip = _outside_strip(grid, signed)
                if exit_strip is not None:
                    boundary[exit_strip.ravel()] += weight * face
    return pairs, boundary


def _enumerate_energies(
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.int64]]:
    """Vectorized energy and popcount for every subset index.

    These values preselect candidates; exact comparisons go through the
    ledger afterwards.
    """
    n = _check_size(grid)
    pairs, boundary = _pair_table(grid, stencil, outside)
    flat_cost = np.ascontiguousarray(cost, dtype=np.float64).ravel()
    total = 1 << n
    energies = np.empty(total)
    pops = np.empty(total, dtype=np.int64)
    shifts = np.arange(n, dtype=np.uint64)
    chunk = 1 << min(_CHUNK_BITS, n)
    for start in range(0, total, chunk):
        idx = np.arange(start, start + chunk, dtype=np.uint64)
        bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)
        per = np.zeros(chunk)
        for u, v, w in pairs:
            per += w * np.count_nonzero(bits[:, u] != bits[:, v], axis=1)
        if boundary.any():
            per += bits @ boundary
        energies[start : start + chunk] = per - bits @ flat_cost
        pops[start : start + chunk] = np.count_nonzero(bits, axis=1)
    return energies, pops


def _mask_from_index(grid: PeriodicGrid, index: int) -> Mask:
    n = grid.cell_count
    bits = (index >> np.arange(n, dtype=np.uint64)) & 1
    return Mask(grid, bits.astype(bool).reshape(grid.sides))


def _exact_argmins(
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
    candidate_indices: npt.NDArray[np.int64],
) -> tuple[float, list[int]]:
    """Ledger-exact minimum and all attaining subset indices among candidates."""
    best = np.inf
    scored: list[tuple[float, int]] = []
    for index in candidate_indices:
        mask = _mask_from_index(grid, int(index))
        energy = energy_ledger(mask, stencil, cost, outside).energy
        scored.append((energy, int(index)))
        best = min(best, energy)
    winners = sorted(i for e, i in scored if e == best)
    return best, winners


def brute_force_min(
    g_eff: npt.NDArray[np.float64] | "object",
    stencil: PerimeterStencil,
    *,
    grid: PeriodicGrid | None = None,
    outside: str = "free",
) -> OracleResult:
    """Exact global minimum of P(E) - sum_{x in E} g_eff(x) h^d, all argmins.

    ``g_eff`` may be a ScalarField or a raw array with an explicit grid.  The
    reported energy is the canonical ledger value of the minimizers.
    """
    if grid is None:
        field_grid = g_eff.grid  # type: ignore[union-attr]
        values = g_eff.values  # type: ignore[union-attr]
    else:
        field_grid = grid
        values = np.asarray(g_eff, dtype=np.float64)
    cost = values * field_grid.cell_volume
    energies, _ = _enumerate_energies(field_grid, stencil, cost, outside)
    floor = energies.min()
    near = np.flatnonzero(energies <= floor + _PRESELECT * (1.0 + abs(floor)))
    best, winners = _exact_argmins(field_grid, stencil, cost, outside, near)
    return OracleResult(
        energy=best,
        minimizers=tuple(_mask_from_index(field_grid, i) for i in winners),
    )


@dataclass(frozen=True)
class IsovolTable:
    """Exact f at every attainable discrete volume of a tiny grid.

    ``energies[k]`` is min P(E) - integral_E g over |E| = k cells and
    ``masks[k]`` the lexicographically smallest argmin (by subset index).
    """

    grid: PeriodicGrid
    cell_volumes: npt.NDArray[np.float64]
    energies: npt.NDArray[np.float64]
    masks: tuple[Mask, ...]

    def difference_quotients(self) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
        """Left and right difference quotients of f against volume."""
        h_d = float(self.grid.cell_volume)
        diffs = np.diff(self.energies) / h_d
        left = np.concatenate([[np.nan], diffs])
        right = np.concatenate([diffs, [np.nan]])
        return left, right


def brute_force_isovol(
    g: "object",
    stencil: PerimeterStencil,
    *,
    outside: str = "free",
) -> IsovolTable:
    """Exact isovolumetric table by exhaustive enumeration."""
    field_grid = g.grid  # type: ignore[union-attr]
    values = g.values  # type: ignore[union-attr]
    n = _check_size(field_grid)
    cost = values * field_grid.cell_volume
    energies, pops = _enumerate_energies(field_grid, stencil, cost, outside)

    table = np.empty(n + 1)
    masks: list[Mask] = []
    for k in range(n + 1):
        at_k = np.flatnonzero(pops == k)
        floor = energies[at_k].min()
        near = at_k[energies[at_k] <= floor + _PRESELECT * (1.0 + abs(floor))]
        best, winners = _exact_argmins(field_grid, stencil, cost, outside, near)
        table[k] = best
        masks.append(_mask_from_index(field_grid, winners[0]))
    return IsovolTable(
        grid=field_grid,
        cell_volumes=np.arange(n + 1) * field_grid.cell_volume,
        energies=table,
        masks=tuple(masks),
    )


def brute_force_penalized(
    g: "object",
    mu: float,
    v: float,
    stencil: PerimeterStencil,
    *,
    outside: str = "free",
) -> OracleResult:
    """Exact minimum of P(E) - integral_E g + mu | |E| - v |, all argmins."""
    field_grid = g.grid  # type: ignore[union-attr]
    values = g.values  # type: ignore[union-attr]
    cost = values * field_grid.cell_volume
    energies, pops = _enumerate_energies(field_grid, stencil, cost, outside)
    h_d = float(field_grid.cell_volume)
    penalized = energies + mu * np.abs(pops * h_d - v)
    floor = penalized.min()
    near = np.flatnonzero(penalized <= floor + _PRESELECT * (1.0 + abs(floor)))

    best = np.inf
    scored: list[tuple[float, int]] = []
    for index in near:
        mask = _mask_from_index(field_grid, int(index))
        led = energy_ledger(mask, stencil, cost, outside)
        value = led.energy + mu * abs(mask.count * h_d - v)
        scored.append((value, int(index)))
        best = min(best, value)
    winners = sorted(i for e, i in scored if e == best)
    return OracleResult(
        energy=best,
        minimizers=tuple(_mask_from_index(field_grid, i) for i in winners),
    )
