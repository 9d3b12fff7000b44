"""Volume-constrained and penalized minimization of perimeter minus forcing.

The unconstrained problem min P(E) - sum_{x in E} (g(x) + lam) h^d is solved
exactly by a single cut (:mod:`curvemin.graphcut`).  The volume-constrained
problem min over |E| = v is built on top of it in three phases:

1. bisection on the multiplier lam, each probe an exact unconstrained solve,
   until either some probe attains the target cell count exactly or the
   bracket collapses below ``tol_lambda``.  Every probe also contributes one
   affine lower bound F_lam + lam v, whose maximum is a certified lower bound
   for the constrained value (the convex-envelope estimate).
2. if no probe hits the count, candidate sets at the exact count are built by
   greedy growth and shrinkage of the nearest probe minimizers, plus a round
   ball seeded where the forcing is largest, and polished by single swaps.
   The best candidate is an upper-bound minimizer with the requested volume.
3. the multiplier interval is measured locally as a pair of one-sided ring
   quotients at the final mask: the energy change per volume of greedily
   shrinking (left slope) and growing (right slope) the mask by one boundary
   ring.  Bisection cannot provide this: wherever the discrete volume-energy
   curve is concave, every multiplier scan, global or restricted, jumps
   across the target in one step and reports a chord of the convex hull
   instead of the local slope.

Grids with at most twenty cells skip the heuristics entirely and use the
exhaustive per-volume table, so solver output is exact wherever enumeration
is feasible.

The penalized functional F_mu(E) = P(E) - int_E g + mu | |E| - v | is split
into the branches |E| >= v and |E| <= v; each branch absorbs the linear
volume term into the forcing (g -+ mu) and pins the count at the nearest
admissible integer, so the reported set always matches the target volume to
within one cell even when mu is barely coercive.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .graphcut import CutSolution, minimize_binary, minimize_restricted
from .grid import (
    Mask,
    PeriodicGrid,
    ScalarField,
    ball_mask,
    empty_mask,
    full_mask,
    mask_diameter,
)
from .oracle import brute_force_isovol
from .stencil import (
    PerimeterStencil,
    cell_cost,
    energy_ledger,
    neighbor_weight_sum,
    perimeter_add_marginals,
    reachable_weight,
)

_ENUM_LIMIT = 20
_SWAP_EPS = 1e-12
_MAX_EXPAND = 60
_MAX_BISECT = 200


@dataclass(frozen=True)
class SolveResult:
    """One solver answer, always scored by the canonical ledger.

    ``energy`` is P(E) - integral_E g for the reported mask, with no
    multiplier or penalty folded in; ``tilted_energy`` carries the solver's
    own objective when that differs (unconstrained solves include the
    multiplier term, penalized solves report F_mu in ``penalized_energy``).
    ``status`` is one of 'exact_volume' (a global minimizer at some
    multiplier attains the target count), 'adjusted' (the mask was edited to
    the exact count), 'bracketed' (nearest parametric minimizers returned
    as-is) or 'unconstrained'.
    """

    mask: Mask
    perimeter: float
    g_integral: float
    volume: float
    energy: float
    status: str
    multiplier: float | None = None
    lambda_lo: float | None = None
    lambda_hi: float | None = None
    vol_lo: float | None = None
    vol_hi: float | None = None
    envelope_energy: float | None = None
    tilted_energy: float | None = None
    target_volume: float | None = None
    penalty: float | None = None
    penalized_energy: float | None = None


def _ledger_result(
    mask: Mask,
    g: ScalarField,
    stencil: PerimeterStencil,
    outside: str,
    status: str,
    **extra,
) -> SolveResult:
    led = energy_ledger(mask, stencil, cell_cost(g.values, 0.0, g.grid), outside)
    return SolveResult(
        mask=mask,
        perimeter=led.perimeter,
        g_integral=led.gain,
        volume=mask.count * g.grid.cell_volume,
        energy=led.energy,
        status=status,
        **extra,
    )


def default_tol_lambda(g: ScalarField) -> float:
    """Multiplier bracket width: 1e-6 relative to the forcing scale."""
    return 1e-6 * (1.0 + g.sup_norm)


# ---------------------------------------------------------------------------
# Unconstrained solves and the monotone multiplier sweep.


def minimize_unconstrained(
    g: ScalarField,
    lam: float,
    stencil: PerimeterStencil,
    *,
    outside: str = "free",
    backend: str | None = None,
) -> SolveResult:
    """Exact minimizer of P(E) - int_E (g + lam); reports the minimal one."""
    cost = cell_cost(g.values, lam, g.grid)
    sol = minimize_binary(g.grid, stencil, cost, outside=outside, backend=backend)
    tilt = energy_ledger(sol.minimal, stencil, cost, outside).energy
    return _ledger_result(
        sol.minimal,
        g,
        stencil,
        outside,
        "unconstrained",
        multiplier=float(lam),
        tilted_energy=tilt,
    )


def parametric_sweep(
    g: ScalarField,
    lam_values: Sequence[float],
    stencil: PerimeterStencil,
    *,
    outside: str = "free",
    backend: str | None = None,
    check_nesting: bool = True,
) -> list[SolveResult]:
    """Unconstrained solves along nondecreasing multipliers.

    The extreme minimizers grow with the multiplier; ``check_nesting``
    verifies that inclusion on the computed masks and raises if the cut
    solutions ever violate it.
    """
    lams = [float(v) for v in lam_values]
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("multiplier values must be nondecreasing")
    results: list[SolveResult] = []
    prev: CutSolution | None = None
    for lam in lams:
        cost = cell_cost(g.values, lam, g.grid)
        sol = minimize_binary(g.grid, stencil, cost, outside=outside, backend=backend)
        if check_nesting and prev is not None:
            ok_min = bool(np.all(sol.minimal.cells | ~prev.minimal.cells))
            ok_max = bool(np.all(sol.maximal.cells | ~prev.maximal.cells))
            if not (ok_min and ok_max):
                raise RuntimeError(
                    f"minimizer family is not nested at multiplier {lam!r}"
                )
        tilt = energy_ledger(sol.minimal, stencil, cost, outside).energy
        results.append(
            _ledger_result(
                sol.minimal,
                g,
                stencil,
                outside,
                "unconstrained",
                multiplier=lam,
                tilted_energy=tilt,
            )
        )
        prev = sol
    return results


# ---------------------------------------------------------------------------
# Phase 1: global bisection on the multiplier.


@dataclass(frozen=True)
class _Probe:
    lam: float
    sol: CutSolution
    count_min: int
    count_max: int
    tilt_min: float


def _run_probe(
    g: ScalarField,
    lam: float,
    stencil: PerimeterStencil,
    outside: str,
    allowed: Mask | None,
    backend: str | None,
) -> _Probe:
    cost = cell_cost(g.values, lam, g.grid)
    if allowed is None:
        sol = minimize_binary(g.grid, stencil, cost, outside=outside, backend=backend)
    else:
        fill = np.zeros(g.grid.sides, dtype=bool)
        sol = minimize_restricted(
            g.grid, stencil, cost, allowed.cells, fill, outside=outside, backend=backend
        )
    tilt = energy_ledger(sol.minimal, stencil, cost, outside).energy
    return _Probe(float(lam), sol, sol.minimal.count, sol.maximal.count, tilt)


def _envelope_value(probes: Sequence[_Probe], v: float) -> float:
    return max(p.tilt_min + p.lam * v for p in probes)


# ---------------------------------------------------------------------------
# Phase 2: exact-count candidates.


def _adjust_to_count(
    cells0: npt.NDArray[np.bool_],
    k_target: int,
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
    allowed_flat: npt.NDArray[np.bool_],
) -> npt.NDArray[np.bool_]:
    """Greedy chunked growth or shrinkage to exactly ``k_target`` cells.

    Each round ranks candidate flips by the exact flip marginal of the
    current set (ties broken by flat index) and commits half the remaining
    deficit, so the marginals are refreshed logarithmically often; the last
    eight flips are committed one at a time.
    """
    cells = cells0.copy()
    flat = cells.ravel()
    cost_flat = cost.ravel()
    count = int(flat.sum())
    while count != k_target:
        marg = perimeter_add_marginals(cells, grid, stencil, outside).ravel() - cost_flat
        if count < k_target:
            pool = np.flatnonzero(~flat & allowed_flat)
            need = k_target - count
            key = marg[pool]
        else:
            pool = np.flatnonzero(flat)
            need = count - k_target
            key = -marg[pool]
        take = 1 if need <= 8 else (need + 1) // 2
        order = np.lexsort((pool, key))
        chosen = pool[order[:take]]
        flat[chosen] = count < k_target
        count += take if count < k_target else -take
    return cells


def _flip_neighbor_sums(
    cells_flat: npt.NDArray[np.bool_],
    nbr_sum: npt.NDArray[np.float64],
    index: int,
    into: bool,
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
) -> None:
    """Flip one cell and update S(x) at every stencil neighbor in place."""
    cells_flat[index] = into
    point = np.unravel_index(index, grid.sides)
    delta = 1.0 if into else -1.0
    for offset, weight in zip(stencil.offsets, stencil.weights):
        for sign in (1, -1):
            target = []
            ok = True
            for ax, c in enumerate(offset):
                t = point[ax] + sign * int(c)
                n = grid.sides[ax]
                if grid.periodic[ax]:
                    t %= n
                elif t < 0 or t >= n:
                    ok = False
                    break
                target.append(t)
            if ok:
                nbr_sum[tuple(target)] += delta * weight


def _swap_refine(
    cells0: npt.NDArray[np.bool_],
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
    allowed_flat: npt.NDArray[np.bool_],
    max_swaps: int,
) -> npt.NDArray[np.bool_]:
    """Volume-preserving descent: best add, then best remove, kept if the
    exact combined change is negative."""
    cells = cells0.copy()
    flat = cells.ravel()
    count = int(flat.sum())
    if count == 0 or count == int(allowed_flat.sum()):
        return cells
    reach = reachable_weight(grid, stencil, outside).ravel()
    nbr = neighbor_weight_sum(cells, grid, stencil)
    nbr_flat = nbr.ravel()
    face = float(grid.spacing) ** (grid.dim - 1)
    cost_flat = cost.ravel()
    for _ in range(max_swaps):
        add_marg = (reach - 2.0 * nbr_flat) * face - cost_flat
        add_scores = np.where(~flat & allowed_flat, add_marg, np.inf)
        a = int(np.argmin(add_scores))
        delta_a = float(add_scores[a])
        if not np.isfinite(delta_a):
            break
        _flip_neighbor_sums(flat, nbr, a, True, grid, stencil)
        rem_marg = cost_flat - (reach - 2.0 * nbr_flat) * face
        rem_scores = np.where(flat, rem_marg, np.inf)
        rem_scores[a] = np.inf
        z = int(np.argmin(rem_scores))
        delta_z = float(rem_scores[z])
        if delta_a + delta_z < -_SWAP_EPS:
            _flip_neighbor_sums(flat, nbr, z, False, grid, stencil)
        else:
            _flip_neighbor_sums(flat, nbr, a, False, grid, stencil)
            break
    return cells


def _ball_seed(
    g: ScalarField,
    v: float,
    allowed: Mask | None,
) -> npt.NDArray[np.bool_] | None:
    """Round seed of volume v placed where the forcing mass is largest.

    Scores every translate of the ball against g by FFT correlation; with a
    restriction mask, translates not fully contained in it are excluded.
    Requires a fully periodic grid (translates wrap).
    """
    grid = g.grid
    if not all(grid.periodic):
        return None
    if grid.dim == 2:
        r = math.sqrt(v / math.pi)
    else:
        r = (3.0 * v / (4.0 * math.pi)) ** (1.0 / 3.0)
    if r <= 0.0 or 2.0 * r >= min(grid.lengths):
        return None
    seed = ball_mask(grid, grid.center_point(), r)
    if seed.count == 0:
        return None
    axes = tuple(range(grid.dim))
    spec = np.conj(np.fft.rfftn(seed.cells.astype(np.float64)))
    score = np.fft.irfftn(np.fft.rfftn(g.values) * spec, s=grid.sides)
    score = np.round(score, 9)
    if allowed is not None:
        room = np.fft.irfftn(
            np.fft.rfftn(allowed.cells.astype(np.float64)) * spec, s=grid.sides
        )
        fits = np.rint(room) >= seed.count
        if not fits.any():
            return None
        score = np.where(fits, score, -np.inf)
    shift = np.unravel_index(int(np.argmax(score)), grid.sides)
    return np.roll(seed.cells, shift, axis=axes)


# ---------------------------------------------------------------------------
# Phase 3: one-sided difference quotients at the achieved volume.


def _candidate_score(
    cells: npt.NDArray[np.bool_],
    grid: PeriodicGrid,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
) -> tuple[float, bytes]:
    led = energy_ledger(Mask(grid, cells), stencil, cost, outside)
    return led.energy, cells.tobytes()


def _count_candidate(
    g: ScalarField,
    k: int,
    seeds: Sequence[npt.NDArray[np.bool_]],
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
    allowed: Mask | None,
    allowed_flat: npt.NDArray[np.bool_],
    max_swaps: int,
    include_ball: bool = True,
) -> npt.NDArray[np.bool_]:
    """Best heuristic mask with exactly k cells, grown from the given seeds.

    Every seed is greedily adjusted to the count, a round seed placed at the
    forcing maximum joins the pool unless ``include_ball`` is off, the
    lowest-energy candidate wins (ties by byte order) and single-swap descent
    polishes it.
    """
    grid = g.grid
    if k <= 0:
        return np.zeros(grid.sides, dtype=bool)
    if k >= int(allowed_flat.sum()):
        return allowed_flat.reshape(grid.sides).copy()
    cands = [
        _adjust_to_count(s, k, grid, stencil, cost, outside, allowed_flat)
        for s in seeds
    ]
    ball = _ball_seed(g, k * grid.cell_volume, allowed) if include_ball else None
    if ball is not None:
        cands.append(_adjust_to_count(ball, k, grid, stencil, cost, outside, allowed_flat))
    best = min(cands, key=lambda c: _candidate_score(c, grid, stencil, cost, outside))
    return _swap_refine(best, grid, stencil, cost, outside, allowed_flat, max_swaps)


def _ring_bracket(
    g: ScalarField,
    cells: npt.NDArray[np.bool_],
    k: int,
    n_allowed: int,
    stencil: PerimeterStencil,
    cost: npt.NDArray[np.float64],
    outside: str,
    allowed: Mask | None,
    allowed_flat: npt.NDArray[np.bool_],
    max_swaps: int,
) -> tuple[float | None, float | None, float, float]:
    """One-sided slope estimates of the volume-energy curve at a candidate.

    Companion masks a few boundary rings (one ring is about P/h^{d-1} cells)
    smaller and larger are grown and shrunk out of the candidate itself by
    the same greedy-plus-swap pipeline that built it, and the energy
    differences are divided by the volume moved.  Averaging over rings is
    essential: single-cell quotients of the discrete curve form an O(1)-wide
    staircase (a flip at a flat stretch of boundary is nearly free, one at a
    corner costs a whole face), whereas the ring chord tracks the derivative
    of the continuum curve to O(h).  Multiplier bisection cannot provide
    this either, because wherever the curve is concave every scan jumps
    across the target volume and reports a convex-hull chord.  Building all
    three masks with the same machinery keeps their heuristic slack
    comparable, so it largely cancels in the chords.  Seeding the side masks
    from the candidate alone keeps them in its basin, so across a kink the
    two sides report the slopes of their respective branches; a free-roaming
    seed pool would instead relocate a side mask wherever some other basin
    is globally better at the side count, turning the chord back into a
    cross-basin one.  A side with no room to move (empty or saturated mask)
    comes back as None.

    Returns (left, right, vol_lo, vol_hi) where the volumes delimit the ring
    span actually measured.

    The span is four rings: candidate energies carry a lattice-rasterization
    wobble of roughly constant amplitude per ring, so the quotient noise
    falls off linearly with the span while the curvature bias it introduces
    stays modest and cancels in the midpoint.  The span is capped at a
    quarter of the cells available on the tighter side and used symmetrically
    so the chords never average over a volume scale comparable to the mask
    itself (which would mix in curvature drift, or leave the basin the mask
    sits in), and so the midpoint reduces to a pure centered difference in
    which the center's own heuristic slack cancels exactly.
    """
    grid = g.grid
    h_d = grid.cell_volume
    face = float(grid.spacing) ** (grid.dim - 1)
    led = energy_ledger(Mask(grid, cells), stencil, cost, outside)
    ring = max(1, int(round(led.perimeter / face)))

    def chord(k_other: int) -> float:
        other = _count_candidate(
            g, k_other, [cells], stencil, cost, outside, allowed,
            allowed_flat, max_swaps, include_ball=False,
        )
        led_other = energy_ledger(Mask(grid, other), stencil, cost, outside)
        return (led_other.energy - led.energy) / ((k_other - k) * h_d)

    m = min(4 * ring, max(1, k // 4), max(1, (n_allowed - k) // 4))
    m_left = min(m, k)
    m_right = min(m, n_allowed - k)
    left = chord(k - m_left) if m_left > 0 else None
    right = chord(k + m_right) if m_right > 0 else None
    return left, right, (k - m_left) * h_d, (k + m_right) * h_d


def _bracket_fields(
    left: float | None, right: float | None
) -> tuple[float, float, float]:
    """Order a quotient pair into (multiplier, lambda_lo, lambda_hi)."""
    if left is None and right is None:
        return 0.0, 0.0, 0.0
    if left is None:
        left = right
    elif right is None:
        right = left
    assert left is not None and right is not None
    lo, hi = (left, right) if left <= right else (right, left)
    return 0.5 * (left + right), lo, hi


# ---------------------------------------------------------------------------
# The volume-constrained solver.


def _exact_small_solve(
    g: ScalarField,
    k_target: int,
    v: float,
    stencil: PerimeterStencil,
    outside: str,
) -> SolveResult:
    """Exhaustive per-volume solve on grids small enough to enumerate."""
    table = brute_force_isovol(g, stencil, outside=outside)
    n = g.grid.cell_count
    h_d = g.grid.cell_volume
    mask = table.masks[k_target]
    slopes = []
    if k_target >= 1:
        slopes.append((table.energies[k_target] - table.energies[k_target - 1]) / h_d)
    if k_target < n:
        slopes.append((table.energies[k_target + 1] - table.energies[k_target]) / h_d)
    lam_lo, lam_hi = min(slopes), max(slopes)

    vols = table.cell_volumes
    cand = set()
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            cand.add((table.energies[j] - table.energies[i]) / (vols[j] - vols[i]))
    cand.add(0.0)
    envelope = max(
        float(np.min(table.energies - lam * vols) + lam * v) for lam in cand
    )
    return _ledger_result(
        mask,
        g,
        stencil,
        outside,
        "exact_volume",
        multiplier=0.5 * (lam_lo + lam_hi),
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        vol_lo=max(k_target - 1, 0) * h_d,
        vol_hi=min(k_target + 1, n) * h_d,
        envelope_energy=envelope,
        target_volume=v,
    )


def minimize_volume_constrained(
    g: ScalarField,
    v: float,
    stencil: PerimeterStencil,
    *,
    mode: str = "adjusted",
    tol_lambda: float | None = None,
    allowed: Mask | None = None,
    outside: str = "free",
    max_swaps: int = 2000,
    backend: str | None = None,
) -> SolveResult:
    """Minimize P(E) - int_E g subject to |E| = v (to the nearest cell).

    ``allowed`` restricts E to a sub-region of the grid.  ``mode='adjusted'``
    returns a mask with exactly the rounded target count; ``mode='bracketed'``
    returns the nearest parametric minimizer without editing it.

    Bracket semantics differ by mode.  In ``bracketed`` mode (lambda_lo,
    lambda_hi) is the global bisection interval, whose width is below
    ``tol_lambda`` but whose value is a convex-hull chord slope, so it can sit
    far from the local derivative wherever the discrete curve is concave.  In
    ``adjusted`` and exact-volume results the interval is instead the pair of
    one-sided ring quotients at the returned mask (energy per volume of
    shrinking and of growing by one boundary ring), which tracks the local
    slope and separates across kinks; ``multiplier`` is its midpoint, a
    centered difference estimate of f'(v), and (vol_lo, vol_hi) is the volume
    span the quotients were measured over.
    """
    if mode not in ("adjusted", "bracketed"):
        raise ValueError(f"unknown mode {mode!r}")
    grid = g.grid
    if allowed is not None and allowed.grid is not grid and allowed.grid != grid:
        raise ValueError("restriction mask lives on a different grid")
    h_d = grid.cell_volume
    n_allowed = grid.cell_count if allowed is None else allowed.count
    vol_allowed = n_allowed * h_d
    if not -1e-12 <= v <= vol_allowed * (1.0 + 1e-12) + 1e-12:
        raise ValueError(f"target volume {v!r} outside [0, {vol_allowed!r}]")
    if tol_lambda is None:
        tol_lambda = default_tol_lambda(g)

    k_target = int(round(v / h_d))
    k_target = max(0, min(n_allowed, k_target))

    if k_target == 0:
        return _ledger_result(
            empty_mask(grid),
            g,
            stencil,
            outside,
            "exact_volume",
            vol_lo=0.0,
            vol_hi=0.0,
            envelope_energy=0.0,
            target_volume=v,
        )
    if k_target == n_allowed:
        mask = full_mask(grid) if allowed is None else allowed
        return _ledger_result(
            mask,
            g,
            stencil,
            outside,
            "exact_volume",
            vol_lo=mask.count * h_d,
            vol_hi=mask.count * h_d,
            target_volume=v,
        )

    if grid.cell_count <= _ENUM_LIMIT and allowed is None:
        return _exact_small_solve(g, k_target, v, stencil, outside)

    sup = g.sup_norm
    probes: list[_Probe] = []

    def probe_at(lam: float) -> _Probe:
        p = _run_probe(g, lam, stencil, outside, allowed, backend)
        probes.append(p)
        return p

    def classify(p: _Probe) -> int:
        """-1 below the target count, +1 above, 0 when some minimizer hits it."""
        if p.count_max < k_target:
            return -1
        if p.count_min > k_target:
            return 1
        return 0

    hit: _Probe | None = None
    lo = probe_at(-(sup + 1.0))
    step = sup + 1.0
    for _ in range(_MAX_EXPAND):
        side = classify(lo)
        if side == 0:
            hit = lo
        if side <= 0:
            break
        step *= 2.0
        lo = probe_at(lo.lam - step)
    else:
        raise RuntimeError("could not drive the minimizer below the target volume")
    hi = probe_at(sup + 1.0)
    step = sup + 1.0
    for _ in range(_MAX_EXPAND):
        side = classify(hi)
        if side == 0 and hit is None:
            hit = hi
        if side >= 0:
            break
        step *= 2.0
        hi = probe_at(hi.lam + step)
    else:
        raise RuntimeError("could not drive the minimizer above the target volume")

    for _ in range(_MAX_BISECT):
        if hit is not None or hi.lam - lo.lam <= tol_lambda:
            break
        mid = probe_at(0.5 * (lo.lam + hi.lam))
        side = classify(mid)
        if side < 0:
            lo = mid
        elif side > 0:
            hi = mid
        else:
            hit = mid

    envelope = _envelope_value(probes, v)

    exact_mask: Mask | None = None
    if hit is not None:
        if hit.count_min == k_target:
            exact_mask = hit.sol.minimal
        elif hit.count_max == k_target:
            exact_mask = hit.sol.maximal
        under, over = hit.sol.minimal, hit.sol.maximal
        glob_lo = glob_hi = hit.lam
    else:
        under, over = lo.sol.maximal, hi.sol.minimal
        glob_lo, glob_hi = lo.lam, hi.lam

    if exact_mask is not None:
        cost0 = cell_cost(g.values, 0.0, grid)
        allowed_flat = (
            np.ones(grid.cell_count, dtype=bool)
            if allowed is None
            else allowed.cells.ravel()
        )
        left, right, vol_lo, vol_hi = _ring_bracket(
            g,
            exact_mask.cells,
            k_target,
            n_allowed,
            stencil,
            cost0,
            outside,
            allowed,
            allowed_flat,
            max_swaps,
        )
        mult, lam_lo, lam_hi = _bracket_fields(left, right)
        return _ledger_result(
            exact_mask,
            g,
            stencil,
            outside,
            "exact_volume",
            multiplier=mult,
            lambda_lo=lam_lo,
            lambda_hi=lam_hi,
            vol_lo=vol_lo,
            vol_hi=vol_hi,
            envelope_energy=envelope,
            target_volume=v,
        )

    if mode == "bracketed":
        pick = under if k_target - under.count <= over.count - k_target else over
        return _ledger_result(
            pick,
            g,
            stencil,
            outside,
            "bracketed",
            multiplier=0.5 * (glob_lo + glob_hi),
            lambda_lo=glob_lo,
            lambda_hi=glob_hi,
            vol_lo=under.count * h_d,
            vol_hi=over.count * h_d,
            envelope_energy=envelope,
            target_volume=v,
        )

    cost0 = cell_cost(g.values, 0.0, grid)
    allowed_flat = (
        np.ones(grid.cell_count, dtype=bool) if allowed is None else allowed.cells.ravel()
    )
    seeds = [under.cells, over.cells]
    best_cells = _count_candidate(
        g, k_target, seeds, stencil, cost0, outside, allowed, allowed_flat, max_swaps
    )

    left, right, vol_lo, vol_hi = _ring_bracket(
        g, best_cells, k_target, n_allowed, stencil, cost0, outside,
        allowed, allowed_flat, max_swaps,
    )
    mult, lam_lo, lam_hi = _bracket_fields(left, right)
    return _ledger_result(
        Mask(grid, best_cells),
        g,
        stencil,
        outside,
        "adjusted",
        multiplier=mult,
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        vol_lo=vol_lo,
        vol_hi=vol_hi,
        envelope_energy=envelope,
        target_volume=v,
    )


# ---------------------------------------------------------------------------
# Penalized form.


def minimize_penalized(
    g: ScalarField,
    mu: float,
    v: float,
    stencil: PerimeterStencil,
    *,
    outside: str = "free",
    allowed: Mask | None = None,
    tol_lambda: float | None = None,
    backend: str | None = None,
) -> SolveResult:
    """Minimize F_mu(E) = P(E) - int_E g + mu | |E| - v | by branch splitting.

    The branch |E| >= v absorbs the penalty into the forcing as g - mu and is
    pinned at the smallest admissible count; the branch |E| <= v uses g + mu
    at the largest admissible count.  The winner by exact F_mu is returned,
    so the reported volume always matches v to within one cell.  When mu is
    not above sup|g| the penalty is too weak to pin the volume in theory and
    a warning is issued.
    """
    if mu <= 0.0:
        raise ValueError("penalty weight must be positive")
    grid = g.grid
    sup = g.sup_norm
    if mu <= sup:
        warnings.warn(
            "penalty weight below sup|g|; the pinned-volume answer may not be "
            "the global penalized minimum",
            RuntimeWarning,
            stacklevel=2,
        )
    h_d = grid.cell_volume
    n_allowed = grid.cell_count if allowed is None else allowed.count
    ratio = v / h_d
    k_lo = int(math.floor(ratio + 1e-9))
    k_hi = int(math.ceil(ratio - 1e-9))
    k_lo = max(0, min(n_allowed, k_lo))
    k_hi = max(0, min(n_allowed, k_hi))

    plain_cost = cell_cost(g.values, 0.0, grid)
    branches: list[tuple[float, int, SolveResult, float]] = []
    seen: set[int] = set()
    for k, shift in ((k_hi, -mu), (k_lo, +mu)):
        if k in seen:
            continue
        seen.add(k)
        tilted = ScalarField(grid, g.values + shift)
        res = minimize_volume_constrained(
            tilted,
            k * h_d,
            stencil,
            mode="adjusted",
            tol_lambda=tol_lambda,
            allowed=allowed,
            outside=outside,
            backend=backend,
        )
        led = energy_ledger(res.mask, stencil, plain_cost, outside)
        f_mu = led.energy + mu * abs(k * h_d - v)
        branches.append((f_mu, k, res, shift))

    f_mu, k_win, res, shift = min(branches, key=lambda b: (b[0], b[1]))
    return _ledger_result(
        res.mask,
        g,
        stencil,
        outside,
        res.status,
        multiplier=None if res.multiplier is None else res.multiplier + shift,
        lambda_lo=None if res.lambda_lo is None else res.lambda_lo + shift,
        lambda_hi=None if res.lambda_hi is None else res.lambda_hi + shift,
        vol_lo=res.vol_lo,
        vol_hi=res.vol_hi,
        envelope_energy=(
            None
            if res.envelope_energy is None
            else res.envelope_energy + shift * k_win * h_d
        ),
        target_volume=v,
        penalty=mu,
        penalized_energy=f_mu,
    )


def check_volume_deficit_bound(
    result: SolveResult,
    g: ScalarField,
    mu: float | None = None,
    v: float | None = None,
) -> tuple[bool, float]:
    """Volume-deficit bound: | |E| - v | <= (F_mu(E) + v sup|g|) / (mu - sup|g|).

    Returns (holds, slack) with slack = bound - deficit; a tiny negative
    slack within roundoff still counts as holding.
    """
    mu = result.penalty if mu is None else mu
    v = result.target_volume if v is None else v
    if mu is None or v is None:
        raise ValueError("penalty weight and target volume are required")
    sup = g.sup_norm
    if mu <= sup:
        raise ValueError("the volume-deficit bound needs mu > sup|g|")
    deficit = abs(result.volume - v)
    f_mu = result.energy + mu * deficit
    bound = (f_mu + v * sup) / (mu - sup)
    slack = bound - deficit
    return slack >= -1e-9 * (1.0 + abs(bound)), slack


# ---------------------------------------------------------------------------
# Localization and cell problems.


@dataclass(frozen=True)
class StabilityRow:
    """Constrained solve inside one centered window."""

    radius: float
    volume: float
    energy: float
    diameter: float
    status: str
    multiplier: float | None
    mask: Mask


def stability_in_r(
    g: ScalarField,
    v: float,
    stencil: PerimeterStencil,
    radii: Sequence[float],
    *,
    outside: str = "free",
    backend: str | None = None,
) -> list[StabilityRow]:
    """Volume-constrained solves restricted to centered boxes of growing side.

    The energy is reported for the same functional on the full grid, so rows
    are directly comparable; a diameter that stops growing with the window
    indicates the minimizer no longer feels the restriction.
    """
    grid = g.grid
    center = grid.center_point()
    rows: list[StabilityRow] = []
    for radius in radii:
        if radius <= 0.0 or radius > min(grid.lengths) + 1e-12:
            raise ValueError(f"window side {radius!r} outside (0, min side length]")
        sel = np.ones(grid.sides, dtype=bool)
        for ax in range(grid.dim):
            ok = np.abs(grid.centers(ax) - center[ax]) <= radius / 2.0 + 1e-12
            shape = [1] * grid.dim
            shape[ax] = grid.sides[ax]
            sel &= ok.reshape(shape)
        window = Mask(grid, sel)
        if v > window.count * grid.cell_volume + 1e-12:
            raise ValueError(f"target volume {v!r} does not fit in window {radius!r}")
        res = minimize_volume_constrained(
            g, v, stencil, allowed=window, outside=outside, backend=backend
        )
        rows.append(
            StabilityRow(
                radius=float(radius),
                volume=res.volume,
                energy=res.energy,
                diameter=mask_diameter(res.mask),
                status=res.status,
                multiplier=res.multiplier,
                mask=res.mask,
            )
        )
    return rows


def minimize_dirichlet_box(
    g_cell: ScalarField,
    eps: float,
    copies: int,
    stencil: PerimeterStencil,
    *,
    backend: str | None = None,
) -> SolveResult:
    """Unconstrained solve on a box of tiled copies of the periodic cell.

    The box boundary is empty (cuts against the exterior are charged) and the
    forcing is lifted by ``eps`` to reward volume; a strictly negative
    ``tilted_energy`` certifies a nonempty minimizer exists for this box.
    """
    if eps <= 0.0:
        raise ValueError("the volume reward eps must be positive")
    if copies < 1:
        raise ValueError("need at least one copy of the cell")
    grid = g_cell.grid
    sides = tuple(n * copies for n in grid.sides)
    box = PeriodicGrid(sides, grid.spacing, False)
    values = np.tile(g_cell.values, (copies,) * grid.dim)
    field = ScalarField(box, values)
    cost = cell_cost(values, eps, box)
    sol = minimize_binary(box, stencil, cost, outside="empty", backend=backend)
    tilt = energy_ledger(sol.minimal, stencil, cost, "empty").energy
    return _ledger_result(
        sol.minimal,
        field,
        stencil,
        "empty",
        "unconstrained",
        multiplier=float(eps),
        tilted_energy=tilt,
    )


# ---------------------------------------------------------------------------
# Density diagnostics.


@dataclass(frozen=True)
class DensityRow:
    radius: float
    ball_volume: float
    min_inside_fraction: float
    min_outside_fraction: float
    within_radius_bound: bool


@dataclass(frozen=True)
class DensityReport:
    """Worst-case volume fractions of E and its complement in balls centered
    on boundary cells, against the radius scale r0 = 1 / (mu + sup|g|)."""

    r0: float
    rows: tuple[DensityRow, ...]

    @property
    def gamma_empirical(self) -> float:
        vals = [
            min(r.min_inside_fraction, r.min_outside_fraction)
            for r in self.rows
            if r.within_radius_bound
        ]
        return min(vals) if vals else float("nan")


def density_report(
    mask: Mask,
    g: ScalarField,
    mu: float,
    radii: Sequence[float] | None = None,
) -> DensityReport:
    """Measure interior and exterior volume fractions near the boundary.

    For each radius, balls are centered at every boundary cell of the mask
    (cells with an axis neighbor across the boundary, on either side) and the
    smallest fractions |E cap B|/|B| and |B minus E|/|B| are recorded.
    """
    grid = mask.grid
    if not all(grid.periodic):
        raise ValueError("density fractions are measured on periodic grids")
    sup = g.sup_norm
    r0 = 1.0 / (mu + sup) if mu + sup > 0 else float("inf")
    if radii is None:
        top = min(r0, min(grid.lengths) / 4.0)
        radii = [top * s for s in (0.25, 0.5, 0.75, 1.0)]
    cells = mask.cells
    if not cells.any() or cells.all():
        return DensityReport(r0=r0, rows=())

    axes = tuple(range(grid.dim))
    edge = np.zeros(grid.sides, dtype=bool)
    for ax in range(grid.dim):
        for s in (1, -1):
            rolled = np.roll(cells, s, axis=ax)
            edge |= cells != rolled
    ref = tuple(n // 2 for n in grid.sides)
    ref_center = tuple((i + 0.5) * grid.spacing for i in ref)
    chi = np.fft.rfftn(cells.astype(np.float64))
    rows: list[DensityRow] = []
    for r in radii:
        ball = ball_mask(grid, ref_center, float(r))
        if ball.count == 0:
            continue
        spec = np.conj(np.fft.rfftn(ball.cells.astype(np.float64)))
        corr = np.fft.irfftn(chi * spec, s=grid.sides)
        inside = np.roll(np.rint(corr), ref, axis=axes)
        frac_in = inside[edge].min() / ball.count
        frac_out = (ball.count - inside[edge].max()) / ball.count
        rows.append(
            DensityRow(
                radius=float(r),
                ball_volume=ball.count * grid.cell_volume,
                min_inside_fraction=float(frac_in),
                min_outside_fraction=float(frac_out),
                within_radius_bound=bool(r <= r0 + 1e-12),
            )
        )
    return DensityReport(r0=r0, rows=tuple(rows))
