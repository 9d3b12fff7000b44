"""Effective surface tension, Wulff polygons, and the large-volume limit.

In a periodic medium the volume term reshapes interfaces direction by
direction: the minimal energy per unit area of a plane-like interface with
rational normal q/|q| stabilizes as the slab around the plane grows, and the
stabilized value phi(nu) is the effective surface tension of the medium.
Scaled to unit size, minimizers of the constrained problem at growing volume
approach the Wulff shape of phi, the intersection of the half-planes
{x . nu <= phi(nu)}.

The slab problem is solved in sheared lattice coordinates: for a primitive
integer normal q there is a unimodular basis (u, t) with q . u = 1 and
t = (-q2, q1) tangent to the interface, so cells relabel as z = a u + b t
with a = z . q the height and b the lateral coordinate.  The relabeled
problem lives on an ordinary box grid, periodic laterally with the forcing
period and padded top and bottom with frozen half-space data; the perimeter
stencil transports to the new coordinates offset by offset with its weights
unchanged, so slab energies agree exactly with the original lattice.  The
volume term is renormalized against the frozen half-space (the bulk
contribution of a zero-mean forcing cancels over whole periods), which makes
the energy per lateral period finite and for g = 0 reduces phi to the
stencil's directional density.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy.spatial import HalfspaceIntersection

from .forcing import check_condg, solve_div_sigma
from .graphcut import clear_structure_cache, minimize_restricted
from .grid import (
    Mask,
    PeriodicGrid,
    ScalarField,
    best_translation_overlap,
    rescale_mask,
)
from .solver import minimize_volume_constrained
from .stencil import PerimeterStencil, cell_cost, energy_ledger

_SLAB_CELL_BUDGET = 2_000_000
_BOX_CELL_BUDGET = 600_000


# ---------------------------------------------------------------------------
# Sheared slab coordinates.


def _reduced_direction(q: Sequence[int]) -> tuple[int, int]:
    """Validate an integer direction and reduce it to a primitive vector."""
    if len(q) != 2:
        raise ValueError("slab cell problems support d = 2 only")
    try:
        q1, q2 = (int(c) for c in q)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"direction {q!r} is not an integer lattice vector") from exc
    if (q1, q2) != tuple(float(c) for c in q):
        raise ValueError(f"direction {q!r} is not an integer lattice vector")
    if q1 == 0 and q2 == 0:
        raise ValueError("direction must be nonzero")
    d = math.gcd(abs(q1), abs(q2))
    return q1 // d, q2 // d


def _shear_basis(q: tuple[int, int]) -> tuple[tuple[int, int], tuple[int, int]]:
    """Unimodular basis (u, t) with q . u = 1 and t = (-q2, q1).

    u is reduced modulo t so the transported stencil offsets stay short.
    """
    q1, q2 = q
    # Extended Euclid on (q1, q2): find u with q1 u1 + q2 u2 = 1.
    old_r, r = q1, q2
    old_s, s = 1, 0
    old_t, t_ = 0, 1
    while r != 0:
        quo = old_r // r
        old_r, r = r, old_r - quo * r
        old_s, s = s, old_s - quo * s
        old_t, t_ = t_, old_t - quo * t_
    if old_r < 0:
        old_s, old_t = -old_s, -old_t
    u = (old_s, old_t)
    t = (-q2, q1)
    norm_sq = q1 * q1 + q2 * q2
    k = round((u[0] * t[0] + u[1] * t[1]) / norm_sq)
    u = (u[0] - k * t[0], u[1] - k * t[1])
    assert q1 * u[0] + q2 * u[1] == 1
    return u, t


def _shear_stencil(stencil: PerimeterStencil, q: tuple[int, int], u: tuple[int, int]) -> PerimeterStencil:
    """Transport stencil offsets to (height, lateral) slab coordinates.

    A lattice offset e moves the height coordinate by e . q and the lateral
    one by e . p, where p = (-u2, u1) is dual to the tangent; weights carry
    over unchanged, so cut counts and energies match the original lattice.
    """
    p = (-u[1], u[0])
    moved = tuple(
        (o[0] * q[0] + o[1] * q[1], o[0] * p[0] + o[1] * p[1]) for o in stencil.offsets
    )
    return PerimeterStencil(
        name=f"{stencil.name}/q{q[0]},{q[1]}",
        dim=2,
        offsets=moved,
        weights=stencil.weights,
    )


def slab_surface_tension(
    g: ScalarField,
    q: Sequence[int],
    width: int,
    stencil: PerimeterStencil,
    *,
    lambda_star: float | None = None,
    backend: str | None = None,
) -> float:
    """Interface energy per unit length of one finite slab with normal q/|q|.

    The free zone extends ``width`` forcing cells on either side of the
    plane {x . q = 0}; beyond it the configuration is frozen to the
    half-space, with pads thick enough that no free cell sees past them and
    that plane-like pinning applies (four cells per unit of the cell
    condition margin).  The reported value is the renormalized minimal
    energy divided by the lateral period length; it decreases to the
    effective surface tension as ``width`` grows.
    """
    grid = g.grid
    if grid.dim != 2:
        raise ValueError("slab cell problems support d = 2 only")
    if not all(grid.periodic):
        raise ValueError("the slab construction needs a fully periodic cell")
    if grid.sides[0] != grid.sides[1]:
        raise ValueError("the shear relabeling needs equal periods per axis")
    if width < 1:
        raise ValueError("slab width must be at least one cell")
    qr = _reduced_direction(q)
    if lambda_star is None:
        lambda_star = check_condg(g, stencil)
    if not lambda_star > 0.0:
        raise ValueError(
            "the forcing violates the cell condition; slabs cannot be pinned"
        )

    n = grid.sides[0]
    h = grid.spacing
    u, t = _shear_basis(qr)
    st2 = _shear_stencil(stencil, qr, u)
    q_norm = math.hypot(*qr)

    reach_a = max(abs(o[0]) for o in st2.full_offsets)
    if max(abs(o[1]) for o in st2.full_offsets) >= n:
        raise ValueError("stencil reaches around the lateral period")
    a_free = math.ceil(width * q_norm)
    pad = math.ceil(4.0 * q_norm / lambda_star) + reach_a
    a_hi = a_free + pad
    # The inside half spans whole forcing periods, so its volume term is
    # exactly zero for zero-mean forcing and the renormalization is unbiased.
    a_lo = math.ceil((a_free + pad + 1) / n) * n - 1
    n_a = a_lo + a_hi + 1
    if n_a * n > _SLAB_CELL_BUDGET:
        raise ValueError(
            f"slab of {n_a}x{n} cells exceeds the memory budget"
        )

    slab = PeriodicGrid((n_a, n), h, (False, True))
    a = np.arange(-a_lo, a_hi + 1).reshape(-1, 1)
    b = np.arange(n).reshape(1, -1)
    z1 = (a * u[0] + b * t[0]) % n
    z2 = (a * u[1] + b * t[1]) % n
    values = g.values[z1, z2]

    fill = np.broadcast_to(a <= 0, slab.sides).copy()
    free = np.broadcast_to(np.abs(a) <= a_free, slab.sides).copy()
    cost = cell_cost(values, 0.0, slab)
    sol = minimize_restricted(
        slab, st2, cost, free, fill, outside="free", backend=backend
    )
    led_e = energy_ledger(sol.minimal, st2, cost, "free")
    led_h = energy_ledger(Mask(slab, fill), st2, cost, "free")
    lateral = n * h * q_norm
    return (led_e.energy - led_h.energy + led_h.perimeter) / lateral


def cell_surface_tension(
    g: ScalarField,
    q: Sequence[int],
    widths: Sequence[int],
    stencil: PerimeterStencil,
    *,
    lambda_star: float | None = None,
    backend: str | None = None,
) -> tuple[float, float]:
    """Effective surface tension in direction q/|q| with a width extrapolation.

    Solves one slab per entry of ``widths`` (ascending) and accelerates the
    tail with Aitken's delta-squared formula on the last three values, which
    is exact for geometrically decaying boundary layers; the residual is the
    last raw increment.  Returns (phi, residual).
    """
    ws = [int(w) for w in widths]
    if not ws or any(b <= a for a, b in zip(ws, ws[1:])):
        raise ValueError("slab widths must be strictly increasing")
    if lambda_star is None:
        lambda_star = check_condg(g, stencil)
    vals = [
        slab_surface_tension(
            g, q, w, stencil, lambda_star=lambda_star, backend=backend
        )
        for w in ws
    ]
    if len(vals) == 1:
        return vals[0], 0.0
    residual = abs(vals[-1] - vals[-2])
    if len(vals) == 2:
        return vals[-1], residual
    f1, f2, f3 = vals[-3], vals[-2], vals[-1]
    denom = (f3 - f2) - (f2 - f1)
    if abs(denom) <= 1e-14 * (1.0 + abs(f3)):
        return f3, residual
    extr = f3 - (f3 - f2) ** 2 / denom
    # Acceleration can only interpolate a monotone tail; reject wild output.
    lo, hi = min(f1, f2, f3), max(f1, f2, f3)
    span = hi - lo
    if not lo - span <= extr <= hi + span:
        return f3, residual
    return extr, residual


# ---------------------------------------------------------------------------
# Direction sampling.


@dataclass(frozen=True)
class DirectionSample:
    """Surface tension measured along one rational direction."""

    q: tuple[int, int]
    nu: tuple[float, float]
    phi: float
    widths: tuple[int, ...]
    residual: float


@dataclass(frozen=True)
class Anisotropy:
    """Sampled effective surface tension, one entry per direction up to sign.

    phi is even (phi(nu) = phi(-nu)): each sample stands for both signs,
    which is exact for zero-mean forcing by the symmetry of the slab
    problem.  Every value must be strictly positive, and when the potential
    bound ``sigma_sup`` is known and below one the energy sandwich confines
    phi to [1 - sigma_sup, 2].
    """

    samples: tuple[DirectionSample, ...]
    sigma_sup: float | None = None

    def __post_init__(self):
        if not self.samples:
            raise ValueError("anisotropy needs at least one sample")
        for s in self.samples:
            if not s.phi > 0.0:
                raise ValueError(f"surface tension must be positive, got {s.phi!r} at {s.q!r}")
        if self.sigma_sup is not None and self.sigma_sup < 1.0:
            lo = 1.0 - self.sigma_sup - 1e-9
            for s in self.samples:
                if not lo <= s.phi <= 2.0 + 1e-9:
                    raise ValueError(
                        f"phi({s.q!r}) = {s.phi!r} escapes the energy sandwich"
                        f" [{lo!r}, 2]"
                    )

    def signed_directions(self) -> list[tuple[tuple[float, float], float]]:
        """(unit normal, phi) for every sample and its negation."""
        out = []
        for s in self.samples:
            out.append((s.nu, s.phi))
            out.append(((-s.nu[0], -s.nu[1]), s.phi))
        return out


def default_directions(max_norm: int = 4) -> list[tuple[int, int]]:
    """Primitive integer directions with sup norm up to ``max_norm``, one per
    sign pair, ordered by angle."""
    if max_norm < 1:
        raise ValueError("max_norm must be at least 1")
    dirs = []
    for q1 in range(0, max_norm + 1):
        for q2 in range(-max_norm, max_norm + 1):
            if q1 == 0 and q2 <= 0:
                continue
            if q1 == 0 or q2 == 0:
                if abs(q1) + abs(q2) != 1:
                    continue
            if math.gcd(q1, abs(q2)) != 1:
                continue
            dirs.append((q1, q2))
    dirs.sort(key=lambda q: math.atan2(q[1], q[0]))
    return dirs


def _phi_worker(args) -> DirectionSample:
    g, q, widths, stencil, lambda_star, backend = args
    phi, residual = cell_surface_tension(
        g, q, widths, stencil, lambda_star=lambda_star, backend=backend
    )
    norm = math.hypot(*q)
    return DirectionSample(
        q=q,
        nu=(q[0] / norm, q[1] / norm),
        phi=phi,
        widths=tuple(widths),
        residual=residual,
    )


def sample_anisotropy(
    g: ScalarField,
    stencil: PerimeterStencil,
    *,
    directions: Sequence[Sequence[int]] | None = None,
    max_norm: int = 4,
    widths: Sequence[int] = (8, 16, 32),
    lambda_star: float | None = None,
    jobs: int = 1,
    backend: str | None = None,
) -> Anisotropy:
    """Measure the surface tension over a set of rational directions.

    Directions default to all primitive vectors with sup norm up to
    ``max_norm`` (one per sign pair); they are independent, so ``jobs`` > 1
    distributes them over processes.  The potential bound recorded as
    ``sigma_sup`` certifies the energy sandwich when it is below one.
    """
    if directions is None:
        qs = default_directions(max_norm)
    else:
        qs = [_reduced_direction(q) for q in directions]
        if len(set(qs)) != len(qs):
            raise ValueError("duplicate directions after reduction")
    if lambda_star is None:
        lambda_star = check_condg(g, stencil)
    sigma_sup: float | None = None
    if all(g.grid.periodic) and abs(g.mean) <= 1e-12 * max(g.sup_norm, 1.0):
        sigma_sup = solve_div_sigma(g).sup_norm
    tasks = [(g, q, tuple(int(w) for w in widths), stencil, lambda_star, backend) for q in qs]
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_phi_worker, tasks))
    else:
        samples = [_phi_worker(t) for t in tasks]
    return Anisotropy(samples=tuple(samples), sigma_sup=sigma_sup)


# ---------------------------------------------------------------------------
# The Wulff polygon.


@dataclass(frozen=True)
class WulffShape:
    """Wulff polygon of a sampled surface tension, plus one rasterization.

    ``vertices`` bound the unit body {x : x . nu <= phi(nu) for all sampled
    nu}, counterclockwise; ``area`` is its exact polygon area and ``f0`` the
    exact anisotropic perimeter (edge lengths weighted by phi at the edge
    normals).  ``mask`` rasterizes the body scaled by ``scale`` to enclose
    ``target_volume``.
    """

    vertices: npt.NDArray[np.float64]
    area: float
    f0: float
    scale: float
    target_volume: float
    mask: Mask = field(repr=False)


def _polygon_vertices(
    signed: list[tuple[tuple[float, float], float]]
) -> npt.NDArray[np.float64]:
    halfspaces = np.array([[nu[0], nu[1], -phi] for nu, phi in signed])
    hs = HalfspaceIntersection(halfspaces, np.zeros(2))
    pts = hs.intersections
    order = np.argsort(np.arctan2(pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = [0]
    scale = float(np.abs(pts).max())
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 1e-12 * max(scale, 1.0):
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(pts[keep[-1]] - pts[keep[0]]) <= 1e-12 * max(scale, 1.0):
        keep.pop()
    return pts[keep]


def wulff_shape(
    anisotropy: Anisotropy,
    v: float,
    *,
    grid: PeriodicGrid | None = None,
    resolution: int = 384,
) -> WulffShape:
    """Build the Wulff polygon of the sampled tension and rasterize it at
    volume ``v``.

    The polygon is the exact intersection of the sampled half-planes (both
    signs of every direction); its area and anisotropic perimeter come from
    the vertex list, not the raster.  The raster grid defaults to a periodic
    square comfortably containing the scaled body at the requested
    ``resolution``.
    """
    if v <= 0.0:
        raise ValueError("target volume must be positive")
    if len(anisotropy.samples) < 4:
        raise ValueError(
            "insufficient directions: need at least 8 half-planes (4 up to sign)"
        )
    for s in anisotropy.samples:
        if not s.phi > 0.0:
            raise ValueError(f"surface tension must be positive, got {s.phi!r}")
    signed = anisotropy.signed_directions()
    verts = _polygon_vertices(signed)
    if len(verts) < 3:
        raise ValueError("sampled half-planes do not bound a polygon")

    # Exact convexity check on the ordered vertices.
    rolled = np.roll(verts, -1, axis=0)
    rolled2 = np.roll(verts, -2, axis=0)
    cross = (rolled[:, 0] - verts[:, 0]) * (rolled2[:, 1] - rolled[:, 1]) - (
        rolled[:, 1] - verts[:, 1]
    ) * (rolled2[:, 0] - rolled[:, 0])
    if np.any(cross < -1e-9 * max(float(np.abs(verts).max()) ** 2, 1.0)):
        raise RuntimeError("Wulff polygon failed the convexity check")

    area = 0.5 * float(
        np.sum(verts[:, 0] * rolled[:, 1] - rolled[:, 0] * verts[:, 1])
    )
    # Each polygon edge lies on a supporting line of a sampled direction, so
    # the anisotropic perimeter is exact: edge length times phi at its normal.
    edges = rolled - verts
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    f0 = 0.0
    for k in range(len(verts)):
        mid = 0.5 * (verts[k] + rolled[k])
        best = None
        for nu, phi in signed:
            gap = abs(mid[0] * nu[0] + mid[1] * nu[1] - phi)
            if best is None or gap < best[0]:
                best = (gap, phi)
        assert best is not None and best[0] <= 1e-9 * max(best[1], 1.0), (
            "polygon edge off every supporting line"
        )
        f0 += lengths[k] * best[1]

    scale = math.sqrt(v / area)
    radius = float(np.hypot(verts[:, 0], verts[:, 1]).max())
    if grid is None:
        side = 2.6 * scale * radius
        grid = PeriodicGrid((resolution, resolution), side / resolution)
    center = grid.center_point()
    coords = np.meshgrid(*(grid.centers(ax) for ax in range(2)), indexing="ij")
    inside = np.ones(grid.sides, dtype=bool)
    for nu, phi in signed:
        proj = (coords[0] - center[0]) * nu[0] + (coords[1] - center[1]) * nu[1]
        inside &= proj <= scale * phi
    return WulffShape(
        vertices=verts,
        area=area,
        f0=f0,
        scale=scale,
        target_volume=float(v),
        mask=Mask(grid, inside),
    )


# ---------------------------------------------------------------------------
# Large-volume convergence toward the Wulff shape.


@dataclass(frozen=True)
class ConvergenceRow:
    """One volume of the rescaling experiment."""

    v: float
    box_side: float
    symdiff_normalized: float
    energy_rescaled: float
    f0: float
    tolerance: float


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[ConvergenceRow, ...]
    wulff: WulffShape

    @property
    def symdiffs(self) -> np.ndarray:
        return np.array([r.symdiff_normalized for r in self.rows])

    @property
    def strictly_decreasing(self) -> bool:
        s = self.symdiffs
        return bool(np.all(s[1:] < s[:-1]))


def _recenter(mask: Mask) -> Mask:
    """Roll a torus mask so its circular center of mass sits at the center."""
    cells = mask.cells
    if not cells.any():
        return mask
    shifts = []
    for ax, n in enumerate(mask.grid.sides):
        counts = cells.sum(axis=tuple(i for i in range(mask.grid.dim) if i != ax))
        theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        mean = np.angle(np.sum(counts * np.exp(1j * theta)))
        center = (mean / (2.0 * np.pi)) % 1.0 * n - 0.5
        shifts.append(int(round(n / 2 - center)) % n)
    return Mask(mask.grid, np.roll(cells, shifts, axis=tuple(range(mask.grid.dim))))


def asymptotic_convergence(
    g_cell: ScalarField,
    v_list: Sequence[float],
    stencil: PerimeterStencil,
    *,
    anisotropy: Anisotropy | None = None,
    max_norm: int = 4,
    widths: Sequence[int] = (8, 16, 32),
    margin: float = 1.8,
    resolution: int = 384,
    lambda_star: float | None = None,
    backend: str | None = None,
) -> ConvergenceTable:
    """Compare rescaled constrained minimizers against the Wulff shape.

    For each volume the periodicity cell is tiled into a torus whose side
    grows like ``margin`` times the expected diameter, the constrained
    problem is solved there, and the minimizer is rescaled to the Wulff
    body's volume, recentered, and matched against the rasterized polygon by
    an exhaustive translation search.  Each row records the normalized
    symmetric difference and the rescaled energy, which must agree with the
    polygon's exact anisotropic perimeter within the stencil tolerance plus
    a resolution term; a violation raises RuntimeError.
    """
    grid = g_cell.grid
    if grid.dim != 2:
        raise ValueError("the rescaling experiment supports d = 2 only")
    if not all(grid.periodic):
        raise ValueError("the periodicity cell must be fully periodic")
    vols = [float(v) for v in v_list]
    if not vols or any(b <= a for a, b in zip(vols, vols[1:])):
        raise ValueError("volumes must be strictly increasing")
    if vols[0] <= 0.0:
        raise ValueError("volumes must be positive")

    if anisotropy is None:
        anisotropy = sample_anisotropy(
            g_cell,
            stencil,
            max_norm=max_norm,
            widths=widths,
            lambda_star=lambda_star,
            backend=backend,
        )
    wulff = wulff_shape(anisotropy, 1.0)
    wulff = wulff_shape(anisotropy, wulff.area, resolution=resolution)
    verts = wulff.vertices
    peri_euclid = float(
        np.hypot(*(np.roll(verts, -1, axis=0) - verts).T).sum()
    )
    radius = float(np.hypot(verts[:, 0], verts[:, 1]).max())
    cell_len = grid.lengths[0]
    tau = stencil.tau_directional

    rows = []
    for v in vols:
        eps = math.sqrt(wulff.area / v)
        diameter = 2.0 * radius / eps
        copies = max(2, math.ceil(margin * diameter / cell_len))
        sides = tuple(n * copies for n in grid.sides)
        if sides[0] * sides[1] > _BOX_CELL_BUDGET:
            raise ValueError(
                f"torus of {sides[0]}x{sides[1]} cells exceeds the memory budget"
            )
        # Every volume solves on a different torus; drop the previous cached
        # graph structure so peak memory stays at one box at a time.
        clear_structure_cache()
        torus = PeriodicGrid(sides, grid.spacing)
        tiled = ScalarField(torus, np.tile(g_cell.values, (copies, copies)))
        res = minimize_volume_constrained(tiled, v, stencil, backend=backend)
        scaled = rescale_mask(_recenter(res.mask), eps, wulff.mask.grid)
        _, symdiff = best_translation_overlap(scaled, wulff.mask)
        energy_rescaled = eps * res.energy
        tol = (tau + 3.0 * eps * grid.spacing * peri_euclid / wulff.area) * wulff.f0
        if not wulff.f0 - tol <= energy_rescaled <= wulff.f0 + tol:
            raise RuntimeError(
                f"rescaled energy {energy_rescaled!r} at volume {v!r} leaves"
                f" [{wulff.f0 - tol!r}, {wulff.f0 + tol!r}]"
            )
        rows.append(
            ConvergenceRow(
                v=v,
                box_side=torus.lengths[0],
                symdiff_normalized=symdiff / wulff.area,
                energy_rescaled=energy_rescaled,
                f0=wulff.f0,
                tolerance=tol,
            )
        )
    return ConvergenceTable(rows=tuple(rows), wulff=wulff)
