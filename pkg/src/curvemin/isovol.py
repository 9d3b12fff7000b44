"""The isovolumetric function f(v) = min over |E| = v of P(E) - int_E g.

The volume-constrained solver reports f as an interval: a certified
convex-envelope lower bound and the ledger energy of the best exact-count
mask.  This module assembles those into curves, estimates one-sided
derivatives from the recorded multiplier brackets (the bracket is the
primitive object; secants of the sampled curve are kept as diagnostics),
hunts for minimizers with small multipliers among the parametric family, and
runs the structural checks a valid f must satisfy: subadditivity up to a
translation slack, the two-sided power-law scaling, and the nondifferentiable
two-forcing-bump construction where the derivative jumps.
"""

from __future__ import annotations

import concurrent.futures
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.integrate import quad

from .forcing import BumpPair, build_field
from .grid import Mask, ScalarField, connected_components
from .solver import SolveResult, default_tol_lambda, minimize_volume_constrained, minimize_unconstrained
from .stencil import PerimeterStencil


@dataclass(frozen=True)
class IsovolSample:
    """One volume sample: the f interval and the multiplier bracket.

    ``lambda_plus`` is the lower bracket endpoint (right-derivative proxy)
    and ``lambda_minus`` the upper one (left-derivative proxy), so
    lambda_plus <= lambda_minus always holds.
    """

    v: float
    f_lower: float
    f_upper: float
    lambda_minus: float
    lambda_plus: float
    status: str


@dataclass(frozen=True)
class IsovolCurve:
    samples: tuple[IsovolSample, ...]
    masks: tuple[Mask, ...]
    grid_id: str
    stencil_name: str
    forcing_id: str
    spacing: float
    dim: int

    def __post_init__(self):
        vs = [s.v for s in self.samples]
        if any(b <= a for a, b in zip(vs, vs[1:])):
            raise ValueError("sample volumes must be strictly increasing")
        for s in self.samples:
            scale = 1.0 + abs(s.f_upper)
            if s.f_lower > s.f_upper + 1e-9 * scale:
                raise ValueError(f"lower bound exceeds upper bound at v={s.v!r}")
            if s.lambda_plus > s.lambda_minus + 1e-12:
                raise ValueError(f"bracket endpoints out of order at v={s.v!r}")

    @property
    def volumes(self) -> np.ndarray:
        return np.array([s.v for s in self.samples])

    @property
    def f_upper(self) -> np.ndarray:
        return np.array([s.f_upper for s in self.samples])

    @property
    def f_lower(self) -> np.ndarray:
        return np.array([s.f_lower for s in self.samples])

    def rows(self) -> list[tuple[float, float, float, float, float, str]]:
        """Rows in export order (v, f_lower, f_upper, lambda_minus,
        lambda_plus, status)."""
        return [
            (s.v, s.f_lower, s.f_upper, s.lambda_minus, s.lambda_plus, s.status)
            for s in self.samples
        ]


def _sample_from_result(res: SolveResult) -> IsovolSample:
    lam_lo = res.lambda_lo if res.lambda_lo is not None else res.multiplier
    lam_hi = res.lambda_hi if res.lambda_hi is not None else res.multiplier
    if lam_lo is None or lam_hi is None:
        lam_lo = lam_hi = float("nan")
    f_low = res.envelope_energy if res.envelope_energy is not None else -np.inf
    return IsovolSample(
        v=res.volume,
        f_lower=min(f_low, res.energy),
        f_upper=res.energy,
        lambda_minus=lam_hi,
        lambda_plus=lam_lo,
        status=res.status,
    )


def _solve_one(args) -> SolveResult:
    g, v, stencil, kwargs = args
    return minimize_volume_constrained(g, v, stencil, **kwargs)


def isovolumetric_curve(
    g: ScalarField,
    v_list: Sequence[float],
    stencil: PerimeterStencil,
    *,
    forcing_id: str = "",
    jobs: int = 1,
    **solver_kwargs,
) -> IsovolCurve:
    """Sample f on the given volumes (one constrained solve per entry).

    Samples are independent; ``jobs`` > 1 distributes them over processes.
    The sample volume recorded is the solved mask's volume (the target
    rounded to a whole number of cells), so entries that would collide after
    rounding must be deduplicated by the caller.
    """
    vols = [float(v) for v in v_list]
    if any(b <= a for a, b in zip(vols, vols[1:])):
        raise ValueError("volumes must be strictly increasing")
    total = g.grid.total_volume
    for v in vols:
        if not 0.0 < v < total:
            raise ValueError(f"volume {v!r} outside (0, {total!r})")
    tasks = [(g, v, stencil, solver_kwargs) for v in vols]
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_one, tasks))
    else:
        results = [_solve_one(t) for t in tasks]
    return IsovolCurve(
        samples=tuple(_sample_from_result(r) for r in results),
        masks=tuple(r.mask for r in results),
        grid_id=g.grid.provenance(),
        stencil_name=stencil.name,
        forcing_id=forcing_id,
        spacing=g.grid.spacing,
        dim=g.grid.dim,
    )


class OneSidedDerivatives(NamedTuple):
    """Bracket-informed one-sided derivative estimates at one sample.

    ``left`` >= ``right`` marks a concave kink.  The secant fields are
    finite differences to the neighboring samples, kept as diagnostics.
    """

    left: float
    right: float
    secant_left: float
    secant_right: float


def one_sided_derivatives(curve: IsovolCurve, v: float) -> OneSidedDerivatives:
    """Left and right derivative estimates of f at a sampled volume.

    The primary estimates come from the multiplier bracket recorded at the
    sample nearest to v (lambda_minus for the left derivative, lambda_plus
    for the right); the secants to adjacent samples are returned alongside.
    """
    vols = curve.volumes
    if not vols.size:
        raise ValueError("empty curve")
    if not vols[0] <= v <= vols[-1]:
        raise ValueError(f"volume {v!r} outside the sampled range")
    i = int(np.argmin(np.abs(vols - v)))
    s = curve.samples[i]
    ups = curve.f_upper
    secant_left = (
        (ups[i] - ups[i - 1]) / (vols[i] - vols[i - 1]) if i > 0 else float("nan")
    )
    secant_right = (
        (ups[i + 1] - ups[i]) / (vols[i + 1] - vols[i])
        if i + 1 < len(vols)
        else float("nan")
    )
    return OneSidedDerivatives(
        left=s.lambda_minus,
        right=s.lambda_plus,
        secant_left=secant_left,
        secant_right=secant_right,
    )


# ---------------------------------------------------------------------------
# Small multipliers: approximate prescribed-curvature solutions.


@dataclass(frozen=True)
class SmallMultiplier:
    """A minimizer whose multiplier lies in [0, eps]: a discrete approximate
    solution of kappa = g + multiplier."""

    volume: float
    multiplier: float
    result: SolveResult
    admissible: bool
    source: str


def find_small_multiplier(
    g: ScalarField,
    v_range: tuple[float, float],
    eps: float,
    stencil: PerimeterStencil,
    *,
    lam_grid: Sequence[float] | None = None,
    outside: str = "free",
    backend: str | None = None,
) -> SmallMultiplier:
    """Search the parametric family for a minimizer with multiplier in [0, eps]
    and volume in ``v_range``; prefers the largest such volume.

    The multiplier grid is scanned with exact unconstrained solves, reading
    volumes off as outputs.  When every parametric volume jumps across the
    requested range (the family skips volumes where f is strictly concave),
    the volume-constrained solve at the top of the range is used instead and
    admitted if its bracket multiplier lies in [0, eps].  With eps = inf the
    grid point nearest zero is returned unconditionally.
    """
    v_lo, v_hi = float(v_range[0]), float(v_range[1])
    if not 0.0 <= v_lo < v_hi:
        raise ValueError("need 0 <= v_lo < v_hi")
    if abs(g.mean) > 1e-9 * max(g.sup_norm, 1.0):
        warnings.warn(
            "forcing is not zero-mean; small multipliers are not guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
    if lam_grid is None:
        if math.isinf(eps):
            lam_grid = [0.0]
        else:
            lam_grid = np.linspace(0.0, eps, 25)
    lams = sorted(float(a) for a in lam_grid)
    if math.isinf(eps):
        lam0 = min(lams, key=abs)
        res = minimize_unconstrained(g, lam0, stencil, outside=outside, backend=backend)
        return SmallMultiplier(res.volume, lam0, res, True, "parametric")

    best: SmallMultiplier | None = None
    nearest: SmallMultiplier | None = None
    for lam in lams:
        if not 0.0 <= lam <= eps:
            continue
        res = minimize_unconstrained(g, lam, stencil, outside=outside, backend=backend)
        cand = SmallMultiplier(res.volume, lam, res, True, "parametric")
        if v_lo <= res.volume <= v_hi:
            if best is None or cand.volume > best.volume or (
                cand.volume == best.volume and cand.multiplier < best.multiplier
            ):
                best = cand
        gap = max(v_lo - res.volume, res.volume - v_hi)
        if nearest is None or gap < max(
            v_lo - nearest.volume, nearest.volume - v_hi
        ):
            nearest = cand
    if best is not None:
        return best

    constrained = minimize_volume_constrained(
        g, v_hi, stencil, outside=outside, backend=backend
    )
    lam_c = constrained.multiplier
    if lam_c is not None and -default_tol_lambda(g) <= lam_c <= eps:
        return SmallMultiplier(
            constrained.volume, max(lam_c, 0.0), constrained, True, "constrained"
        )
    near_txt = "" if nearest is None else (
        f" (nearest parametric volume {nearest.volume!r} at multiplier"
        f" {nearest.multiplier!r})"
    )
    raise ValueError("no admissible multiplier found" + near_txt)


# ---------------------------------------------------------------------------
# Structural checks on sampled curves.


@dataclass(frozen=True)
class SubadditivityReport:
    pairs_checked: int
    violations: tuple[tuple[float, float, float], ...]
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.violations


def check_subadditivity(curve: IsovolCurve) -> SubadditivityReport:
    """f(v + v') <= f(v) + f(v') + tol for all sampled pairs whose sum is
    sampled.

    The slack covers placing the two minimizers disjointly on the torus: a
    translation may overlap boundaries by one cell layer, worth at most
    2 h times the total stencil weight.
    """
    vols = curve.volumes
    ups = curve.f_upper
    tol = 2.0 * curve.spacing * _total_weight_from_name(curve.stencil_name)
    violations = []
    checked = 0
    for i in range(len(vols)):
        for j in range(i, len(vols)):
            target = vols[i] + vols[j]
            k = np.flatnonzero(np.abs(vols - target) <= 1e-9 * max(target, 1.0))
            if not k.size:
                continue
            checked += 1
            lhs = ups[k[0]]
            rhs = ups[i] + ups[j] + tol
            if lhs > rhs:
                violations.append((float(vols[i]), float(vols[j]), float(lhs - rhs)))
    return SubadditivityReport(checked, tuple(violations), tol)


class ScalingFit(NamedTuple):
    c_fit: float
    C_fit: float
    slope: float


def check_scaling(curve: IsovolCurve, *, min_samples: int = 8, min_decades: float = 1.5) -> ScalingFit:
    """Two-sided power law: c v^((d-1)/d) <= f(v) <= C v^((d-1)/d).

    Fits the log-log slope by least squares and returns the enclosing
    constants for the expected exponent.
    """
    vols = curve.volumes
    ups = curve.f_upper
    if len(vols) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(vols)}")
    decades = math.log10(vols[-1] / vols[0])
    if decades < min_decades:
        raise ValueError(
            f"samples span {decades:.2f} decades, need at least {min_decades}"
        )
    if np.any(ups <= 0.0):
        raise ValueError("scaling fit needs strictly positive f values")
    expo = (curve.dim - 1) / curve.dim
    slope, _ = np.polyfit(np.log(vols), np.log(ups), 1)
    ratios = ups / vols**expo
    return ScalingFit(float(ratios.min()), float(ratios.max()), float(slope))


def _total_weight_from_name(name: str) -> float:
    from .stencil import make_stencil

    return make_stencil(name).total_weight


# ---------------------------------------------------------------------------
# The nondifferentiability example: two forcing bumps.


def _mask_center(mask: Mask) -> tuple[float, ...]:
    """Center of mass with periodic wrap (circular mean per axis)."""
    grid = mask.grid
    if mask.count == 0:
        return grid.center_point()
    idx = np.argwhere(mask.cells)
    out = []
    for ax in range(grid.dim):
        coords = (idx[:, ax] + 0.5) * grid.spacing
        length = grid.lengths[ax]
        if grid.periodic[ax]:
            theta = 2.0 * math.pi * coords / length
            angle = math.atan2(np.sin(theta).mean(), np.cos(theta).mean())
            out.append((angle / (2.0 * math.pi) * length) % length)
        else:
            out.append(float(coords.mean()))
    return tuple(out)


def _periodic_dist(grid, p: Sequence[float], q: Sequence[float]) -> float:
    total = 0.0
    for ax in range(grid.dim):
        d = abs(p[ax] - q[ax])
        if grid.periodic[ax]:
            d = min(d, grid.lengths[ax] - d)
        total += d * d
    return math.sqrt(total)


@dataclass(frozen=True)
class TwoBumpSample:
    v: float
    f_upper: float
    lambda_minus: float
    lambda_plus: float
    label: str


@dataclass(frozen=True)
class TwoBumpResult:
    """Outcome of the derivative-jump experiment.

    ``v_star`` is the transition volume where the minimizer's center of mass
    jumps from the first bump to the second; ``lambda_jump`` the multiplier
    drop across it (positive at a concave kink).  When no transition occurs
    in range, ``v_star`` is None and ``winner`` names the bump that holds the
    minimizer throughout.
    """

    v_star: float | None
    lambda_jump: float | None
    lambda_gap_lower: float | None
    f_step: float | None
    mask_before: Mask | None
    mask_after: Mask | None
    samples: tuple[TwoBumpSample, ...]
    winner: str


def run_two_bump_example(
    spec: BumpPair,
    v_list: Sequence[float],
    stencil: PerimeterStencil,
    *,
    grid=None,
    refine_steps: int = 24,
    backend: str | None = None,
) -> TwoBumpResult:
    """Locate the volume where the minimizer relocates between forcing bumps.

    Solves the constrained problem along ``v_list``, labels each minimizer by
    the nearer bump center, and bisects the first label change down to
    adjacent cell counts.  The multiplier brackets on both sides quantify the
    derivative jump; f itself must stay continuous across the transition.
    """
    from .grid import unit_torus

    if grid is None:
        grid = unit_torus(256)
    g = build_field(spec, grid)
    h_d = grid.cell_volume

    def solve(v: float) -> SolveResult:
        return minimize_volume_constrained(g, v, stencil, backend=backend)

    def label(mask: Mask) -> str:
        c = _mask_center(mask)
        da = _periodic_dist(grid, c, spec.center_a)
        db = _periodic_dist(grid, c, spec.center_b)
        return "a" if da <= db else "b"

    samples: list[TwoBumpSample] = []
    labeled: list[tuple[float, str, SolveResult]] = []
    for v in sorted(float(x) for x in v_list):
        res = solve(v)
        lab = label(res.mask)
        labeled.append((res.volume, lab, res))
        samples.append(
            TwoBumpSample(
                res.volume, res.energy, res.lambda_hi, res.lambda_lo, lab
            )
        )

    flip = None
    for (v0, l0, r0), (v1, l1, r1) in zip(labeled, labeled[1:]):
        if l0 == "a" and l1 == "b":
            flip = ((v0, r0), (v1, r1))
            break
    if flip is None:
        return TwoBumpResult(
            v_star=None,
            lambda_jump=None,
            lambda_gap_lower=None,
            f_step=None,
            mask_before=None,
            mask_after=None,
            samples=tuple(samples),
            winner=labeled[0][1] if labeled else "none",
        )

    (v_a, res_a), (v_b, res_b) = flip
    for _ in range(refine_steps):
        k_a, k_b = round(v_a / h_d), round(v_b / h_d)
        if k_b - k_a <= 1:
            break
        v_mid = ((k_a + k_b) // 2) * h_d
        res_mid = solve(v_mid)
        if label(res_mid.mask) == "a":
            v_a, res_a = res_mid.volume, res_mid
        else:
            v_b, res_b = res_mid.volume, res_mid

    v_star = 0.5 * (v_a + v_b)
    lam_jump = res_a.multiplier - res_b.multiplier
    gap_lower = res_a.lambda_lo - res_b.lambda_hi
    f_step = abs(res_b.energy - res_a.energy)
    lam_scale = max(abs(res_a.multiplier), abs(res_b.multiplier), 1.0)
    cont_tol = lam_scale * (v_b - v_a) + 2.0 * grid.spacing * stencil.total_weight
    if f_step > cont_tol:
        raise RuntimeError(
            f"f jumps by {f_step!r} across the transition (tolerance {cont_tol!r})"
        )
    return TwoBumpResult(
        v_star=v_star,
        lambda_jump=lam_jump,
        lambda_gap_lower=gap_lower,
        f_step=f_step,
        mask_before=res_a.mask,
        mask_after=res_b.mask,
        samples=tuple(samples),
        winner="b",
    )


# ---------------------------------------------------------------------------
# Component counts and the classical curvature inequality.


@dataclass(frozen=True)
class ComponentReport:
    n_components: int
    n_delta: int
    tail_volume: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.tail_volume <= self.bound + 1e-12


def component_statistics(
    result: SolveResult, delta: float, c_fit: float, C_fit: float
) -> ComponentReport:
    """Tail-volume bound: components beyond the first N_delta - 1 hold at most
    delta * v of the volume, with N_delta = floor(1 + (C/c)^d / delta^d).
    """
    if not 0.0 < delta:
        raise ValueError("delta must be positive")
    if not 0.0 < c_fit <= C_fit:
        raise ValueError("need 0 < c_fit <= C_fit")
    comps = connected_components(result.mask)
    dim = result.mask.grid.dim
    n_delta = int(1.0 + (C_fit / c_fit) ** dim / delta**dim)
    h_d = result.mask.grid.cell_volume
    tail = sum(c.count * h_d for c in comps[n_delta - 1 :])
    return ComponentReport(
        n_components=len(comps),
        n_delta=n_delta,
        tail_volume=float(tail),
        bound=float(delta * result.volume),
    )


def ellipse_perimeter_curvature_bound(a: float, b: float) -> tuple[float, float, bool]:
    """(d-1) P(E) >= |E| min kappa for the ellipse x^2/a^2 + y^2/b^2 <= 1.

    The perimeter comes from adaptive quadrature of the arclength integrand;
    the area and the minimal boundary curvature b/a^2 (attained at the ends
    of the major axis) are closed-form.
    """
    if not (a >= b > 0.0):
        raise ValueError("need a >= b > 0")
    per, err = quad(
        lambda t: math.sqrt((a * math.sin(t)) ** 2 + (b * math.cos(t)) ** 2),
        0.0,
        2.0 * math.pi,
        epsabs=1e-12,
        epsrel=1e-12,
        limit=200,
    )
    area = math.pi * a * b
    kappa_min = b / (a * a)
    lhs = per
    rhs = area * kappa_min
    return lhs, rhs, lhs >= rhs - 1e-9 * (1.0 + abs(rhs)) - err
