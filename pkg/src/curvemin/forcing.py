"""Periodic forcing fields and the smallness conditions that tame them.

A forcing field g prescribes the curvature data of the minimization problem
P(E) - integral_E g.  This module builds the concrete fields used by the
experiments (trigonometric polynomials, pairs of truncated parabolic bumps,
rasters from disk), solves the periodic problem div sigma = g spectrally to
produce the bounded potential whose sup norm certifies coercivity, and
measures the largest Lambda for which integral_E g <= (1 - Lambda) P(E, Q)
holds on the periodicity cell.

The spectral solve uses the exact symbol of the backward-difference
divergence, so the discrete identity div sigma = g holds to FFT roundoff and
the flux form of integral_E g telescopes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import numpy.typing as npt

from .graphcut import minimize_binary
from .grid import PeriodicGrid, ScalarField, Mask, _periodic_distance_sq
from .stencil import PerimeterStencil, energy_ledger

_FloatArr = npt.NDArray[np.float64]


@dataclass(frozen=True)
class TrigMode:
    """One real Fourier mode ``amplitude * sin(2 pi k.x / L + phase)``."""

    k: tuple[int, ...]
    amplitude: float
    phase: float = 0.0


@dataclass(frozen=True)
class TrigPoly:
    """A finite sum of sine modes; with no modes it is the zero field."""

    modes: tuple[TrigMode, ...] = ()
    zero_mean: bool = True


@dataclass(frozen=True)
class BumpPair:
    """Two truncated radial parabolas ``H (1 - |x-c|^2/r^2)_+`` on the torus.

    The first bump is meant to be tall and thin, the second short and wide;
    with ``zero_mean`` the constant that restores a zero average is
    subtracted, leaving a flat negative background between the bumps.
    """

    center_a: tuple[float, ...]
    height_a: float
    radius_a: float
    center_b: tuple[float, ...]
    height_b: float
    radius_b: float
    zero_mean: bool = True


@dataclass(frozen=True)
class RasterField:
    """A forcing field stored on disk in the package's field format."""

    path: str
    zero_mean: bool = False


ForcingSpec = TrigPoly | BumpPair | RasterField


def build_field(spec: ForcingSpec, grid: PeriodicGrid) -> ScalarField:
    """Sample a forcing spec at the cell centers of ``grid``.

    Trig modes are validated against the grid Nyquist limit so that spectral
    identities downstream see exactly the modes written here.  When the spec
    asks for a zero mean, the sampled mean is subtracted outright.
    """
    if isinstance(spec, TrigPoly):
        values = np.zeros(grid.sides)
        axes = [grid.centers(j) / grid.lengths[j] for j in range(grid.dim)]
        for mode in spec.modes:
            if len(mode.k) != grid.dim:
                raise ValueError("mode wave vector dimension does not match the grid")
            for kj, nj in zip(mode.k, grid.sides):
                if 2 * abs(int(kj)) >= nj and kj != 0:
                    raise ValueError(
                        f"mode {mode.k} is at or beyond the Nyquist limit of {grid.sides}"
                    )
            arg = np.full(grid.sides, float(mode.phase))
            for j, kj in enumerate(mode.k):
                if kj:
                    shape = [1] * grid.dim
                    shape[j] = grid.sides[j]
                    arg = arg + (2.0 * np.pi * kj) * axes[j].reshape(shape)
            values = values + mode.amplitude * np.sin(arg)
        zero_mean = spec.zero_mean
    elif isinstance(spec, BumpPair):
        da = _periodic_distance_sq(grid, spec.center_a)
        db = _periodic_distance_sq(grid, spec.center_b)
        for radius in (spec.radius_a, spec.radius_b):
            if radius <= 0:
                raise ValueError("bump radii must be positive")
        values = spec.height_a * np.clip(1.0 - da / spec.radius_a**2, 0.0, None)
        values += spec.height_b * np.clip(1.0 - db / spec.radius_b**2, 0.0, None)
        zero_mean = spec.zero_mean
    elif isinstance(spec, RasterField):
        from .io import read_field

        loaded = read_field(spec.path)
        if loaded.shape != grid.sides:
            raise ValueError(
                f"raster shape {loaded.shape} does not match grid sides {grid.sides}"
            )
        values = loaded
        zero_mean = spec.zero_mean
    else:
        raise TypeError(f"unknown forcing spec {type(spec).__name__}")

    if zero_mean:
        values = values - values.mean()
    return ScalarField(grid, values)


@dataclass(frozen=True)
class VectorFieldSigma:
    """A periodic cell-sampled vector field, one component array per axis."""

    grid: PeriodicGrid
    components: tuple[_FloatArr, ...]

    @cached_property
    def sup_norm(self) -> float:
        """Largest Euclidean norm over cells."""
        sq = np.zeros(self.grid.sides)
        for comp in self.components:
            sq += comp * comp
        return float(np.sqrt(sq.max()))


def solve_div_sigma(g: ScalarField) -> VectorFieldSigma:
    """Periodic potential with backward-difference divergence equal to ``g``.

    Solves the discrete Poisson problem spectrally with the exact symbol of
    the forward-difference gradient / backward-difference divergence pair, so
    ``divergence(sigma)`` reproduces ``g`` to FFT roundoff.  Requires a fully
    periodic grid and a mean-free source.
    """
    grid = g.grid
    if not all(grid.periodic):
        raise ValueError("the potential problem needs a fully periodic grid")
    sup = g.sup_norm
    if abs(g.mean) > 1e-12 * max(sup, 1.0):
        raise ValueError("incompatible source: forcing must have zero mean")

    h = grid.spacing
    ghat = np.fft.fftn(g.values)
    ghat[(0,) * grid.dim] = 0.0

    thetas = [2.0 * np.pi * np.fft.fftfreq(n) for n in grid.sides]
    lap = np.zeros(grid.sides)
    for j, theta in enumerate(thetas):
        shape = [1] * grid.dim
        shape[j] = grid.sides[j]
        lap = lap - ((2.0 - 2.0 * np.cos(theta)) / h**2).reshape(shape)
    lap[(0,) * grid.dim] = 1.0
    uhat = ghat / lap

    components = []
    for j, theta in enumerate(thetas):
        shape = [1] * grid.dim
        shape[j] = grid.sides[j]
        symbol = ((np.exp(1j * theta) - 1.0) / h).reshape(shape)
        components.append(np.real(np.fft.ifftn(symbol * uhat)))
    return VectorFieldSigma(grid, tuple(components))


def divergence(sigma: VectorFieldSigma) -> _FloatArr:
    """Backward-difference divergence, the scheme matched to the solver."""
    h = sigma.grid.spacing
    out = np.zeros(sigma.grid.sides)
    for j, comp in enumerate(sigma.components):
        out += (comp - np.roll(comp, 1, axis=j)) / h
    return out


def divergence_residual(sigma: VectorFieldSigma, g: ScalarField) -> float:
    """Sup norm of ``div sigma - g``."""
    return float(np.abs(divergence(sigma) - g.values).max())


def mask_flux(sigma: VectorFieldSigma, mask: Mask) -> float:
    """Signed flux of sigma through the axis faces of ``E``.

    By exact telescoping this equals ``sum_{x in E} div sigma(x) h^d``, hence
    ``integral_E g`` when sigma solves the potential problem; it is at most
    the sup norm of sigma times the axis-face area of the boundary.
    """
    h = mask.grid.spacing
    chi = mask.cells.astype(np.float64)
    total = 0.0
    for j, comp in enumerate(sigma.components):
        jump = chi - np.roll(chi, -1, axis=j)
        total += float((comp * jump).sum())
    return total * h ** (mask.grid.dim - 1)


def check_condg(g: ScalarField, stencil: PerimeterStencil) -> float:
    """Largest Lambda with ``integral_E g <= (1 - Lambda) P(E, Q)`` for all E.

    Works on the periodicity cell with free boundary (relative perimeter).
    The condition is monotone in Lambda, so a bisection suffices; each probe
    is one exact submodular minimization.  Returns a value certified to hold,
    with resolution 1e-3; returns 0.0 when even Lambda = 0 fails and 1.0 when
    the positive part of g vanishes (then the integral can never be positive).
    """
    if stencil.dim != g.grid.dim:
        raise ValueError("stencil dimension does not match the grid")
    if float(g.values.max()) <= 0.0:
        return 1.0

    cell = PeriodicGrid(g.grid.sides, g.grid.spacing, periodic=False)
    base_cost = g.values * cell.cell_volume
    floor = -1e-12 * (1.0 + g.sup_norm)

    def holds(lam: float) -> bool:
        scale = 1.0 - lam
        sol = minimize_binary(cell, stencil, base_cost / scale, outside="free")
        led = energy_ledger(
            Mask(cell, sol.minimal.cells), stencil, base_cost, outside="free"
        )
        return scale * led.perimeter - led.gain >= floor

    if not holds(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            lo = mid
        else:
            hi = mid
    return lo


def sufficient_condg_via_sigma(g: ScalarField) -> tuple[bool, float]:
    """Sufficient smallness certificate from the potential's sup norm.

    Returns (holds, margin) with margin = 1 - sup |sigma|.  A positive margin
    pins the energy between (1 - sup|sigma|) P and 2 P, and in particular
    certifies the cell condition at level Lambda >= margin.
    """
    sigma = solve_div_sigma(g)
    margin = 1.0 - sigma.sup_norm
    return margin > 0.0, margin
