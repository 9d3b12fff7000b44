"""Exact discrete solvers for volume-constrained prescribed-curvature problems.

The energy is P(E) - int_E g on a periodic grid: ``grid`` holds the domain
types, ``stencil`` the cut-weight perimeters, ``maxflow``/``graphcut`` the
exact submodular minimization, ``solver`` the unconstrained, penalized, and
volume-constrained front ends, ``forcing`` the admissible-forcing checks,
``isovol`` the isovolumetric function analysis, ``homogenize`` the effective
anisotropy and Wulff-shape asymptotics, ``oracle`` brute-force ground truth,
``io`` deterministic artifact formats, and ``cli`` the experiment runner.
"""

from .forcing import (
    BumpPair,
    RasterField,
    TrigMode,
    TrigPoly,
    VectorFieldSigma,
    build_field,
    check_condg,
    divergence,
    divergence_residual,
    mask_flux,
    solve_div_sigma,
    sufficient_condg_via_sigma,
)
from .graphcut import CutSolution, clear_structure_cache, minimize_binary, minimize_restricted
from .grid import (
    Mask,
    PeriodicGrid,
    ScalarField,
    ball_mask,
    best_translation_overlap,
    connected_components,
    empty_mask,
    full_mask,
    mask_diameter,
    mask_extents,
    rescale_mask,
    sym_diff_volume,
    translate,
    unit_torus,
    volume,
)
from .homogenize import (
    Anisotropy,
    ConvergenceRow,
    ConvergenceTable,
    DirectionSample,
    WulffShape,
    asymptotic_convergence,
    cell_surface_tension,
    default_directions,
    sample_anisotropy,
    slab_surface_tension,
    wulff_shape,
)
from .isovol import (
    IsovolCurve,
    IsovolSample,
    ScalingFit,
    SmallMultiplier,
    SubadditivityReport,
    TwoBumpResult,
    TwoBumpSample,
    check_scaling,
    check_subadditivity,
    component_statistics,
    ellipse_perimeter_curvature_bound,
    find_small_multiplier,
    isovolumetric_curve,
    one_sided_derivatives,
    run_two_bump_example,
)
from .maxflow import backend_name, build_structure, run_max_flow
from .oracle import (
    IsovolTable,
    OracleResult,
    brute_force_isovol,
    brute_force_min,
    brute_force_penalized,
)
from .solver import (
    DensityReport,
    SolveResult,
    StabilityRow,
    check_volume_deficit_bound,
    default_tol_lambda,
    density_report,
    minimize_dirichlet_box,
    minimize_penalized,
    minimize_unconstrained,
    minimize_volume_constrained,
    parametric_sweep,
    stability_in_r,
)
from .stencil import (
    EnergyLedger,
    PerimeterStencil,
    cell_cost,
    cut_counts,
    default_stencil,
    energy_ledger,
    make_stencil,
    perimeter,
)

__version__ = "0.1.0"

__all__ = [
    "Anisotropy",
    "BumpPair",
    "ConvergenceRow",
    "ConvergenceTable",
    "CutSolution",
    "DensityReport",
    "DirectionSample",
    "EnergyLedger",
    "IsovolCurve",
    "IsovolSample",
    "IsovolTable",
    "Mask",
    "OracleResult",
    "PeriodicGrid",
    "PerimeterStencil",
    "RasterField",
    "ScalarField",
    "ScalingFit",
    "SmallMultiplier",
    "SolveResult",
    "StabilityRow",
    "SubadditivityReport",
    "TrigMode",
    "TrigPoly",
    "TwoBumpResult",
    "TwoBumpSample",
    "VectorFieldSigma",
    "WulffShape",
    "asymptotic_convergence",
    "backend_name",
    "ball_mask",
    "best_translation_overlap",
    "brute_force_isovol",
    "brute_force_min",
    "brute_force_penalized",
    "build_field",
    "build_structure",
    "cell_cost",
    "cell_surface_tension",
    "check_condg",
    "check_scaling",
    "check_subadditivity",
    "check_volume_deficit_bound",
    "clear_structure_cache",
    "component_statistics",
    "connected_components",
    "cut_counts",
    "default_directions",
    "default_stencil",
    "default_tol_lambda",
    "density_report",
    "divergence",
    "divergence_residual",
    "ellipse_perimeter_curvature_bound",
    "empty_mask",
    "energy_ledger",
    "find_small_multiplier",
    "full_mask",
    "isovolumetric_curve",
    "make_stencil",
    "mask_diameter",
    "mask_extents",
    "mask_flux",
    "minimize_binary",
    "minimize_dirichlet_box",
    "minimize_penalized",
    "minimize_restricted",
    "minimize_unconstrained",
    "minimize_volume_constrained",
    "one_sided_derivatives",
    "parametric_sweep",
    "perimeter",
    "rescale_mask",
    "run_max_flow",
    "run_two_bump_example",
    "sample_anisotropy",
    "slab_surface_tension",
    "solve_div_sigma",
    "stability_in_r",
    "sufficient_condg_via_sigma",
    "sym_diff_volume",
    "translate",
    "unit_torus",
    "volume",
    "wulff_shape",
]
