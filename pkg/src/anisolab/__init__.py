"""Numerical laboratory for anisotropic p-Laplacian equations.

Solves Dirichlet problems for diagonal-structure degenerate elliptic
operators on rectangular grids, then exercises the quantitative
regularity toolkit against the computed minimizers: energy (Caccioppoli)
inequalities, geometric fast-convergence iteration, measure shrinking,
quantitative sup bounds, and empirical oscillation-decay measurements in
the intrinsic anisotropic geometry.
"""

from .bounds import (
    BoundsGeometry,
    BranchError,
    chebyshev_check,
    chebyshev_level,
    critical_threshold,
    dilated_instance,
    recursion_report,
    sup_bound_critical,
    sup_bound_subcritical,
)
from .degiorgi import (
    GAMMA_INFLATION,
    CaccioppoliConfig,
    IntrinsicGeometry,
    IterationSchedule,
    Normalization,
    RecursionParams,
    build_vs,
    caccioppoli_report,
    choose_q,
    degiorgi_lemma_check,
    fast_convergence_threshold,
    iterate_recursion,
    normalize_for_intrinsic,
    poincare_measure_check,
    shrink_chain,
    specialized_energy_report,
)
from .exponents import (
    ExponentVector,
    IntrinsicMetricContext,
    aggregates,
    boundedness_condition,
    p_distance,
    smallness_condition,
    sobolev_exponent,
)
from .holder import (
    DecayTrace,
    HolderFit,
    IntrinsicCylinder,
    boundary_p_distance,
    holder_fit,
    intrinsic_cylinder,
    modulus_check,
    oscillation_decay,
)
from .lattice import (
    Box,
    CutoffProfile,
    Grid,
    GridFunction,
    integrate,
    level_set_measure,
    oscillation,
    partial_difference,
    region_measure,
    troisi_check,
    truncate,
)
from .reports import InequalityReport, dump_json, grid_metadata
from .solver import (
    DirichletProblem,
    FluxField,
    SolveReport,
    boundary_expression,
    energy,
    energy_gradient,
    problem_from_dict,
    solve_dirichlet,
    structure_check,
    weak_residual,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoundsGeometry",
    "BranchError",
    "CaccioppoliConfig",
    "CutoffProfile",
    "DecayTrace",
    "DirichletProblem",
    "ExponentVector",
    "FluxField",
    "GAMMA_INFLATION",
    "Grid",
    "GridFunction",
    "HolderFit",
    "InequalityReport",
    "IntrinsicCylinder",
    "IntrinsicGeometry",
    "IntrinsicMetricContext",
    "IterationSchedule",
    "Normalization",
    "RecursionParams",
    "SolveReport",
    "aggregates",
    "boundary_expression",
    "boundary_p_distance",
    "boundedness_condition",
    "build_vs",
    "caccioppoli_report",
    "chebyshev_check",
    "chebyshev_level",
    "choose_q",
    "critical_threshold",
    "degiorgi_lemma_check",
    "dilated_instance",
    "dump_json",
    "energy",
    "energy_gradient",
    "fast_convergence_threshold",
    "grid_metadata",
    "holder_fit",
    "integrate",
    "intrinsic_cylinder",
    "iterate_recursion",
    "level_set_measure",
    "modulus_check",
    "normalize_for_intrinsic",
    "oscillation",
    "oscillation_decay",
    "p_distance",
    "partial_difference",
    "poincare_measure_check",
    "problem_from_dict",
    "recursion_report",
    "region_measure",
    "shrink_chain",
    "smallness_condition",
    "sobolev_exponent",
    "solve_dirichlet",
    "specialized_energy_report",
    "structure_check",
    "sup_bound_critical",
    "sup_bound_subcritical",
    "troisi_check",
    "truncate",
    "weak_residual",
]
