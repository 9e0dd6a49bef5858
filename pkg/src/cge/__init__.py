"""Coarse-grained ellipticity toolkit.

Quantitative multiscale analysis of (possibly severely degenerate) symmetric
elliptic coefficient fields on triadic grids: cube-wise effective coefficient
pairs, scale-weighted ellipticity constants, integrability norms and
criteria, and a regularity experiment harness with reproducible reports.
"""

__version__ = "0.1.0"

from .coarse import (
    AuditReport,
    CoarseGrainPair,
    EllipticityReport,
    SweepResult,
    audit,
    coarse_grain_cube,
    ellipticity_constants,
    sweep,
)
from .fields import (
    CantorParams,
    CascadeParams,
    LayeredParams,
    cantor_density,
    cascade_density,
    gen_cantor_field,
    gen_cascade_field,
    gen_constant,
    gen_laminate,
    gen_layered_example,
    gen_random_spd,
    layered_profile,
)
from .grid import (
    CoefficientField,
    FieldFormatError,
    GridSpec,
    ScalarGridFunction,
    TriadicCube,
    cube_average,
    partition,
    read_field,
    snapped_cell_range,
    write_field,
)
from .harness import (
    ExperimentRecord,
    MaxPrincipleViolation,
    SharpnessReport,
    harnack_experiment,
    local_boundedness_experiment,
    log_caccioppoli_diagnostic,
    reverse_holder_diagnostic,
    sharpness_sweep,
    sobolev_poincare_diagnostic,
)
from .norms import (
    CriterionInput,
    CriterionReport,
    NormParams,
    besov_seminorm,
    dual_sum_norm,
    exponent_margin,
    fractional_seminorm,
    scale_discounted_averages,
    sobolev_criterion_report,
)
from .solver import (
    CubeFunction,
    SolveConfig,
    SolverError,
    SolveStats,
    energy,
    mean_flux,
    mean_gradient,
    solve_dirichlet,
)

__all__ = [
    "__version__",
    "AuditReport",
    "CantorParams",
    "CascadeParams",
    "CoarseGrainPair",
    "CoefficientField",
    "CriterionInput",
    "CriterionReport",
    "CubeFunction",
    "EllipticityReport",
    "ExperimentRecord",
    "FieldFormatError",
    "GridSpec",
    "LayeredParams",
    "MaxPrincipleViolation",
    "NormParams",
    "ScalarGridFunction",
    "SharpnessReport",
    "SolveConfig",
    "SolveStats",
    "SolverError",
    "SweepResult",
    "TriadicCube",
    "audit",
    "besov_seminorm",
    "cantor_density",
    "cascade_density",
    "coarse_grain_cube",
    "cube_average",
    "dual_sum_norm",
    "ellipticity_constants",
    "energy",
    "exponent_margin",
    "fractional_seminorm",
    "gen_cantor_field",
    "gen_cascade_field",
    "gen_constant",
    "gen_laminate",
    "gen_layered_example",
    "gen_random_spd",
    "harnack_experiment",
    "layered_profile",
    "local_boundedness_experiment",
    "log_caccioppoli_diagnostic",
    "mean_flux",
    "mean_gradient",
    "partition",
    "read_field",
    "reverse_holder_diagnostic",
    "scale_discounted_averages",
    "sharpness_sweep",
    "snapped_cell_range",
    "sobolev_criterion_report",
    "sobolev_poincare_diagnostic",
    "solve_dirichlet",
    "sweep",
    "write_field",
]
