"""Low-Lipschitz surjections from random lattice subsets onto regular grids.

The package follows one storyline: sample an n^d-point subset of a slightly
larger box, transport its empirical measure to the uniform one through exact
dyadic splitting, match the points to grid sites inside small neighborhoods,
and certify the Lipschitz constant of the resulting bijection exactly.  A
stats layer supplies the entropy and hypergeometric tail machinery that
controls how often cell counts stray, and the experiments layer turns both
halves into reproducible desk-scale studies.

Arithmetic that feeds a comparison is exact rational end to end; floats
appear only in closed-form bounds and reporting.
"""

from __future__ import annotations

from .constants import FittedConstants, load_constants
from .errors import (
    CapacityError,
    GridlipError,
    InternalInvariantError,
    RegimeError,
    SizeCapError,
    ValidationError,
    ZeroCellError,
)
from .experiments import (
    ExperimentPlan,
    StudyResult,
    TrialRecord,
    deviation_study,
    scaling_study,
    sharper_cn,
    theorem_main_cn,
)
from .lattice import (
    CellCounts,
    Configuration,
    DyadicPartition,
    GridSpec,
    assign_cell,
    cell_counts,
    sample_configuration,
    well_distributed_check,
)
from .matching import (
    BijectionCertificate,
    HallViolation,
    LipschitzResult,
    MatchingInstance,
    build_instance,
    lipschitz_of_map,
    rescale_bijection,
    solve_matching,
    verify_certificate,
)
from .rng import CounterRng, derive_seed
from .solver import (
    BoundsReport,
    PipelineResult,
    bounds_report,
    brute_force_min_lipschitz,
    feasible_level,
    level_for,
    packing_lower_bound,
    pipeline_upper_bound,
)
from .stats import (
    DeviationParams,
    TailBoundParams,
    bonnet_tail_bounds,
    concave_interp_bound,
    deviation_bound,
    deviation_union_bound,
    entropy,
    entropy_derivative,
    gamma_exponent,
    hypergeom_pmf,
    hypergeom_tail,
    stirling_sandwich,
    validate_regime,
)
from .transport import (
    Box,
    CellDensity,
    TransportPlan,
    build_dyadic_transport,
    density_from_counts,
    evaluate,
    transport_metrics,
    verify_mass_preservation,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "GridlipError",
    "ValidationError",
    "CapacityError",
    "ZeroCellError",
    "SizeCapError",
    "RegimeError",
    "InternalInvariantError",
    # lattice
    "GridSpec",
    "Configuration",
    "DyadicPartition",
    "CellCounts",
    "sample_configuration",
    "assign_cell",
    "cell_counts",
    "well_distributed_check",
    # rng
    "CounterRng",
    "derive_seed",
    # transport
    "Box",
    "CellDensity",
    "TransportPlan",
    "density_from_counts",
    "build_dyadic_transport",
    "evaluate",
    "transport_metrics",
    "verify_mass_preservation",
    # matching
    "MatchingInstance",
    "BijectionCertificate",
    "HallViolation",
    "LipschitzResult",
    "build_instance",
    "solve_matching",
    "lipschitz_of_map",
    "rescale_bijection",
    "verify_certificate",
    # solver
    "PipelineResult",
    "BoundsReport",
    "pipeline_upper_bound",
    "brute_force_min_lipschitz",
    "packing_lower_bound",
    "bounds_report",
    "level_for",
    "feasible_level",
    # stats
    "TailBoundParams",
    "DeviationParams",
    "entropy",
    "entropy_derivative",
    "stirling_sandwich",
    "hypergeom_pmf",
    "hypergeom_tail",
    "gamma_exponent",
    "bonnet_tail_bounds",
    "concave_interp_bound",
    "deviation_bound",
    "deviation_union_bound",
    "validate_regime",
    # experiments
    "ExperimentPlan",
    "TrialRecord",
    "StudyResult",
    "theorem_main_cn",
    "sharper_cn",
    "deviation_study",
    "scaling_study",
    # constants
    "FittedConstants",
    "load_constants",
]
