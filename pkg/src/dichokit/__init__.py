"""dichokit: decide, certify, and exploit exponential dichotomy.

A desk-scale numerical toolkit for linear nonautonomous systems x' = A(t) x
in finite dimension: it computes dichotomy projections and constants from
transition data, solves u' - A(t) u = f through the Green kernel, and checks
how the dichotomy survives bounded perturbations of the coefficient.
"""

from .errors import (
    BoundViolated,
    ConfigError,
    DichokitError,
    DimensionError,
    GridTooCoarse,
    InvalidGrid,
    InvalidProjection,
    NoDecay,
    NonMonotoneTime,
    NotAdmissible,
    NotBounded,
    NotDichotomic,
    NumericalOverflow,
    OffGrid,
    OutOfDomain,
    ParseError,
    SingularTransition,
    StepUnstable,
    TailDominates,
    TheoremViolationSuspected,
    UnknownSystem,
)
from .systems import (
    LinearSystem,
    PerturbationSpec,
    TimeGrid,
    builtin,
    catalog_names,
    constant_system,
    load_sampled,
    make_grid,
    make_perturbation,
)
from .propagator import (
    DEFAULT_SEED,
    GrowthEstimate,
    TransitionCache,
    estimate_growth,
    propagate,
    transition,
)
from .dichotomy import (
    AnalysisResult,
    DecayCheckResult,
    DecayConstants,
    DichotomyReport,
    ProjectorFamily,
    VerifyResult,
    analyze_system,
    decay_check,
    decay_constants,
    fit_constants,
    projector_family,
    spectral_projector,
    verify_dichotomy,
    window_projector,
)
from .green import (
    ForcingFunction,
    GreenSolution,
    InverseBoundReport,
    SplitResult,
    apply_ode_operator,
    check_inverse_bound,
    constructive_split,
    forcing_from_samples,
    green_kernel,
    green_solve,
    make_forcing,
)
from .roughness import (
    RoughnessReport,
    SweepRow,
    certified_perturbed_constants,
    neumann_bound,
    perturb_and_verify,
    random_perturbation,
    sweep,
    threshold,
)

__version__ = "0.1.0"

__all__ = [
    "AnalysisResult",
    "BoundViolated",
    "ConfigError",
    "DecayCheckResult",
    "DecayConstants",
    "DEFAULT_SEED",
    "DichokitError",
    "DichotomyReport",
    "DimensionError",
    "ForcingFunction",
    "GreenSolution",
    "GridTooCoarse",
    "GrowthEstimate",
    "InvalidGrid",
    "InvalidProjection",
    "InverseBoundReport",
    "LinearSystem",
    "NoDecay",
    "NonMonotoneTime",
    "NotAdmissible",
    "NotBounded",
    "NotDichotomic",
    "NumericalOverflow",
    "OffGrid",
    "OutOfDomain",
    "ParseError",
    "PerturbationSpec",
    "ProjectorFamily",
    "RoughnessReport",
    "SingularTransition",
    "SplitResult",
    "StepUnstable",
    "SweepRow",
    "TailDominates",
    "TheoremViolationSuspected",
    "TimeGrid",
    "TransitionCache",
    "UnknownSystem",
    "VerifyResult",
    "analyze_system",
    "apply_ode_operator",
    "builtin",
    "catalog_names",
    "certified_perturbed_constants",
    "check_inverse_bound",
    "constant_system",
    "constructive_split",
    "decay_check",
    "decay_constants",
    "estimate_growth",
    "fit_constants",
    "forcing_from_samples",
    "green_kernel",
    "green_solve",
    "load_sampled",
    "make_forcing",
    "make_grid",
    "make_perturbation",
    "neumann_bound",
    "perturb_and_verify",
    "projector_family",
    "propagate",
    "random_perturbation",
    "spectral_projector",
    "sweep",
    "threshold",
    "transition",
    "verify_dichotomy",
    "window_projector",
]
