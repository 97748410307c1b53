"""Linear cocycles over periodic orbits: spectra, domination, and
certified perturbation paths.

The core objects are ``PeriodicCocycle`` (a cyclic tuple of invertible
matrices), ``Subbundle`` (a fiberwise frame field), and ``CocyclePath``
(a piecewise family of cocycles with closed-form segment laws).  The
synthesis routines produce paths that realify complex eigenvalues, push
moduli past a threshold, and shrink the stable/unstable angle, each with
a grid certificate of spectral persistence.
"""

from .config import RunConfig, DEFAULT, config_hash, default_tolerance
from .errors import (
    BothBranchesDominated,
    BudgetExhausted,
    CocycleError,
    DefectiveSpectrum,
    EndpointMismatch,
    GapViolation,
    InfeasibleUnderBudget,
    ModuliCollision,
    NotContracting,
    NotExpanding,
    NotInvariant,
    NotSaddle,
    NotTransverse,
    PersistenceFailure,
    ShapeMismatch,
    StageError,
)
from .cocycle import (
    BoundCert,
    EigenData,
    PeriodicCocycle,
    bound,
    dist,
    eigen,
    first_return,
    scaled_return,
)
from .subbundle import (
    SigmaMembership,
    Subbundle,
    complement_frames,
    flag_member,
    invariance_residual,
    invariant_line_frames,
    middle_member,
    min_angle,
    quotient,
    restrict,
    sigma_membership,
    stable_unstable_splitting,
    strong_stable_direction,
    strong_unstable_direction,
    subspace_distance,
)
from .domination import (
    BranchVerdict,
    DominationReport,
    bdp_branch,
    domination_strength,
    is_N_dominated,
)
from .paths import (
    CocyclePath,
    EntrywiseLinear,
    PathCert,
    RotationRamp,
    ScaleRamp,
    certify,
    concat,
    law_from_json,
    reverse,
)
from .perturbations import (
    AngleShrinkTrace,
    PipelineResult,
    RealifyPlan,
    RealifyRound,
    TraceNode,
    pipeline,
    push_moduli,
    realify,
    realify_2d,
    separate_moduli,
    shrink_angle,
    shrink_angle_2d,
)
from .survey import generate_cocycle, run_sample, run_survey
from ._kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "AngleShrinkTrace", "BothBranchesDominated", "BoundCert",
    "BranchVerdict", "BudgetExhausted", "CocycleError", "CocyclePath",
    "DEFAULT", "DefectiveSpectrum", "DominationReport", "EigenData",
    "EndpointMismatch", "EntrywiseLinear", "GapViolation",
    "InfeasibleUnderBudget", "ModuliCollision", "NotContracting",
    "NotExpanding", "NotInvariant", "NotSaddle", "NotTransverse",
    "PathCert", "PeriodicCocycle", "PersistenceFailure", "PipelineResult",
    "RealifyPlan", "RealifyRound", "RotationRamp", "RunConfig",
    "ScaleRamp", "ShapeMismatch", "SigmaMembership", "StageError",
    "Subbundle", "TraceNode", "backend_name", "bdp_branch", "bound",
    "certify", "complement_frames", "concat", "config_hash",
    "default_tolerance", "dist", "domination_strength", "eigen",
    "first_return", "flag_member", "generate_cocycle",
    "invariance_residual", "invariant_line_frames", "is_N_dominated",
    "law_from_json", "middle_member", "min_angle", "pipeline",
    "push_moduli", "quotient", "realify", "realify_2d", "restrict",
    "reverse", "run_sample", "run_survey", "scaled_return",
    "separate_moduli", "shrink_angle", "shrink_angle_2d",
    "sigma_membership", "stable_unstable_splitting",
    "strong_stable_direction", "strong_unstable_direction",
    "subspace_distance",
]
