"""Exception hierarchy for cocycle analysis and path synthesis.

All errors raised by this package derive from :class:`CocycleError` so callers
can catch everything with one clause.  Analysis errors signal violated
preconditions on the input data; synthesis errors signal that a perturbation
construction could not be completed honestly within its budget.
"""

__all__ = [
    "CocycleError",
    "ShapeMismatch",
    "GapViolation",
    "NotContracting",
    "NotExpanding",
    "NotSaddle",
    "NotInvariant",
    "NotTransverse",
    "DefectiveSpectrum",
    "ModuliCollision",
    "BothBranchesDominated",
    "BudgetExhausted",
    "InfeasibleUnderBudget",
    "EndpointMismatch",
    "PersistenceFailure",
    "StageError",
]


class CocycleError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(CocycleError):
    """Two objects that must share (dimension, period) do not."""


class GapViolation(CocycleError):
    """A required spectral gap between consecutive moduli is absent.

    Carries the offending pair of moduli in ``args`` when available.
    """


class NotContracting(CocycleError):
    """A modulus that must lie strictly below 1 does not."""


class NotExpanding(CocycleError):
    """A modulus that must lie strictly above 1 does not."""


class NotSaddle(CocycleError):
    """The cocycle has an eigenvalue modulus within tolerance of 1,
    or its spectrum lies entirely on one side of the unit circle."""


class NotInvariant(CocycleError):
    """A subbundle claimed invariant fails the invariance residual check."""


class NotTransverse(CocycleError):
    """Two subbundles that must span the fiber fail to do so."""


class DefectiveSpectrum(CocycleError):
    """A nontrivial Jordan block prevents an eigendirection construction."""


class ModuliCollision(CocycleError):
    """Two eigenvalue moduli coincide within tolerance where distinctness
    is required."""


class BothBranchesDominated(CocycleError):
    """Neither the restriction nor the quotient splitting fails domination
    within the tested range, so no weaker branch can be selected."""


class BudgetExhausted(CocycleError):
    """An angle search ran out of iterations or rotation allowance.

    Carries (period, budget) context in the message.
    """


class InfeasibleUnderBudget(CocycleError):
    """The rotation budget implied by the measured domination strength
    exceeds the configured allowance."""


class EndpointMismatch(CocycleError):
    """Two paths cannot be concatenated because the endpoints differ by
    more than the tolerance."""


class PersistenceFailure(CocycleError):
    """Membership in the requested spectral class fails at some path time.

    Attributes
    ----------
    t : float
        First grid time at which membership fails.
    """

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"membership fails at path time t={t!r}")


class StageError(CocycleError):
    """A pipeline stage failed; wraps the causing error with the stage name.

    Attributes
    ----------
    stage : str
        Name of the failed stage.
    cause : CocycleError
        The underlying error.
    """

    def __init__(self, stage, cause):
        self.stage = str(stage)
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")
