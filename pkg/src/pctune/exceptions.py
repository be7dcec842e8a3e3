"""Exception hierarchy for pctune."""


class PctuneError(Exception):
    """Base class for all pctune errors."""


class InvalidInputError(PctuneError, ValueError):
    """Malformed value passed to a public operation (bad graph, bad range, ...)."""


class InvalidScenarioError(InvalidInputError):
    """Simulation scenario parameters are out of range (e.g. n > p - 1)."""


class InvalidConfigError(InvalidInputError):
    """Experiment configuration is inconsistent or incomplete."""


class IllConditionedDataError(PctuneError):
    """A correlation submatrix is singular or numerically unusable.

    Callers that run conditional-independence tests treat this as a
    "dependent" decision (the edge is retained).
    """


class InsufficientSamplesError(PctuneError):
    """Sample size too small for the requested test's degrees of freedom."""


class InternalConsistencyError(PctuneError):
    """Learner bookkeeping violated an invariant (e.g. missing separation set)."""


class NumericalError(PctuneError):
    """A numerical routine failed beyond recovery (e.g. factorization with max jitter)."""
