"""Exception hierarchy shared by every module."""


class BayesCovError(Exception):
    """Base class for all errors raised by bayescov."""


class DimensionMismatch(BayesCovError, ValueError):
    pass


class NotSymmetric(BayesCovError, ValueError):
    pass


class NotPositiveDefinite(BayesCovError, ValueError):
    pass


class DomainError(BayesCovError, ValueError):
    pass


class ConvergenceError(BayesCovError, RuntimeError):
    pass


class InvalidDf(BayesCovError, ValueError):
    pass


class ImproperPrior(BayesCovError, ValueError):
    pass


class TruncationExhausted(BayesCovError, RuntimeError):
    """Rejection sampler gave up; ``acceptance_rate`` is the observed rate."""

    def __init__(self, message, acceptance_rate=0.0, attempts=0):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate
        self.attempts = attempts


class SingularTruth(BayesCovError, RuntimeError):
    pass


class SingularPosterior(BayesCovError, ValueError):
    pass


class MomentUndefined(BayesCovError, ValueError):
    pass


class OddK(BayesCovError, ValueError):
    pass


class UnsupportedLoss(BayesCovError, ValueError):
    pass


class UnsupportedPrior(BayesCovError, ValueError):
    pass


class DegenerateFit(BayesCovError, ValueError):
    pass


class TooLarge(BayesCovError, ValueError):
    pass


class ConstraintViolated(BayesCovError, ValueError):
    """Tuning constant outside the admissible range; ``max_c`` is the largest allowed."""

    def __init__(self, message, max_c=None):
        super().__init__(message)
        self.max_c = max_c


class ConditionViolated(BayesCovError, ValueError):
    pass


class ConfigError(BayesCovError, ValueError):
    pass


class ReplicateFailed(BayesCovError, RuntimeError):
    """A Monte Carlo replicate raised; carries the replicate index and the cause."""

    def __init__(self, index, cause):
        super().__init__(f"replicate {index} failed: {type(cause).__name__}: {cause}")
        self.index = index
        self.cause = cause
