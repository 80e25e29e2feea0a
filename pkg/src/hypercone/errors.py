"""Exception types raised across the package."""


class HyperconeError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(HyperconeError, ValueError):
    pass


class ConvergenceFailure(HyperconeError):
    pass


class OverflowRisk(HyperconeError):
    pass


class NotSelfAdjoint(HyperconeError, ValueError):
    pass


class OutOfDomain(HyperconeError, ValueError):
    pass


class QuadratureFailure(HyperconeError):
    pass


class NotStrictlyHyperbolic(HyperconeError):
    pass


class IllConditionedEigenbasis(HyperconeError):
    pass


class SingularSymmetrizer(HyperconeError):
    pass


class BadEpsilon(HyperconeError, ValueError):
    pass


class StepOverflow(HyperconeError):
    def __init__(self, message, mode_index=None):
        super().__init__(message)
        self.mode_index = mode_index


class ConditionUndetermined(HyperconeError):
    pass


class EmptyRegion(HyperconeError):
    pass


class DynamicRangeExceeded(HyperconeError):
    pass


class ConfigError(HyperconeError):
    pass


class PreconditionError(HyperconeError):
    pass
