"""Exception hierarchy shared by every module of the package."""


class TvpDfmError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(TvpDfmError, ValueError):
    pass


class NotSymmetric(TvpDfmError, ValueError):
    pass


class IndefiniteMatrix(TvpDfmError, ValueError):
    pass


class SingularDelta(TvpDfmError, ArithmeticError):
    pass


class LayoutMismatch(TvpDfmError, ValueError):
    pass


class IndexOutOfRange(TvpDfmError, IndexError):
    pass


class InvalidSpec(TvpDfmError, ValueError):
    pass


class NonFiniteState(TvpDfmError, ArithmeticError):
    pass


class IndefiniteLinearizationMatrix(TvpDfmError, ArithmeticError):
    """Linearization covariance plus process noise lost semidefiniteness.

    Usually a sign that the filter is diverging at the current parameter point.
    """


class IndefiniteResidualCov(TvpDfmError, ArithmeticError):
    pass


class NonFiniteLikelihood(TvpDfmError, ArithmeticError):
    pass


class CovarianceNotPSD(TvpDfmError, ArithmeticError):
    pass


class SingularPredictedCov(TvpDfmError, ArithmeticError):
    pass


class MaxIterationsExceeded(TvpDfmError, RuntimeError):
    pass


class PathTooShort(TvpDfmError, ValueError):
    pass


class SeriesTooShort(TvpDfmError, ValueError):
    pass


class InvalidScenario(TvpDfmError, ValueError):
    pass


class ZeroTruth(TvpDfmError, ZeroDivisionError):
    pass


class TooFewReplications(TvpDfmError, ValueError):
    pass


class InvalidConfig(TvpDfmError, ValueError):
    pass


class MissingData(TvpDfmError, ValueError):
    pass


class IoFailure(TvpDfmError, OSError):
    pass
