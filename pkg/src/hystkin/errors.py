"""Exception hierarchy.

Every error carries a ``code`` that the command-line front end prints as a
machine-parseable prefix (``E_IO: ...``).
"""


class HystkinError(Exception):
    code = "E_CONFIG"


# dataset / io
class DatasetError(HystkinError):
    code = "E_IO"


class MissingColumn(DatasetError):
    pass


class NonNumericField(DatasetError):
    pass


class RaggedCycles(DatasetError):
    pass


class OutOfBounds(DatasetError):
    pass


class DuplicateStep(DatasetError):
    pass


class MultipleTurningPoints(DatasetError):
    pass


class InvalidSplit(HystkinError):
    pass


class ModelFormatError(HystkinError):
    code = "E_IO"


# mixture fitting
class FitError(HystkinError):
    code = "E_EM"


class DimensionMismatch(FitError):
    pass


class DegenerateDensity(FitError):
    pass


class TooFewPoints(FitError):
    pass


class SingularCovariance(FitError):
    pass


class SingularInputVariance(FitError):
    pass


class NonFiniteInput(FitError):
    pass


class EmptyBranch(FitError):
    pass


# inverse solving
class Unreachable(HystkinError):
    """Target angle cannot be reached; ``q`` holds the best-effort input."""

    code = "E_UNREACHABLE"

    def __init__(self, message, q=None):
        super().__init__(message)
        self.q = q


class NonFiniteTarget(HystkinError):
    pass


class StepFailure(HystkinError):
    """No step length satisfied the sufficient-decrease condition."""
