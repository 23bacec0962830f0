"""Exception hierarchy.

Each family carries the CLI exit code it maps to: 2 for bad input, 3 for
regime or consistency conflicts, 4 for numerical failures.
"""


class BMLabError(Exception):
    exit_code = 4


class InputError(BMLabError, ValueError):
    exit_code = 2


class RegimeError(BMLabError, ValueError):
    exit_code = 3


class NumericError(BMLabError, ArithmeticError):
    exit_code = 4


class UnsupportedOrderError(InputError):
    pass


class EvaluationError(NumericError):
    """A function returned a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class RankUndeterminedError(NumericError):
    pass


class EmptyExpansionError(InputError):
    pass


class PreconditionError(InputError):
    pass


class RangeError(InputError):
    pass


class DegeneracyError(NumericError):
    pass


class IntegrabilityError(RegimeError):
    pass


class PrecisionError(NumericError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class EmbeddingError(NumericError):
    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class NotPositiveDefiniteError(NumericError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class CoverageError(InputError):
    pass


class AlignmentError(InputError):
    pass


class SizeError(InputError):
    pass


class FitError(NumericError):
    pass
