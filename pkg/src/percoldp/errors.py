"""Exception hierarchy shared by every module.

The CLI maps these onto its exit codes: ``ParameterError`` -> 2,
``NumericError`` and subclasses -> 4.
"""


class PercolError(Exception):
    """Base class for all library errors."""


class ParameterError(PercolError, ValueError):
    """An argument is outside the documented domain."""


class ConditioningError(PercolError):
    """``condition_on_origin`` ran out of retries."""

    def __init__(self, tries, message=None):
        self.tries = tries
        super().__init__(message or f"origin not in a giant cluster after {tries} tries")


class DegenerateClusterError(PercolError):
    """The giant cluster is too small for the requested operation."""


class AdmissibilityError(PercolError):
    """A measure or kernel/density pair fails the required balance or support conditions."""


class NumericError(PercolError, ArithmeticError):
    """An iterative solver failed or arithmetic overflowed."""


class ConvergenceError(NumericError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class StructureError(NumericError):
    """The operator is reducible where irreducibility is required."""
