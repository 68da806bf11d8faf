"""Exception types shared across the package."""


class TextileResonanceError(Exception):
    """Base class for all package errors."""


class DomainError(TextileResonanceError, ValueError):
    """An input lies outside the domain an operation is defined on."""


class SingularityError(TextileResonanceError, ZeroDivisionError):
    """A model denominator is exactly zero at the requested frequency."""

    def __init__(self, message, term=None, index=None):
        super().__init__(message)
        self.term = term
        self.index = index


class GridRangeError(TextileResonanceError, ValueError):
    """A frequency lies outside the sampled grid."""


class ParseError(TextileResonanceError, ValueError):
    """A spectrum or design file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EstimationError(TextileResonanceError):
    """The sensor-value estimator could not produce a result."""


class DesignError(TextileResonanceError, ValueError):
    """A design violates a structural invariant."""
