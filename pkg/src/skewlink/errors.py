"""Exception types shared across the package.

Validation problems (bad shapes, bad parameter values, malformed files) raise
:class:`ValidationError`; failures of the numerics themselves raise
:class:`NumericalError`.  The CLI maps these to exit codes 2 and 3.
"""


class SkewLinkError(Exception):
    """Base class for all package errors."""


class ValidationError(SkewLinkError, ValueError):
    """Invalid input: wrong shape, out-of-range parameter, malformed data."""


class NumericalError(SkewLinkError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, msg="not positive definite"):
        super().__init__(msg)


class DimensionLimitError(ValidationError):
    def __init__(self, d, cap):
        super().__init__(f"dimension limit: d={d} exceeds cap {cap}")
        self.d = d
        self.cap = cap


class DegenerateTruncationError(NumericalError):
    def __init__(self, msg="degenerate truncation"):
        super().__init__(msg)
