"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


class NumericError(RuntimeError):
    """Raised when an iterative routine fails to converge.

    ``diagnostics`` carries whatever state the routine had when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
