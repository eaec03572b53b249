class InvalidArgument(ValueError):
    """Precondition violated by the caller."""


class NumericError(ArithmeticError):
    """Non-finite values or a linear system that could not be factorized."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
