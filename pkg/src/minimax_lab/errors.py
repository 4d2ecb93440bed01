"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (non-finite values, y outside the box, ...)."""


class ConfigError(ValueError):
    """Invalid or unsupported configuration.

    ``path`` is a JSON-pointer-style location such as ``"steps.eta_y"`` when known.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """An inner iterative solver hit its iteration cap."""

    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (residual={residual:.3e})")


class NotApplicableError(ValueError):
    """A diagnostic was requested outside the hypotheses it depends on."""
