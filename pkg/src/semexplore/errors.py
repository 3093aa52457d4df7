"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or configuration values."""


class DomainError(ValueError):
    """Input outside the domain an operation is defined on."""


class WorldParseError(ValueError):
    """A world file could not be parsed; carries the offending line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class CollisionError(RuntimeError):
    """The simulated robot tried to move through an occupied world cell."""


class OptimizationError(RuntimeError):
    """Normal equations of the pose-graph problem could not be solved."""
