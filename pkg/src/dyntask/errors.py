"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition (non-finite input, bad label, ...)."""


class LossFloorError(ValueError):
    """A task loss fell below the floor that keeps its reciprocal finite."""


class ConfigError(ValueError):
    """A configuration value or file is invalid."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss; carries a diagnostics record."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
