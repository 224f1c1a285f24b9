"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class EmptyLevelError(ValueError):
    """A requested descendant level has no vertices."""


class ResourceLimitError(RuntimeError):
    """A computation would exceed a declared size or memory cap."""


class InstabilityError(RuntimeError):
    """The integrator produced a non-finite or runaway state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class HypothesisViolation(ValueError):
    """Input data does not satisfy the hypothesis of an inequality being checked."""

    def __init__(self, message, max_violation=None):
        super().__init__(message)
        self.max_violation = max_violation
