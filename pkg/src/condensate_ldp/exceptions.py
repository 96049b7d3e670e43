"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NoSolutionError(ValueError):
    """An equation has no solution for the requested target."""


class ConfigurationError(ValueError):
    """A grid, budget or run configuration is unusable."""


class ResourceError(RuntimeError):
    """A computation would exceed the configured memory budget."""


class InvariantViolation(RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""
