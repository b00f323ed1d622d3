class DomainError(ValueError):
    """Argument outside the mathematical domain of a function."""


class ConfigurationError(ValueError):
    """Inconsistent or invalid run parameters."""


class InvariantError(RuntimeError):
    """A numerical invariant was violated during a computation."""
