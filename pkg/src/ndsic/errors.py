class ConfigurationError(ValueError):
    """Raised when an experiment configuration violates a precondition."""


class DomainError(ValueError):
    """Raised when a function is evaluated outside its valid domain."""


class InvariantError(RuntimeError):
    """Raised when a simulation step breaks a protocol invariant."""
