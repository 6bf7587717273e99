"""Shared exception types."""


class ConfigurationError(ValueError):
    """Raised when a scenario or config file cannot be used as given."""


class ContractViolation(RuntimeError):
    """Raised when an API is called outside its documented domain."""
