"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or missing configuration input."""


class NumericError(RuntimeError):
    """A numerical routine failed to produce a trustworthy result."""
