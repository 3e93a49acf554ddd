"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """An argument is outside the domain an operation is defined on."""


class ConfigurationError(ValueError):
    """A network or run configuration is internally inconsistent."""


class UsageError(RuntimeError):
    """An API was called in the wrong state (missing gradients, bad pairing)."""


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN or infinite loss."""
