"""Exception types shared across the package."""


class ConsymError(Exception):
    """Base class for all package errors."""


class ModelError(ConsymError, ValueError):
    """Malformed model, context or evidence input."""


class DimensionError(ConsymError, ValueError):
    """State or permutation length does not match the model."""


class ConfigError(ConsymError, ValueError):
    """Invalid chain, domain or experiment configuration."""


class ResourceLimitError(ConsymError, RuntimeError):
    """A scale guard was exceeded (oracle size, orbit size, search budget)."""
