"""Shared exception types."""


class DimensionError(ValueError):
    """Tensor shapes are incompatible for the requested op."""


class EmptySupportError(ValueError):
    """Retrieval was attempted over an empty support set."""


class ConfigError(ValueError):
    """Invalid or infeasible configuration."""


class DataError(ValueError):
    """A dataset record violates the format contract."""


class ParseError(ValueError):
    """A file could not be parsed."""
