"""Exception types shared across the package."""


class DataError(ValueError):
    """Raised for malformed or unusable input data (CSV contents, shapes)."""


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails beyond its built-in recovery."""
