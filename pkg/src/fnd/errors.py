"""Exception types shared across the package.

The CLI maps these onto process exit codes, so raising the right type
matters: ValidationError -> 2, OSError -> 3, NetworkError -> 4,
NumericalError -> 5.
"""


class ValidationError(ValueError):
    """Bad input data or configuration (malformed rows, out-of-range labels...)."""


class NetworkError(RuntimeError):
    """A network operation failed in a way that aborts the whole command."""


class NumericalError(RuntimeError):
    """Training produced a non-finite value (NaN/Inf loss or gradient)."""


class TranslationError(RuntimeError):
    """A translation client failed for a single item."""
