"""Error types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, NumericalError -> 4.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, ids, shapes, labels)."""


class NumericalError(ArithmeticError):
    """Non-finite values or divergence detected during computation."""
