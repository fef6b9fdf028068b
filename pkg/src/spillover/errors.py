"""Exception types shared across the package."""

from __future__ import annotations


class SpilloverError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGroupSizeError(SpilloverError):
    """Group size (number of neighbors) is out of range for the operation."""


class MissingOrderingError(SpilloverError):
    """Saturated-mode operation requested without a neighbor ordering."""


class IncompleteCellsError(SpilloverError):
    """A complete set of cell means was required but some cells are missing."""

    def __init__(self, missing, message=None):
        self.missing = tuple(missing)
        super().__init__(message or f"missing cell means for assignments: {self.missing}")


class StratificationRequiredError(SpilloverError):
    """Dataset mixes group sizes; stratify by size before estimating."""


class SingularDesignError(SpilloverError):
    """Least-squares design matrix is rank deficient."""


class UnsupportedMechanismError(SpilloverError):
    """Operation is not defined for the given assignment mechanism."""


class DataValidationError(SpilloverError):
    """Input data violates the dataset schema.

    Carries the offending row (1-based, header excluded) and column when known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = ""
        if row is not None:
            where += f" (row {row}"
            where += f", column {column!r})" if column is not None else ")"
        elif column is not None:
            where += f" (column {column!r})"
        super().__init__(message + where)


class ConfigError(SpilloverError):
    """Invalid configuration file or mechanism specification."""
