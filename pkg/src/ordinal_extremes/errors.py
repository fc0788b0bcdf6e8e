"""Exception hierarchy shared by every module.

All errors derive from :class:`OrdinalExtremesError`; most also derive from the
builtin they specialise (``ValueError``) so callers can catch either.
"""


class OrdinalExtremesError(Exception):
    """Base class for package errors."""


class DomainError(OrdinalExtremesError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateDistributionError(OrdinalExtremesError, ValueError):
    """The truncation mass of a discretised distribution vanished."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateSampleError(OrdinalExtremesError, ValueError):
    """A sample carries no information for fitting (e.g. all values equal)."""


class InsufficientDataError(OrdinalExtremesError, ValueError):
    """Too few usable observations for the requested fit."""

    def __init__(self, message, count=None):
        super().__init__(message)
        self.count = count


class UndefinedScoreError(OrdinalExtremesError, ValueError):
    """A score is undefined for the given input (e.g. a single cluster)."""


class ContractViolation(OrdinalExtremesError, RuntimeError):
    """An API was used out of order (e.g. a stale forward cache)."""


class NonFiniteGradientError(OrdinalExtremesError, FloatingPointError):
    """A gradient contained NaN or inf; the update was refused."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class ConfigError(OrdinalExtremesError, ValueError):
    """An experiment or run configuration is inconsistent."""


class DataError(OrdinalExtremesError, ValueError):
    """Base class for dataset ingestion problems."""


class EmptyFileError(DataError):
    pass


class MissingColumnError(DataError):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
