"""Exception hierarchy shared by the library and the command line."""


class IcnError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(IcnError, ValueError):
    """Invalid configuration (bad window/level combination, kernel width, ...)."""

    exit_code = 2


class DimensionError(IcnError, ValueError):
    """Array shapes do not agree."""

    exit_code = 2


class DataError(IcnError):
    exit_code = 3


class SchemaError(DataError, KeyError):
    """A required column is missing from an input table."""

    exit_code = 2

    def __init__(self, column, source=""):
        self.column = column
        where = f" in {source}" if source else ""
        super().__init__(f"missing required column {column!r}{where}")

    def __str__(self):
        return self.args[0]


class EmptyDatasetError(DataError):
    pass


class TrainingFault(IcnError, FloatingPointError):
    """Loss or gradients became non-finite."""

    exit_code = 4

    def __init__(self, message, sample_index=None, report=None):
        super().__init__(message)
        self.sample_index = sample_index
        self.report = report
