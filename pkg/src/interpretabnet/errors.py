"""Exception hierarchy.

Each family maps to a CLI exit code: configuration problems exit with 1,
data problems with 2, numeric failures with 3.
"""


class InterpreTabNetError(Exception):
    exit_code = 1


class ConfigError(InterpreTabNetError, ValueError):
    exit_code = 1


class DataError(InterpreTabNetError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    pass


class ShapeError(DataError):
    pass


class DegenerateImportanceError(DataError):
    pass


class MetricUndefinedError(DataError):
    pass


class NumericError(InterpreTabNetError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, op=None):
        super().__init__(message)
        self.op = op
