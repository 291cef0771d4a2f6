"""Error types shared by every module.

Each error subclasses the closest builtin so callers can catch either the
specific kind or the builtin. ``exit_code`` is what the CLI returns when the
error escapes a command.
"""


class QpbError(Exception):
    exit_code: int = 1


# numeric / capacity (exit 4)
class DimensionError(QpbError, ValueError):
    exit_code = 4


class DegenerateInputError(QpbError, ValueError):
    exit_code = 4


class QubitIndexError(QpbError, IndexError):
    exit_code = 4


class ArgumentError(QpbError, ValueError):
    exit_code = 4


class CapacityError(QpbError, MemoryError):
    exit_code = 4


class UndefinedMetricError(QpbError, ValueError):
    exit_code = 4


# config (exit 2)
class ConfigError(QpbError, ValueError):
    exit_code = 2


# data (exit 3)
class LayoutError(QpbError, FileNotFoundError):
    exit_code = 3


class DataError(QpbError, ValueError):
    exit_code = 3


class EvaluationError(QpbError, RuntimeError):
    exit_code = 3
