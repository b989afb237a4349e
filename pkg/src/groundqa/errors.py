"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the CLI can map failures to stable
process exit statuses without inspecting messages.
"""

from __future__ import annotations


class GroundQAError(Exception):
    exit_code = 1


class DegenerateIntervalError(GroundQAError, ValueError):
    """Raised when a ratio is undefined because its denominator is zero."""


class DimensionMismatchError(GroundQAError, ValueError):
    pass


class SequenceTooLongError(GroundQAError, ValueError):
    pass


class WeightsError(GroundQAError):
    exit_code = 7
    code = "weights"


class WeightsNotFoundError(WeightsError, FileNotFoundError):
    code = "missing-file"


class CorruptWeightsError(WeightsError):
    code = "corrupt-header"


class WeightShapeError(WeightsError):
    code = "shape-mismatch"


class ParseError(GroundQAError):
    exit_code = 3

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


class SchemaError(GroundQAError):
    exit_code = 4

    def __init__(self, message: str, *, field: str | None = None, line: int | None = None):
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if field is not None:
            prefix += f"{field}: "
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class MissingUpstreamError(GroundQAError):
    exit_code = 5

    def __init__(self, path):
        super().__init__(f"missing upstream artifact: {path}")
        self.path = path


class TransportError(GroundQAError):
    exit_code = 6


class EmptyCompletionError(GroundQAError):
    exit_code = 6


class NoPositiveError(GroundQAError, ValueError):
    pass


class InvalidSamplingError(GroundQAError, ValueError):
    pass
