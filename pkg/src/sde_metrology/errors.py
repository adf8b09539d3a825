"""Exception hierarchy shared by calibration, analysis and the CLI.

The CLI maps these onto exit codes: ``DataError`` -> 3, ``NumericalError`` -> 4.
"""


class MetrologyError(Exception):
    """Base class for every error raised by this package."""


class DataError(MetrologyError):
    """Input records are missing, malformed or inconsistent."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class InsufficientDataError(DataError):
    pass


class MissingOverlapError(DataError):
    pass


class CalibrationMismatchError(DataError):
    pass


class IncompleteSessionError(DataError):
    pass


class IncompleteGridError(DataError):
    pass


class UnstableSourceError(DataError):
    pass


class SuspiciousGainError(DataError):
    pass


class AlignmentError(DataError):
    pass


class NumericalError(MetrologyError):
    """A fit failed to converge or a numerical domain was violated."""


class FitFailure(NumericalError):
    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DomainError(NumericalError, ValueError):
    """Arithmetic outside its domain (division by zero, log of non-positive)."""

    def __init__(self, op, message):
        self.op = op
        super().__init__(f"{op}: {message}")


class OutOfDomainError(NumericalError):
    """Evaluation requested far outside the data span of a fitted model."""


class DegenerateGridError(NumericalError):
    pass


class InvalidTauError(ValueError, MetrologyError):
    pass
