"""Exception hierarchy.

Errors are grouped so the command line front end can map them onto exit
codes: :class:`DataError` subclasses mean the inputs are unusable,
:class:`AnalysisError` subclasses mean an analysis stage could not produce
a result from otherwise valid inputs.
"""
from __future__ import annotations


class GazeQualityError(Exception):
    """Base class for every error raised by this package."""


class DomainError(GazeQualityError, ValueError):
    """An argument lies outside the domain of an operation."""


class InvalidVectorError(DomainError):
    """A gaze vector cannot be converted to visual angles (zero or vz <= 0)."""


class DataError(GazeQualityError):
    """Input data is malformed or missing."""


class ParseError(DataError, ValueError):
    """A CSV or JSON input does not conform to its format.

    ``row`` is 1-based and counts the header as row 1; ``column`` is the
    column name when one can be attributed.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None, source: str | None = None):
        self.row = row
        self.column = column
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class ValidationError(DataError, ValueError):
    """A recording cannot be validated (for example it is empty)."""


class AnalysisError(GazeQualityError):
    """An analysis stage could not produce a result."""


class EstimationError(AnalysisError):
    """Latency estimation found no usable gaze/target pairs."""


class SelectionError(AnalysisError):
    """No stable window can be selected from an error profile."""


class RankDeficiencyError(AnalysisError):
    """A least-squares problem is rank deficient or too ill-conditioned."""


class OracleConfigError(GazeQualityError, ValueError):
    """A synthetic-recording configuration is infeasible."""
