"""Exception hierarchy shared across the pipeline.

Data-shaped problems (bad files, mismatched schemas, unknown ids) derive from
:class:`DataError`; numeric blow-ups derive from :class:`NumericError`. The CLI
maps these groups to distinct exit codes.
"""


class TractFlowError(Exception):
    """Base class for all errors raised by this package."""


class DataError(TractFlowError):
    """Invalid or inconsistent input data."""


class NumericError(TractFlowError):
    """Numerical failure (divergence, non-finite values) during computation."""


# -- ingestion ----------------------------------------------------------------

class MissingInput(DataError):
    """A required input file does not exist."""


class MissingColumn(DataError):
    """An input table lacks a required column."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"missing column(s): {', '.join(self.columns)}")


class NonFiniteValue(DataError):
    """A cell failed validation (unparseable, non-finite, or out of range)."""

    def __init__(self, row: int, column: str, detail: str = ""):
        self.row = row
        self.column = column
        msg = f"invalid value at row {row}, column {column!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DuplicateId(DataError):
    """Two rows share the same tract id."""


class DuplicatePair(DataError):
    """Two flow records share the same (origin, destination) pair."""


class EmptyInput(DataError):
    """An operation received an empty collection where content is required."""


class DegenerateGeometry(DataError):
    """Two distinct tracts share a centroid (zero inter-centroid distance)."""


# -- model / schema -----------------------------------------------------------

class SchemaMismatch(DataError):
    """Feature layout does not match the schema the model was trained with."""


class DimensionMismatch(DataError):
    """Vector or matrix dimensions are inconsistent."""


class InsufficientData(DataError):
    """Too few rows to fit the requested model."""


class UnknownTract(DataError):
    """A tract id does not resolve against the graph."""


class UnknownIndicator(DataError):
    """An indicator name does not resolve against the feature schema."""


class NegativeForbidden(DataError):
    """An edit would drive a nonnegative indicator below zero."""


class UnknownSplit(DataError):
    """A dataset split label is not one of train/val/test."""


# -- metrics ------------------------------------------------------------------

class KeyMismatch(DataError):
    """Prediction and ground-truth maps cover different OD pairs."""


class BothTotalsZero(DataError):
    """CPC is undefined when predictions and ground truth both sum to zero."""


class NoDefinedPairs(DataError):
    """A diff summary was requested over a filter with no defined relative changes."""


# -- numerics -----------------------------------------------------------------

class NonFiniteLoss(NumericError):
    """The training loss evaluated to NaN or infinity."""


class Diverged(NumericError):
    """Training hit non-finite losses twice in a row and was aborted."""
