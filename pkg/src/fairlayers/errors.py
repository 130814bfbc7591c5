"""Exception hierarchy shared by every layer of the toolkit."""

from __future__ import annotations


class FairLayersError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(FairLayersError):
    pass


class ParseError(FairLayersError):
    """Raised for malformed input rows; ``row`` is the 0-based data-row index when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyDatasetError(FairLayersError):
    pass


class UnmappedTokenError(ParseError):
    pass


class UnknownFavorableLabelError(FairLayersError):
    pass


class AttributeCoverageError(FairLayersError):
    """A protected attribute does not partition the categories observed in a column."""


class EmptyGroupError(FairLayersError):
    pass


class EmptyCellError(FairLayersError):
    """A (group, label) cell needed by a mitigation routine has no members."""


class UndefinedRateError(FairLayersError):
    pass


class LengthMismatchError(FairLayersError):
    pass


class EmptyPartError(FairLayersError):
    pass


class TrainingError(FairLayersError):
    pass


class DivergenceError(TrainingError):
    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at iteration {iteration}")


class EncodingError(FairLayersError):
    pass


class ChecklistError(FairLayersError):
    pass


class UnknownItemError(ChecklistError):
    pass


class ConfigError(FairLayersError):
    pass


class LayerError(FairLayersError):
    """Wraps any failure raised while executing one audit layer."""

    def __init__(self, layer: int, cause: BaseException):
        self.layer = layer
        self.cause = cause
        super().__init__(f"layer {layer}: {cause}")
