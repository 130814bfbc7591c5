"""Fairness auditing across the seven stages of an AI system's lifecycle."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    CsvOptions,
    Dataset,
    ProtectedAttribute,
    Schema,
    group_counts,
    load_csv,
    profile,
    validate,
)
from .metrics import MetricReport, evaluate_all  # noqa: E402
from .rating import RatingResult, bias_index, fairness_score  # noqa: E402

__all__ = [
    "CsvOptions",
    "Dataset",
    "MetricReport",
    "ProtectedAttribute",
    "RatingResult",
    "Schema",
    "bias_index",
    "evaluate_all",
    "fairness_score",
    "group_counts",
    "load_csv",
    "profile",
    "validate",
]
