"""Group-fairness metrics at dataset level (true labels) and model level (predictions).

Sign convention throughout: unprivileged minus privileged, so a negative
statistical parity difference means the unprivileged group receives the
favorable outcome less often. Rates are weighted by the dataset's instance
weights. An undefined metric is carried as ``value=None`` and serialised as
the string ``"undefined"``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import (
    PRIVILEGED,
    UNPRIVILEGED,
    Dataset,
    ProtectedAttribute,
    group_counts,
)
from .errors import (
    AttributeCoverageError,
    EmptyGroupError,
    LengthMismatchError,
    UndefinedRateError,
)

SPD = "SPD"
DI = "DI"
EOD = "EOD"
EMOD = "EMOD"
AOD = "AOD"
ALL_METRICS = (SPD, DI, EOD, EMOD, AOD)
RATE_METRICS = (SPD, DI)
ERROR_METRICS = (EOD, EMOD, AOD)

DATASET_LEVEL = "dataset"
MODEL_LEVEL = "model"

UNDEFINED = "undefined"

METRIC_NAMES = {
    SPD: "statistical parity difference",
    DI: "disparate impact",
    EOD: "equal opportunity difference",
    EMOD: "equal mis-opportunity difference",
    AOD: "average odds difference",
}


@dataclass(frozen=True)
class GroupRates:
    privileged: float
    unprivileged: float
    excluded: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class MetricValue:
    metric: str
    value: float | None
    level: str = DATASET_LEVEL
    note: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "metric": self.metric,
            "value": UNDEFINED if self.value is None else self.value,
            "level": self.level,
        }
        if self.note:
            doc["note"] = self.note
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MetricValue":
        value = doc["value"]
        return cls(doc["metric"], None if value == UNDEFINED else float(value), doc["level"], doc.get("note"))


def _as_outcome(values: Any, n: int, what: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise LengthMismatchError(f"{what} has length {arr.shape[0] if arr.ndim else 0}, dataset has {n} rows")
    return arr.astype(np.int8)


def base_rates(dataset: Dataset, attr: ProtectedAttribute, predictions: Any = None) -> GroupRates:
    """Weighted favorable-outcome rate per group.

    Uses the true labels unless ``predictions`` is given; prediction entries of
    -1 mark rows without a prediction and are excluded.
    """
    outcome = None if predictions is None else _as_outcome(predictions, dataset.n, "predictions")
    table = group_counts(dataset, attr, outcome)
    rates = {}
    for g in (PRIVILEGED, UNPRIVILEGED):
        total = table.group_size(g, weighted=True)
        if total <= 0:
            raise EmptyGroupError(f"{attr.column}: {g} group has zero total weight")
        rates[g] = table.cell(g, 1, weighted=True) / total
    return GroupRates(rates[PRIVILEGED], rates[UNPRIVILEGED], dict(table.excluded))


def statistical_parity_difference(rates: GroupRates, level: str = DATASET_LEVEL) -> MetricValue:
    return MetricValue(SPD, rates.unprivileged - rates.privileged, level)


def disparate_impact(rates: GroupRates, level: str = DATASET_LEVEL) -> MetricValue:
    """Ratio unprivileged/privileged; 0/0 is 1 and x/0 is undefined."""
    if rates.privileged == 0:
        if rates.unprivileged == 0:
            return MetricValue(DI, 1.0, level, "no favorable outcomes in either group")
        return MetricValue(DI, None, level, "privileged favorable rate is zero")
    return MetricValue(DI, rates.unprivileged / rates.privileged, level)


@dataclass(frozen=True)
class Confusion:
    tp: float
    fp: float
    tn: float
    fn: float

    @property
    def tpr(self) -> float | None:
        pos = self.tp + self.fn
        return self.tp / pos if pos > 0 else None

    @property
    def fpr(self) -> float | None:
        neg = self.fp + self.tn
        return self.fp / neg if neg > 0 else None


@dataclass(frozen=True)
class GroupConfusion:
    privileged: Confusion
    unprivileged: Confusion
    excluded: Mapping[str, int] = field(default_factory=dict)


def confusion_by_group(
    truth: Any, predictions: Any, dataset: Dataset, attr: ProtectedAttribute
) -> GroupConfusion:
    truth = _as_outcome(truth, dataset.n, "truth")
    pred = _as_outcome(predictions, dataset.n, "predictions")
    groups = attr.membership(dataset)
    keep = (pred >= 0) & (groups >= 0)
    w = dataset.weights
    out = {}
    for code, g in ((1, PRIVILEGED), (0, UNPRIVILEGED)):
        sel = keep & (groups == code)
        if not sel.any():
            raise EmptyGroupError(f"{attr.column}: {g} group is empty")
        out[g] = Confusion(
            tp=float(w[sel & (truth == 1) & (pred == 1)].sum()),
            fp=float(w[sel & (truth == 0) & (pred == 1)].sum()),
            tn=float(w[sel & (truth == 0) & (pred == 0)].sum()),
            fn=float(w[sel & (truth == 1) & (pred == 0)].sum()),
        )
    excluded = {
        PRIVILEGED: int(((pred < 0) & (groups == 1)).sum()),
        UNPRIVILEGED: int(((pred < 0) & (groups == 0)).sum()),
        "unknown": int((groups < 0).sum()),
    }
    return GroupConfusion(out[PRIVILEGED], out[UNPRIVILEGED], excluded)


def _rate_gap(conf: GroupConfusion, rate: str) -> float:
    priv = getattr(conf.privileged, rate)
    unpriv = getattr(conf.unprivileged, rate)
    if priv is None or unpriv is None:
        which = PRIVILEGED if priv is None else UNPRIVILEGED
        raise UndefinedRateError(f"{rate.upper()} undefined for the {which} group")
    return unpriv - priv


def equal_opportunity_difference(conf: GroupConfusion) -> MetricValue:
    return MetricValue(EOD, _rate_gap(conf, "tpr"), MODEL_LEVEL)


def equal_misopportunity_difference(conf: GroupConfusion) -> MetricValue:
    return MetricValue(EMOD, _rate_gap(conf, "fpr"), MODEL_LEVEL)


def average_odds_difference(conf: GroupConfusion) -> MetricValue:
    return MetricValue(AOD, 0.5 * (_rate_gap(conf, "tpr") + _rate_gap(conf, "fpr")), MODEL_LEVEL)


_ERROR_FUNCS = {
    EOD: equal_opportunity_difference,
    EMOD: equal_misopportunity_difference,
    AOD: average_odds_difference,
}


@dataclass(frozen=True)
class AttributeMetrics:
    attribute: str
    values: tuple[MetricValue, ...]
    excluded: Mapping[str, int] = field(default_factory=dict)
    error: str | None = None

    def get(self, metric: str) -> MetricValue:
        for v in self.values:
            if v.metric == metric:
                return v
        raise KeyError(metric)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "attribute": self.attribute,
            "values": [v.to_dict() for v in self.values],
            "excluded": dict(self.excluded),
        }
        if self.error:
            doc["error"] = self.error
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AttributeMetrics":
        return cls(
            doc["attribute"],
            tuple(MetricValue.from_dict(v) for v in doc["values"]),
            dict(doc.get("excluded", {})),
            doc.get("error"),
        )


@dataclass(frozen=True)
class MetricReport:
    level: str
    attributes: tuple[AttributeMetrics, ...] = ()

    def for_attribute(self, name: str) -> AttributeMetrics:
        for a in self.attributes:
            if a.attribute == name:
                return a
        raise KeyError(name)

    def value(self, attribute: str, metric: str) -> float | None:
        return self.for_attribute(attribute).get(metric).value

    def to_dict(self) -> dict[str, Any]:
        return {"level": self.level, "attributes": [a.to_dict() for a in self.attributes]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MetricReport":
        return cls(doc["level"], tuple(AttributeMetrics.from_dict(a) for a in doc["attributes"]))


def evaluate_all(
    dataset: Dataset,
    attrs: Sequence[ProtectedAttribute],
    predictions: Any = None,
    metrics: Sequence[str] | None = None,
) -> MetricReport:
    """Compute the selected metrics for every attribute.

    Without predictions the report is dataset-level and only SPD and DI are
    meaningful; with predictions it is model-level and all five are available.
    Failures for one attribute are reported in-band with every requested
    metric marked undefined.
    """
    level = DATASET_LEVEL if predictions is None else MODEL_LEVEL
    if metrics is None:
        metrics = RATE_METRICS if level == DATASET_LEVEL else ALL_METRICS
    unknown = [m for m in metrics if m not in ALL_METRICS]
    if unknown:
        raise ValueError(f"unknown metrics {unknown}")
    if level == DATASET_LEVEL and any(m in ERROR_METRICS for m in metrics):
        raise ValueError("EOD, EMOD and AOD need predictions")
    pred = None if predictions is None else _as_outcome(predictions, dataset.n, "predictions")

    entries = []
    for attr in attrs:
        try:
            rates = base_rates(dataset, attr, pred)
            conf = None
            if any(m in ERROR_METRICS for m in metrics):
                conf = confusion_by_group(dataset.labels, pred, dataset, attr)
        except (EmptyGroupError, AttributeCoverageError) as exc:
            values = tuple(MetricValue(m, None, level, str(exc)) for m in metrics)
            entries.append(AttributeMetrics(attr.name, values, {}, str(exc)))
            continue
        values = []
        for m in metrics:
            if m == SPD:
                values.append(statistical_parity_difference(rates, level))
            elif m == DI:
                values.append(disparate_impact(rates, level))
            else:
                try:
                    values.append(_ERROR_FUNCS[m](conf))
                except UndefinedRateError as exc:
                    values.append(MetricValue(m, None, level, str(exc)))
        entries.append(AttributeMetrics(attr.name, tuple(values), dict(rates.excluded)))
    return MetricReport(level, tuple(entries))
