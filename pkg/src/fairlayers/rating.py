"""Bias Index and Fairness Score.

Each metric value is mapped to a deviation in [0, 1] from its ideal. The
per-attribute Bias Index is the mean deviation over the selected metrics, the
overall Bias Index is the worst attribute, and the Fairness Score is its
complement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import FairLayersError
from .metrics import DI, MetricReport, MetricValue

DEFAULT_TOLERANCE = 0.2


@dataclass(frozen=True)
class Deviation:
    metric: str
    level: str
    value: float | None
    deviation: float

    def to_dict(self) -> dict[str, Any]:
        return MetricValue(self.metric, self.value, self.level).to_dict() | {"deviation": self.deviation}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Deviation":
        mv = MetricValue.from_dict(doc)
        return cls(mv.metric, mv.level, mv.value, float(doc["deviation"]))


def deviation(value: MetricValue) -> Deviation:
    """Distance from the ideal: |x| for differences, 1 - min(DI, 1/DI) for DI.

    Undefined values and DI = 0 count as maximal deviation.
    """
    v = value.value
    if v is None:
        d = 1.0
    elif value.metric == DI:
        d = 1.0 if v <= 0 else 1.0 - min(v, 1.0 / v)
    else:
        d = min(abs(v), 1.0)
    return Deviation(value.metric, value.level, v, d)


@dataclass(frozen=True)
class AttributeBias:
    attribute: str
    bias_index: float
    deviations: tuple[Deviation, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "attribute": self.attribute,
            "bias_index": self.bias_index,
            "deviations": [d.to_dict() for d in self.deviations],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AttributeBias":
        return cls(doc["attribute"], float(doc["bias_index"]), tuple(Deviation.from_dict(d) for d in doc["deviations"]))


def _selector(metrics: Iterable[str] | Mapping[str, Iterable[str]] | None) -> Callable[[MetricValue], bool]:
    if metrics is None:
        return lambda v: True
    if isinstance(metrics, Mapping):
        by_level = {level: set(ids) for level, ids in metrics.items()}
        return lambda v: v.metric in by_level.get(v.level, ())
    ids = set(metrics)
    return lambda v: v.metric in ids


def bias_index(
    reports: MetricReport | Sequence[MetricReport],
    attribute: str,
    metrics: Iterable[str] | Mapping[str, Iterable[str]] | None = None,
) -> AttributeBias:
    """Mean deviation of one attribute's metrics, gathered across reports.

    ``metrics`` restricts which values count: an iterable of metric ids, or a
    mapping from level ("dataset"/"model") to metric ids. By default every
    value present counts.
    """
    if isinstance(reports, MetricReport):
        reports = [reports]
    keep = _selector(metrics)
    devs = []
    for report in reports:
        try:
            entry = report.for_attribute(attribute)
        except KeyError:
            continue
        devs.extend(deviation(v) for v in entry.values if keep(v))
    if not devs:
        raise FairLayersError(f"no metrics to rate for attribute {attribute!r}")
    bi = min(max(sum(d.deviation for d in devs) / len(devs), 0.0), 1.0)
    return AttributeBias(attribute, bi, tuple(devs))


@dataclass(frozen=True)
class RatingResult:
    per_attribute: tuple[AttributeBias, ...]
    bias_index: float
    fairness_score: float

    def certified(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.bias_index <= tolerance

    def to_dict(self) -> dict[str, Any]:
        return {
            "per_attribute": [a.to_dict() for a in self.per_attribute],
            "bias_index": self.bias_index,
            "fairness_score": self.fairness_score,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RatingResult":
        return cls(
            tuple(AttributeBias.from_dict(a) for a in doc["per_attribute"]),
            float(doc["bias_index"]),
            float(doc["fairness_score"]),
        )


def fairness_score(indices: Sequence[AttributeBias | float]) -> RatingResult:
    """Overall Bias Index is the worst attribute; Fairness Score is ``1 - B``.

    Plain floats are accepted and wrapped as unnamed attributes.
    """
    if not indices:
        raise FairLayersError("cannot rate an empty list of attributes")
    per = tuple(
        i if isinstance(i, AttributeBias) else AttributeBias(f"attribute_{k}", float(i), ())
        for k, i in enumerate(indices)
    )
    b = max(a.bias_index for a in per)
    return RatingResult(per, b, 1.0 - b)
