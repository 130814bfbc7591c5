"""Tabular dataset loading, validation and protected-group bookkeeping.

Datasets are immutable snapshots: every transform returns a new
:class:`Dataset`. Categorical cells hold canonical strings (after any value
map was applied), numeric cells hold floats, and a missing cell is ``None``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    AttributeCoverageError,
    EmptyDatasetError,
    EmptyGroupError,
    ParseError,
    SchemaError,
    UnknownFavorableLabelError,
    UnmappedTokenError,
)

log = logging.getLogger(__name__)

CATEGORICAL = "categorical"
NUMERIC = "numeric"
LABEL = "binary-label"
COLUMN_KINDS = (CATEGORICAL, NUMERIC, LABEL)

PRIVILEGED = "privileged"
UNPRIVILEGED = "unprivileged"
GROUPS = (PRIVILEGED, UNPRIVILEGED)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]
    label_column: str
    favorable_label: str
    value_maps: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    weight_column: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.columns]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise SchemaError(f"duplicate column names: {dupes}")
        labels = [c.name for c in self.columns if c.kind == LABEL]
        if len(labels) != 1:
            raise SchemaError(f"exactly one binary-label column required, found {len(labels)}")
        if labels[0] != self.label_column:
            raise SchemaError(
                f"label_column {self.label_column!r} does not match the binary-label column {labels[0]!r}"
            )
        for name in self.value_maps:
            if name not in names:
                raise SchemaError(f"value map for unknown column {name!r}")
        if self.weight_column is not None and self.weight_column in names:
            raise SchemaError(f"weight column {self.weight_column!r} clashes with a data column")
        object.__setattr__(
            self,
            "value_maps",
            MappingProxyType({k: MappingProxyType(dict(v)) for k, v in self.value_maps.items()}),
        )

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.kind != LABEL)

    def kind_of(self, name: str) -> str:
        for c in self.columns:
            if c.name == name:
                return c.kind
        raise SchemaError(f"unknown column {name!r}")

    def file_columns(self) -> list[str]:
        names = [c.name for c in self.columns]
        if self.weight_column:
            names.append(self.weight_column)
        return names

    def canonical(self, weight_column: str | None = None, unfavorable_label: str | None = None) -> "Schema":
        """Schema for re-reading a dumped dataset: mapped values are already canonical.

        An identity map on the label column declares both label values, so a
        file without any favorable row still loads.
        """
        maps = {}
        if unfavorable_label is not None:
            maps[self.label_column] = {self.favorable_label: self.favorable_label, unfavorable_label: unfavorable_label}
        return Schema(self.columns, self.label_column, self.favorable_label, maps, weight_column)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Schema":
        try:
            columns = tuple(Column(c["name"], c["kind"]) for c in doc["columns"])
            return cls(
                columns=columns,
                label_column=doc["label_column"],
                favorable_label=str(doc["favorable_label"]),
                value_maps={k: {str(t): str(v) for t, v in m.items()} for k, m in (doc.get("value_maps") or {}).items()},
                weight_column=doc.get("weight_column"),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "columns": [{"name": c.name, "kind": c.kind} for c in self.columns],
            "label_column": self.label_column,
            "favorable_label": self.favorable_label,
        }
        if self.value_maps:
            doc["value_maps"] = {k: dict(v) for k, v in self.value_maps.items()}
        if self.weight_column:
            doc["weight_column"] = self.weight_column
        return doc


def _frozen(a: Any, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable tabular snapshot.

    ``columns`` holds the feature columns only; the label column lives in
    ``labels`` (1 = favorable). Equality compares data, labels and weights and
    ignores provenance.
    """

    schema: Schema
    columns: Mapping[str, tuple]
    labels: np.ndarray
    weights: np.ndarray | None = None
    provenance: Mapping[str, str] = field(default_factory=dict)
    unfavorable_label: str = "0"

    def __post_init__(self):
        labels = _frozen(self.labels, np.int8)
        n = labels.shape[0]
        if n < 1:
            raise EmptyDatasetError("empty dataset")
        if not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        weights = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if weights.shape != (n,):
            raise ValueError(f"expected {n} weights, got {weights.shape}")
        if not (np.isfinite(weights).all() and (weights >= 0).all()):
            raise ValueError("weights must be finite and non-negative")
        expected = {c.name for c in self.schema.feature_columns}
        if set(self.columns) != expected:
            raise SchemaError(f"columns {sorted(self.columns)} do not match schema {sorted(expected)}")
        cols = {}
        for c in self.schema.feature_columns:
            values = tuple(self.columns[c.name])
            if len(values) != n:
                raise ValueError(f"column {c.name!r} has {len(values)} values, expected {n}")
            if c.kind == NUMERIC:
                values = tuple(None if v is None else float(v) for v in values)
            else:
                values = tuple(None if v is None else str(v) for v in values)
            cols[c.name] = values
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", _frozen(weights, float))
        object.__setattr__(self, "columns", MappingProxyType(cols))
        object.__setattr__(self, "provenance", MappingProxyType(dict(self.provenance)))

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema.columns == other.schema.columns
            and self.schema.label_column == other.schema.label_column
            and self.schema.favorable_label == other.schema.favorable_label
            and dict(self.columns) == dict(other.columns)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.weights, other.weights)
        )

    __hash__ = None  # type: ignore[assignment]

    def column(self, name: str) -> tuple:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unknown feature column {name!r}") from None

    def take(self, indices: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        cols = {k: tuple(v[i] for i in idx) for k, v in self.columns.items()}
        return Dataset(
            self.schema, cols, self.labels[idx], self.weights[idx], self.provenance, self.unfavorable_label
        )

    def with_weights(self, weights: np.ndarray) -> "Dataset":
        return Dataset(self.schema, self.columns, self.labels, weights, self.provenance, self.unfavorable_label)

    def with_provenance(self, **items: str) -> "Dataset":
        prov = {**self.provenance, **items}
        return Dataset(self.schema, self.columns, self.labels, self.weights, prov, self.unfavorable_label)

    def incomplete_mask(self, columns: Iterable[str] | None = None) -> np.ndarray:
        """True for rows with a missing value in any of ``columns`` (default: all)."""
        names = list(self.columns) if columns is None else list(columns)
        mask = np.zeros(self.n, dtype=bool)
        for name in names:
            mask |= np.fromiter((v is None for v in self.column(name)), dtype=bool, count=self.n)
        return mask


@dataclass(frozen=True)
class CsvOptions:
    delimiter: str = ","
    header: bool = True
    missing_token: str = ""
    missing_label: str = "error"  # or "drop"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any] | None) -> "CsvOptions":
        doc = dict(doc or {})
        opts = cls(**doc)
        if opts.missing_label not in ("error", "drop"):
            raise SchemaError(f"missing_label policy must be 'error' or 'drop', not {opts.missing_label!r}")
        return opts


def load_csv(
    path: str | Path,
    schema: Schema,
    options: CsvOptions | None = None,
    provenance: Mapping[str, str] | None = None,
) -> Dataset:
    options = options or CsvOptions()
    expected = schema.file_columns()
    with open(path, newline="", encoding="utf-8") as fh:
        records = [r for r in csv.reader(fh, delimiter=options.delimiter, strict=True) if r]
    order = list(range(len(expected)))
    if options.header:
        if not records:
            raise EmptyDatasetError("empty dataset")
        header, records = records[0], records[1:]
        if sorted(header) != sorted(expected):
            raise ParseError(f"header {header} does not match schema columns {expected}")
        order = [header.index(name) for name in expected]
    if not records:
        raise EmptyDatasetError("empty dataset")

    raw: dict[str, list] = {name: [] for name in expected}
    for i, record in enumerate(records):
        if len(record) != len(expected):
            raise ParseError(f"expected {len(expected)} fields, found {len(record)}", row=i)
        for name, j in zip(expected, order):
            raw[name].append(record[j])

    missing_rows: list[int] = []
    cols: dict[str, list] = {}
    for col in schema.columns:
        vmap = schema.value_maps.get(col.name)
        out = []
        for i, token in enumerate(raw[col.name]):
            if token == options.missing_token:
                if col.kind == LABEL:
                    if options.missing_label == "error":
                        raise ParseError(f"missing label in column {col.name!r}", row=i)
                    missing_rows.append(i)
                out.append(None)
                continue
            if vmap is not None:
                if token not in vmap:
                    raise UnmappedTokenError(f"token {token!r} in column {col.name!r} has no mapping", row=i)
                token = vmap[token]
            if col.kind == NUMERIC:
                try:
                    out.append(float(token))
                except ValueError:
                    raise ParseError(f"non-numeric value {token!r} in column {col.name!r}", row=i) from None
            else:
                out.append(token)
        cols[col.name] = out

    weights = None
    if schema.weight_column:
        try:
            weights = [float(t) for t in raw[schema.weight_column]]
        except ValueError as exc:
            raise ParseError(f"bad weight value: {exc}") from None

    if missing_rows:
        log.warning("dropping %d rows with a missing label", len(missing_rows))
        dropped = set(missing_rows)
        keep = [i for i in range(len(records)) if i not in dropped]
        cols = {k: [v[i] for i in keep] for k, v in cols.items()}
        if weights is not None:
            weights = [weights[i] for i in keep]
        if not keep:
            raise EmptyDatasetError("empty dataset")

    label_values = cols.pop(schema.label_column)
    observed = sorted(set(label_values))
    label_map = schema.value_maps.get(schema.label_column)
    known = set(label_map.values()) if label_map is not None else set(observed)
    if schema.favorable_label not in known:
        raise UnknownFavorableLabelError(
            f"favorable label {schema.favorable_label!r} not among label values {sorted(known)}"
        )
    if len(observed) > 2:
        raise ParseError(f"label column {schema.label_column!r} has more than two values: {observed}")
    others = sorted((known | set(observed)) - {schema.favorable_label})
    labels = [1 if v == schema.favorable_label else 0 for v in label_values]
    prov = {"source": str(path), **(provenance or {})}
    return Dataset(schema, cols, labels, weights, prov, others[0] if others else "0")


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_csv(dataset: Dataset, path: str | Path, weight_column: str = "weight") -> Schema:
    """Write canonical values (value maps already applied) and weights.

    Returns the schema that reads the file back into an equal dataset.
    """
    schema = dataset.schema.canonical(weight_column, dataset.unfavorable_label)
    names = [c.name for c in schema.columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + [weight_column])
        for i in range(dataset.n):
            row = []
            for name in names:
                if name == schema.label_column:
                    row.append(schema.favorable_label if dataset.labels[i] else dataset.unfavorable_label)
                else:
                    row.append(_format(dataset.columns[name][i]))
            row.append(repr(float(dataset.weights[i])))
            writer.writerow(row)
    return schema


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    n_rows: int
    missing: Mapping[str, int]
    missing_fraction: Mapping[str, float]
    type_violations: Mapping[str, int]
    duplicate_rows: int
    threshold: float
    incomplete_columns: tuple[str, ...]

    @property
    def flag(self) -> str:
        return "incomplete" if self.incomplete_columns else "clean"

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_rows": self.n_rows,
            "missing": dict(self.missing),
            "missing_fraction": dict(self.missing_fraction),
            "type_violations": dict(self.type_violations),
            "duplicate_rows": self.duplicate_rows,
            "threshold": self.threshold,
            "incomplete_columns": list(self.incomplete_columns),
            "flag": self.flag,
        }


def validate(dataset: Dataset, threshold: float = 0.05) -> ValidationReport:
    """Count missing cells, non-finite numerics and duplicate rows."""
    missing, fraction, violations = {}, {}, {}
    for col in dataset.schema.feature_columns:
        values = dataset.columns[col.name]
        missing[col.name] = sum(v is None for v in values)
        fraction[col.name] = missing[col.name] / dataset.n
        if col.kind == NUMERIC:
            violations[col.name] = sum(v is not None and not math.isfinite(v) for v in values)
        else:
            violations[col.name] = 0
    missing[dataset.schema.label_column] = 0
    fraction[dataset.schema.label_column] = 0.0
    violations[dataset.schema.label_column] = 0

    names = list(dataset.columns)
    rows = {tuple(dataset.columns[k][i] for k in names) + (int(dataset.labels[i]),) for i in range(dataset.n)}
    flagged = tuple(k for k, f in fraction.items() if f > threshold)
    return ValidationReport(
        n_rows=dataset.n,
        missing=missing,
        missing_fraction=fraction,
        type_violations=violations,
        duplicate_rows=dataset.n - len(rows),
        threshold=threshold,
        incomplete_columns=flagged,
    )


# ---------------------------------------------------------------------------
# protected attributes and contingency counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProtectedAttribute:
    column: str
    privileged: frozenset[str]
    unprivileged: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "privileged", frozenset(map(str, self.privileged)))
        object.__setattr__(self, "unprivileged", frozenset(map(str, self.unprivileged)))
        overlap = self.privileged & self.unprivileged
        if overlap:
            raise AttributeCoverageError(f"{self.column}: categories {sorted(overlap)} are in both groups")
        if not self.privileged or not self.unprivileged:
            raise AttributeCoverageError(f"{self.column}: both groups need at least one category")

    @property
    def name(self) -> str:
        return self.column

    def swapped(self) -> "ProtectedAttribute":
        return ProtectedAttribute(self.column, self.unprivileged, self.privileged)

    def membership(self, dataset: Dataset) -> np.ndarray:
        """Per-row group code: 1 privileged, 0 unprivileged, -1 missing."""
        if dataset.schema.kind_of(self.column) != CATEGORICAL:
            raise AttributeCoverageError(f"protected attribute {self.column!r} must be categorical")
        values = dataset.column(self.column)
        unknown = {v for v in values if v is not None} - self.privileged - self.unprivileged
        if unknown:
            raise AttributeCoverageError(f"{self.column}: categories {sorted(unknown)} are in neither group")
        return np.fromiter(
            (-1 if v is None else (1 if v in self.privileged else 0) for v in values), dtype=np.int8, count=len(values)
        )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ProtectedAttribute":
        return cls(doc["column"], frozenset(doc["privileged"]), frozenset(doc["unprivileged"]))

    def to_dict(self) -> dict[str, Any]:
        return {"column": self.column, "privileged": sorted(self.privileged), "unprivileged": sorted(self.unprivileged)}


@dataclass(frozen=True)
class ContingencyTable:
    """Counts per (group, outcome) cell; groups keyed by ``PRIVILEGED``/``UNPRIVILEGED``, outcomes 1/0."""

    counts: Mapping[tuple[str, int], int]
    weighted: Mapping[tuple[str, int], float]
    excluded: Mapping[str, int]

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def group_size(self, group: str, weighted: bool = False) -> float:
        src = self.weighted if weighted else self.counts
        return src[(group, 1)] + src[(group, 0)]

    def label_size(self, label: int, weighted: bool = False) -> float:
        src = self.weighted if weighted else self.counts
        return src[(PRIVILEGED, label)] + src[(UNPRIVILEGED, label)]

    def cell(self, group: str, label: int, weighted: bool = False) -> float:
        return (self.weighted if weighted else self.counts)[(group, label)]


def group_counts(
    dataset: Dataset,
    attr: ProtectedAttribute,
    outcome: np.ndarray | None = None,
    exclude: np.ndarray | None = None,
) -> ContingencyTable:
    """Cross-tabulate group membership against an outcome (labels by default).

    Outcome entries of -1, rows with a missing attribute value, and rows set in
    ``exclude`` are left out and tallied in ``excluded`` per group.
    """
    groups = attr.membership(dataset)
    y = dataset.labels if outcome is None else np.asarray(outcome)
    if y.shape != (dataset.n,):
        raise ValueError(f"outcome has shape {y.shape}, expected ({dataset.n},)")
    drop = (y < 0) | (groups < 0)
    if exclude is not None:
        drop = drop | exclude
    excluded = {
        PRIVILEGED: int((drop & (groups == 1)).sum()),
        UNPRIVILEGED: int((drop & (groups == 0)).sum()),
        "unknown": int((groups < 0).sum()),
    }
    counts, weighted = {}, {}
    for code, group in ((1, PRIVILEGED), (0, UNPRIVILEGED)):
        for label in (1, 0):
            sel = (~drop) & (groups == code) & (y == label)
            counts[(group, label)] = int(sel.sum())
            weighted[(group, label)] = float(dataset.weights[sel].sum())
    for group in GROUPS:
        if counts[(group, 1)] + counts[(group, 0)] == 0:
            raise EmptyGroupError(f"{attr.column}: {group} group is empty")
    return ContingencyTable(MappingProxyType(counts), MappingProxyType(weighted), MappingProxyType(excluded))


# ---------------------------------------------------------------------------
# profiling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupProfile:
    size: int
    favorable: int
    base_rate: float
    incomplete_rows: int


@dataclass(frozen=True)
class AttributeProfile:
    attribute: str
    privileged: GroupProfile | None = None
    unprivileged: GroupProfile | None = None
    missing_attribute: int = 0
    error: str | None = None

    @property
    def size_skew(self) -> float | None:
        if self.error:
            return None
        total = self.privileged.size + self.unprivileged.size
        return abs(self.privileged.size - self.unprivileged.size) / total

    @property
    def base_rate_gap(self) -> float | None:
        if self.error:
            return None
        return self.privileged.base_rate - self.unprivileged.base_rate


@dataclass(frozen=True)
class DatasetProfile:
    n_rows: int
    missing: Mapping[str, int]
    attributes: tuple[AttributeProfile, ...]
    provenance: Mapping[str, str]

    def to_dict(self) -> dict[str, Any]:
        attrs = {}
        for a in self.attributes:
            if a.error:
                attrs[a.attribute] = {"error": a.error}
                continue
            attrs[a.attribute] = {
                g: {
                    "size": p.size,
                    "favorable": p.favorable,
                    "base_rate": p.base_rate,
                    "incomplete_rows": p.incomplete_rows,
                }
                for g, p in ((PRIVILEGED, a.privileged), (UNPRIVILEGED, a.unprivileged))
            }
            attrs[a.attribute]["missing_attribute"] = a.missing_attribute
            attrs[a.attribute]["size_skew"] = a.size_skew
            attrs[a.attribute]["base_rate_gap"] = a.base_rate_gap
        return {
            "n_rows": self.n_rows,
            "missing": dict(self.missing),
            "attributes": attrs,
            "provenance": dict(self.provenance),
        }


def profile(dataset: Dataset, attrs: Sequence[ProtectedAttribute]) -> DatasetProfile:
    """Group sizes and unweighted favorable base rates per protected attribute.

    ``incomplete_rows`` counts rows in each group that carry a missing value in
    some feature column, i.e. rows a drop-incomplete cleaning step would lose.
    """
    incomplete = dataset.incomplete_mask()
    out = []
    for attr in attrs:
        try:
            table = group_counts(dataset, attr)
            groups = attr.membership(dataset)
        except (EmptyGroupError, AttributeCoverageError) as exc:
            out.append(AttributeProfile(attr.name, error=str(exc)))
            continue
        parts = {}
        for code, g in ((1, PRIVILEGED), (0, UNPRIVILEGED)):
            size = table.group_size(g)
            fav = table.cell(g, 1)
            parts[g] = GroupProfile(size, fav, fav / size, int((incomplete & (groups == code)).sum()))
        out.append(AttributeProfile(attr.name, parts[PRIVILEGED], parts[UNPRIVILEGED], table.excluded["unknown"]))
    missing = {k: sum(v is None for v in vals) for k, vals in dataset.columns.items()}
    return DatasetProfile(dataset.n, missing, tuple(out), dict(dataset.provenance))
