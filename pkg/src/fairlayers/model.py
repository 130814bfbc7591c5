"""Reference classifier: seeded splits, weighted logistic regression, performance.

Training is full-batch gradient descent on the weight-normalised binary
cross-entropy plus an L2 penalty on the coefficients (the intercept is not
penalised)::

    L(b) = sum_i w_i * [log(1 + exp(z_i)) - y_i * z_i] / sum_i w_i + l2/2 * |b[:-1]|^2

Every reduction over rows is a single ``numpy`` dot product over the rows in
dataset order, so repeated runs on the same data and config agree exactly on
one machine.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, Dataset, ProtectedAttribute
from .errors import (
    DivergenceError,
    EmptyPartError,
    EncodingError,
    LengthMismatchError,
    TrainingError,
)
from .metrics import UNDEFINED

log = logging.getLogger(__name__)

RANDOM = "random"
STRATIFIED = "stratified"


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    test: float = 0.3
    validation: float = 0.0
    strategy: str = RANDOM
    seed: int = 0

    def __post_init__(self):
        ratios = (self.train, self.test, self.validation)
        if min(ratios) < 0 or self.train <= 0:
            raise ValueError("split ratios must be non-negative with a positive train ratio")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {sum(ratios)}")
        if self.strategy not in (RANDOM, STRATIFIED):
            raise ValueError(f"unknown split strategy {self.strategy!r}")

    @property
    def ratios(self) -> tuple[float, float, float]:
        return (self.train, self.test, self.validation)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any] | None) -> "SplitSpec":
        return cls(**dict(doc or {}))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _allocate(count: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``count`` items; ties go to earlier parts."""
    exact = [count * r for r in ratios]
    sizes = [math.floor(x + 1e-9) for x in exact]
    order = sorted(range(len(ratios)), key=lambda j: (-(exact[j] - sizes[j]), j))
    for j in order[: count - sum(sizes)]:
        sizes[j] += 1
    return sizes


def split_indices(
    dataset: Dataset, spec: SplitSpec, attr: ProtectedAttribute | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row indices of (train, test, validation), each sorted ascending."""
    rng = np.random.default_rng(spec.seed)
    if spec.strategy == RANDOM:
        strata = [np.arange(dataset.n)]
    else:
        if attr is None:
            raise ValueError("stratified split needs a protected attribute")
        key = attr.membership(dataset).astype(int) * 2 + dataset.labels
        strata = [np.flatnonzero(key == k) for k in sorted(set(key.tolist()))]
    parts: list[list[int]] = [[], [], []]
    for stratum in strata:
        perm = stratum[rng.permutation(len(stratum))]
        start = 0
        for j, size in enumerate(_allocate(len(stratum), spec.ratios)):
            parts[j].extend(perm[start : start + size].tolist())
            start += size
    for name, part, ratio in zip(("train", "test", "validation"), parts, spec.ratios):
        if ratio > 0 and not part:
            raise EmptyPartError(f"{name} part is empty for n={dataset.n}")
    return tuple(np.array(sorted(p), dtype=int) for p in parts)  # type: ignore[return-value]


def split(
    dataset: Dataset, spec: SplitSpec, attr: ProtectedAttribute | None = None
) -> tuple[Dataset, Dataset | None, Dataset | None]:
    """Partition into train/test/validation datasets; a zero-ratio part is ``None``."""
    idx = split_indices(dataset, spec, attr)
    return tuple(dataset.take(i) if len(i) else None for i in idx)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# feature encoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    categories: tuple[str, ...] = ()  # kept levels
    reference: str | None = None  # dropped first sorted level
    low: float = 0.0
    high: float = 1.0

    @property
    def width(self) -> int:
        return len(self.categories) if self.kind == CATEGORICAL else 1


@dataclass(frozen=True)
class FeatureEncoder:
    features: tuple[FeatureSpec, ...]

    @classmethod
    def fit(cls, dataset: Dataset, columns: Sequence[str] | None = None) -> "FeatureEncoder":
        """One-hot (first sorted level dropped) for categoricals, min-max for numerics."""
        names = [c.name for c in dataset.schema.feature_columns] if columns is None else list(columns)
        specs = []
        for name in names:
            kind = dataset.schema.kind_of(name)
            values = [v for v in dataset.column(name) if v is not None]
            if kind == CATEGORICAL:
                levels = sorted(set(values))
                specs.append(FeatureSpec(name, kind, tuple(levels[1:]), levels[0] if levels else None))
            elif kind == NUMERIC:
                lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
                specs.append(FeatureSpec(name, kind, low=lo, high=hi))
            else:
                raise EncodingError(f"column {name!r} cannot be used as a feature")
        return cls(tuple(specs))

    @property
    def feature_names(self) -> list[str]:
        out = []
        for f in self.features:
            if f.kind == CATEGORICAL:
                out.extend(f"{f.name}={c}" for c in f.categories)
            else:
                out.append(f.name)
        return out

    @property
    def width(self) -> int:
        return sum(f.width for f in self.features)

    def transform(self, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
        """Encoded matrix and a mask of rows with a missing feature value.

        Unseen categories encode as all zeros (the dropped level) with a warning.
        """
        X = np.zeros((dataset.n, self.width))
        incomplete = np.zeros(dataset.n, dtype=bool)
        col = 0
        for f in self.features:
            if f.name not in dataset.columns:
                raise EncodingError(f"dataset lacks feature column {f.name!r}")
            if dataset.schema.kind_of(f.name) != f.kind:
                raise EncodingError(f"column {f.name!r} is not {f.kind}")
            values = dataset.column(f.name)
            if f.kind == CATEGORICAL:
                index = {c: j for j, c in enumerate(f.categories)}
                unseen = 0
                for i, v in enumerate(values):
                    if v is None:
                        incomplete[i] = True
                    elif v in index:
                        X[i, col + index[v]] = 1.0
                    elif v != f.reference:
                        unseen += 1
                if unseen:
                    log.warning("%d rows carry categories of %r unseen in training", unseen, f.name)
            else:
                span = f.high - f.low
                for i, v in enumerate(values):
                    if v is None:
                        incomplete[i] = True
                    else:
                        X[i, col] = (v - f.low) / span if span > 0 else 0.0
            col += f.width
        return X, incomplete

    def to_dict(self) -> dict[str, Any]:
        return {"features": [{**asdict(f), "categories": list(f.categories)} for f in self.features]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FeatureEncoder":
        return cls(tuple(FeatureSpec(**{**f, "categories": tuple(f["categories"])}) for f in doc["features"]))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    learning_rate: float = 0.1
    max_iter: int = 5000
    tol: float = 1e-8
    l2: float = 1e-4
    threshold: float = 0.5
    seed: int = 0
    features: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iter < 0 or self.tol < 0 or self.l2 < 0:
            raise ValueError("max_iter, tol and l2 must be non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.features is not None:
            object.__setattr__(self, "features", tuple(self.features))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any] | None) -> "ModelConfig":
        return cls(**dict(doc or {}))

    def to_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["features"] = None if self.features is None else list(self.features)
        return doc


def sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def loss_and_gradient(
    params: np.ndarray, X: np.ndarray, y: np.ndarray, w: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Objective and its gradient; ``params`` holds the coefficients then the intercept."""
    coef, intercept = params[:-1], params[-1]
    z = X @ coef + intercept
    total = w.sum()
    loss = float(np.dot(w, np.logaddexp(0.0, z) - y * z) / total + 0.5 * l2 * np.dot(coef, coef))
    r = w * (sigmoid(z) - y) / total
    grad = np.empty_like(params)
    grad[:-1] = X.T @ r + l2 * coef
    grad[-1] = r.sum()
    return loss, grad


@dataclass(frozen=True)
class TrainedModel:
    coefficients: tuple[float, ...]
    intercept: float
    encoder: FeatureEncoder
    config: ModelConfig
    loss_log: tuple[float, ...] = ()
    iterations: int = 0
    converged: bool = False
    excluded_rows: int = 0

    @property
    def params(self) -> np.ndarray:
        return np.array(self.coefficients + (self.intercept,))

    def to_dict(self) -> dict[str, Any]:
        return {
            "coefficients": list(self.coefficients),
            "feature_names": self.encoder.feature_names,
            "intercept": self.intercept,
            "encoder": self.encoder.to_dict(),
            "config": self.config.to_dict(),
            "loss_log": list(self.loss_log),
            "iterations": self.iterations,
            "converged": self.converged,
            "excluded_rows": self.excluded_rows,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TrainedModel":
        return cls(
            coefficients=tuple(float(c) for c in doc["coefficients"]),
            intercept=float(doc["intercept"]),
            encoder=FeatureEncoder.from_dict(doc["encoder"]),
            config=ModelConfig.from_dict(doc["config"]),
            loss_log=tuple(float(v) for v in doc.get("loss_log", ())),
            iterations=int(doc.get("iterations", 0)),
            converged=bool(doc.get("converged", False)),
            excluded_rows=int(doc.get("excluded_rows", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train(dataset: Dataset, config: ModelConfig | None = None) -> TrainedModel:
    """Fit by full-batch gradient descent from zero coefficients.

    Stops after ``max_iter`` steps or once the loss changes by less than
    ``tol``. Rows with a missing feature value are left out of training.
    """
    config = config or ModelConfig()
    encoder = FeatureEncoder.fit(dataset, config.features)
    X, incomplete = encoder.transform(dataset)
    keep = ~incomplete
    if incomplete.any():
        log.warning("training without %d rows that have missing feature values", int(incomplete.sum()))
    X, y, w = X[keep], dataset.labels[keep].astype(float), dataset.weights[keep]
    active = w > 0
    if not (y[active] == 1).any() or not (y[active] == 0).any():
        raise TrainingError("training labels contain a single class")

    params = np.zeros(X.shape[1] + 1)
    losses: list[float] = []
    converged = False
    it = 0
    for it in range(config.max_iter):
        loss, grad = loss_and_gradient(params, X, y, w, config.l2)
        if not math.isfinite(loss):
            raise DivergenceError(it, loss)
        if losses and abs(losses[-1] - loss) < config.tol:
            losses.append(loss)
            converged = True
            break
        losses.append(loss)
        params = params - config.learning_rate * grad
    else:
        it = config.max_iter
        if config.max_iter:
            loss, _ = loss_and_gradient(params, X, y, w, config.l2)
            if not math.isfinite(loss):
                raise DivergenceError(it, loss)
            losses.append(loss)

    rises = sum(1 for a, b in zip(losses[1:], losses[2:]) if b > a + config.tol)
    if rises:
        log.warning("loss increased on %d iterations; learning rate may be too large", rises)
    return TrainedModel(
        tuple(float(c) for c in params[:-1]),
        float(params[-1]),
        encoder,
        config,
        tuple(losses),
        it,
        converged,
        int(incomplete.sum()),
    )


@dataclass(frozen=True)
class Predictions:
    probabilities: np.ndarray
    labels: np.ndarray  # 1 favorable, 0 unfavorable, -1 not predicted (missing features)

    def to_dict(self) -> dict[str, Any]:
        return {
            "probabilities": [None if math.isnan(p) else float(p) for p in self.probabilities],
            "labels": [int(v) for v in self.labels],
        }


def predict(model: TrainedModel, dataset: Dataset) -> Predictions:
    """Probability of the favorable label; label 1 when probability >= threshold."""
    X, incomplete = model.encoder.transform(dataset)
    p = sigmoid(X @ np.array(model.coefficients) + model.intercept)
    labels = (p >= model.config.threshold).astype(np.int8)
    p[incomplete] = np.nan
    labels[incomplete] = -1
    return Predictions(p, labels)


# ---------------------------------------------------------------------------
# performance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerfReport:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    support: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for k in ("accuracy", "precision", "recall", "f1"):
            v = getattr(self, k)
            out[k] = UNDEFINED if v is None else v
        out["support"] = self.support
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PerfReport":
        vals = {k: None if doc[k] == UNDEFINED else float(doc[k]) for k in ("accuracy", "precision", "recall", "f1")}
        return cls(**vals, support=float(doc.get("support", 0.0)))


def performance(truth: Any, predictions: Any, weights: Any = None) -> PerfReport:
    """Weighted accuracy, precision, recall and F1; -1 predictions are skipped."""
    t = np.asarray(truth)
    p = np.asarray(predictions)
    if t.shape != p.shape:
        raise LengthMismatchError(f"truth has {t.shape[0]} entries, predictions {p.shape[0]}")
    w = np.ones(t.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != t.shape:
        raise LengthMismatchError("weights are not aligned with predictions")
    keep = p >= 0
    t, p, w = t[keep], p[keep], w[keep]
    tp = float(w[(t == 1) & (p == 1)].sum())
    fp = float(w[(t == 0) & (p == 1)].sum())
    fn = float(w[(t == 1) & (p == 0)].sum())
    total = float(w.sum())
    accuracy = float(w[t == p].sum()) / total if total > 0 else None
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return PerfReport(accuracy, precision, recall, f1, total)
