"""Seven-layer audit orchestration, drift monitoring and report rendering."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .checklist import (
    FAIL,
    INCOMPLETE,
    PASS,
    ChecklistResponse,
    LayerVerdict,
    apply_overrides,
    evaluate_layer,
    load_definitions,
)
from .dataset import (
    GROUPS,
    CsvOptions,
    Dataset,
    ProtectedAttribute,
    Schema,
    load_csv,
    profile,
    validate,
)
from .errors import ConfigError, EmptyDatasetError, FairLayersError, LayerError
from .metrics import (
    ALL_METRICS,
    DATASET_LEVEL,
    ERROR_METRICS,
    MODEL_LEVEL,
    RATE_METRICS,
    UNDEFINED,
    MetricReport,
    evaluate_all,
)
from .mitigation import reweigh, resample
from .model import ModelConfig, PerfReport, SplitSpec, performance, predict, split_indices, train
from .rating import DEFAULT_TOLERANCE, RatingResult, bias_index, fairness_score

log = logging.getLogger(__name__)

LAYER_NAMES = {
    1: "Requirements, Context, and Purpose Layer",
    2: "Data Collection and Selection Layer",
    3: "Data Pre-processing and Feature Engineering Layer",
    4: "Algorithm Layer",
    5: "AI System Training Layer",
    6: "Independent Audit Layer",
    7: "Usage Layer",
}

DEFAULT_DRIFT_THRESHOLD = 0.1
REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataSource:
    path: Path
    schema: Schema
    options: CsvOptions = CsvOptions()
    provenance: Mapping[str, str] = field(default_factory=dict)

    def load(self) -> Dataset:
        return load_csv(self.path, self.schema, self.options, self.provenance)


@dataclass(frozen=True)
class MitigationDirective:
    method: str  # "reweigh" or "resample"
    attribute: str
    strategy: str = "oversample"
    seed: int = 0

    def apply(self, dataset: Dataset, attrs: Sequence[ProtectedAttribute]) -> Dataset:
        attr = next((a for a in attrs if a.column == self.attribute), None)
        if attr is None:
            raise ConfigError(f"mitigation attribute {self.attribute!r} is not a protected attribute")
        if self.method == "reweigh":
            return reweigh(dataset, attr)
        return resample(dataset, attr, self.strategy, self.seed)


@dataclass(frozen=True)
class AuditConfig:
    dataset: DataSource
    attributes: tuple[ProtectedAttribute, ...]
    split: SplitSpec = SplitSpec()
    model: ModelConfig = ModelConfig()
    dataset_metrics: tuple[str, ...] = RATE_METRICS
    model_metrics: tuple[str, ...] = ERROR_METRICS
    tolerance: float = DEFAULT_TOLERANCE
    checklists: Mapping[int, Path] = field(default_factory=dict)
    checklist_definitions: Path | None = None
    required_overrides: Mapping[str, bool] = field(default_factory=dict)
    production: DataSource | None = None
    drift_threshold: float = DEFAULT_DRIFT_THRESHOLD
    mitigation: MitigationDirective | None = None
    retraining_policy: str | None = None
    validation_threshold: float = 0.05
    digest: str = ""

    def __post_init__(self):
        if not 0 <= self.tolerance <= 1:
            raise ConfigError(f"tolerance must lie in [0, 1], got {self.tolerance}")
        for m in (*self.dataset_metrics, *self.model_metrics):
            if m not in ALL_METRICS:
                raise ConfigError(f"unknown metric {m!r}")
        if any(m in ERROR_METRICS for m in self.dataset_metrics):
            raise ConfigError("dataset-level metrics are limited to SPD and DI")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], base_dir: str | Path = ".") -> "AuditConfig":
        base = Path(base_dir)

        def resolve(p: str | None) -> Path | None:
            if p is None:
                return None
            path = Path(p)
            return path if path.is_absolute() else base / path

        def source(entry: Mapping[str, Any], fallback: Schema | None = None) -> DataSource:
            if "path" not in entry:
                raise ConfigError("data source needs a 'path'")
            raw_schema = entry.get("schema")
            if raw_schema is None:
                if fallback is None:
                    raise ConfigError("data source needs a 'schema'")
                schema = fallback
            elif isinstance(raw_schema, str):
                schema = Schema.from_json(resolve(raw_schema))
            else:
                schema = Schema.from_dict(raw_schema)
            return DataSource(
                resolve(entry["path"]),
                schema,
                CsvOptions.from_dict(entry.get("options")),
                dict(entry.get("provenance", {})),
            )

        try:
            data = source(doc["dataset"])
            attrs = tuple(ProtectedAttribute.from_dict(a) for a in doc.get("protected_attributes", []))
            metrics = doc.get("metrics", {})
            overrides = doc.get("required_overrides", {})
            if isinstance(overrides, str):
                overrides = json.loads(resolve(overrides).read_text(encoding="utf-8"))
            mitigation = doc.get("mitigation")
            production = doc.get("production")
            seed = doc.get("seed")
            split = SplitSpec.from_dict(doc.get("split"))
            model = ModelConfig.from_dict(doc.get("model"))
            directive = MitigationDirective(**mitigation) if mitigation else None
            if seed is not None:
                split = replace(split, seed=int(seed))
                model = replace(model, seed=int(seed))
                if directive:
                    directive = replace(directive, seed=int(seed))
            if directive and directive.method not in ("reweigh", "resample"):
                raise ConfigError(f"unknown mitigation method {directive.method!r}")
            return cls(
                dataset=data,
                attributes=attrs,
                split=split,
                model=model,
                dataset_metrics=tuple(metrics.get("dataset", RATE_METRICS)),
                model_metrics=tuple(metrics.get("model", ERROR_METRICS)),
                tolerance=float(doc.get("tolerance", DEFAULT_TOLERANCE)),
                checklists={int(k): resolve(v) for k, v in doc.get("checklists", {}).items()},
                checklist_definitions=resolve(doc.get("checklist_definitions")),
                required_overrides=dict(overrides),
                production=source(production, data.schema) if production else None,
                drift_threshold=float(doc.get("drift_threshold", DEFAULT_DRIFT_THRESHOLD)),
                mitigation=directive,
                retraining_policy=doc.get("retraining_policy"),
                validation_threshold=float(doc.get("validation_threshold", 0.05)),
                digest=config_digest(doc),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid audit config: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path, seed: int | None = None) -> "AuditConfig":
        """Read a JSON config; relative paths resolve against the config's directory."""
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        if seed is not None:
            doc["seed"] = seed
        return cls.from_dict(doc, path.parent)


def config_digest(doc: Mapping[str, Any]) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttributeDrift:
    attribute: str
    training: Mapping[str, float]
    production: Mapping[str, float]
    tvd: float
    flagged: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "attribute": self.attribute,
            "training": dict(self.training),
            "production": dict(self.production),
            "tvd": self.tvd,
            "flagged": self.flagged,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AttributeDrift":
        return cls(doc["attribute"], dict(doc["training"]), dict(doc["production"]), float(doc["tvd"]), bool(doc["flagged"]))


@dataclass(frozen=True)
class DriftReport:
    threshold: float
    attributes: tuple[AttributeDrift, ...]

    @property
    def flagged(self) -> bool:
        return any(a.flagged for a in self.attributes)

    def for_attribute(self, name: str) -> AttributeDrift:
        for a in self.attributes:
            if a.attribute == name:
                return a
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"threshold": self.threshold, "attributes": [a.to_dict() for a in self.attributes]}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DriftReport":
        return cls(float(doc["threshold"]), tuple(AttributeDrift.from_dict(a) for a in doc["attributes"]))


def category_distribution(dataset: Dataset, column: str) -> dict[str, float]:
    values = [v for v in dataset.column(column) if v is not None]
    if not values:
        raise EmptyDatasetError(f"no observed values in column {column!r}")
    cats, counts = np.unique(np.array(values, dtype=object), return_counts=True)
    return {str(c): int(k) / len(values) for c, k in zip(cats, counts)}


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    support = sorted(set(p) | set(q))
    return 0.5 * sum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in support)


def drift_check(
    training: Dataset,
    production: Dataset,
    attrs: Sequence[ProtectedAttribute],
    threshold: float = DEFAULT_DRIFT_THRESHOLD,
) -> DriftReport:
    """Total variation distance between training and production class distributions."""
    out = []
    for attr in attrs:
        p = category_distribution(training, attr.column)
        q = category_distribution(production, attr.column)
        tvd = total_variation(p, q)
        out.append(AttributeDrift(attr.column, p, q, tvd, tvd > threshold))
    return DriftReport(threshold, tuple(out))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _plain(doc: Any) -> Any:
    """Normalise to exactly what a JSON round trip produces."""
    return json.loads(json.dumps(doc, sort_keys=True))


@dataclass(frozen=True)
class LayerSection:
    layer: int
    name: str
    verdict: LayerVerdict
    details: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "details", _plain(dict(self.details)))

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer, "name": self.name, "checklist": self.verdict.to_dict(), "details": self.details}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "LayerSection":
        return cls(int(doc["layer"]), doc["name"], LayerVerdict.from_dict(doc["checklist"]), doc["details"])


@dataclass(frozen=True)
class AuditReport:
    metadata: Mapping[str, Any]
    layers: tuple[LayerSection, ...]
    dataset_metrics: MetricReport
    model_metrics: MetricReport
    model_metrics_full: MetricReport
    performance: PerfReport
    rating: RatingResult
    tolerance: float
    certified: bool
    verdict: str
    mitigated_metrics: MetricReport | None = None
    drift: DriftReport | None = None

    def __post_init__(self):
        object.__setattr__(self, "metadata", _plain(dict(self.metadata)))

    def layer(self, number: int) -> LayerSection:
        return self.layers[number - 1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "metadata": self.metadata,
            "verdict": self.verdict,
            "certified": self.certified,
            "tolerance": self.tolerance,
            "layers": [s.to_dict() for s in self.layers],
            "metrics": {
                "dataset": self.dataset_metrics.to_dict(),
                "dataset_mitigated": None if self.mitigated_metrics is None else self.mitigated_metrics.to_dict(),
                "model_test": self.model_metrics.to_dict(),
                "model_full": self.model_metrics_full.to_dict(),
            },
            "performance": self.performance.to_dict(),
            "rating": self.rating.to_dict(),
            "drift": None if self.drift is None else self.drift.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "AuditReport":
        m = doc["metrics"]
        return cls(
            metadata=doc["metadata"],
            layers=tuple(LayerSection.from_dict(s) for s in doc["layers"]),
            dataset_metrics=MetricReport.from_dict(m["dataset"]),
            model_metrics=MetricReport.from_dict(m["model_test"]),
            model_metrics_full=MetricReport.from_dict(m["model_full"]),
            performance=PerfReport.from_dict(doc["performance"]),
            rating=RatingResult.from_dict(doc["rating"]),
            tolerance=float(doc["tolerance"]),
            certified=bool(doc["certified"]),
            verdict=doc["verdict"],
            mitigated_metrics=None if m["dataset_mitigated"] is None else MetricReport.from_dict(m["dataset_mitigated"]),
            drift=None if doc["drift"] is None else DriftReport.from_dict(doc["drift"]),
        )


def overall_verdict(layer_verdicts: Sequence[str], bias: float, tolerance: float) -> str:
    if INCOMPLETE in layer_verdicts:
        return INCOMPLETE
    if FAIL in layer_verdicts or bias > tolerance:
        return FAIL
    return PASS


def _group_balance(dataset: Dataset, attrs: Sequence[ProtectedAttribute]) -> dict[str, Any]:
    out = {}
    for attr in attrs:
        groups = attr.membership(dataset)
        known = groups >= 0
        total = int(known.sum())
        out[attr.column] = {
            g: {
                "rows": int((groups == code).sum()),
                "share": float((groups == code).sum() / total) if total else None,
                "favorable_rate": float(dataset.labels[groups == code].mean()) if (groups == code).any() else None,
            }
            for code, g in ((1, GROUPS[0]), (0, GROUPS[1]))
        }
    return out


def _metric_deltas(before: MetricReport, after: MetricReport) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for entry in after.attributes:
        row = {}
        for v in entry.values:
            try:
                prior = before.value(entry.attribute, v.metric)
            except KeyError:
                continue
            row[v.metric] = UNDEFINED if v.value is None or prior is None else v.value - prior
        out[entry.attribute] = row
    return out


def run_audit(config: AuditConfig, now: Callable[[], datetime] | None = None) -> AuditReport:
    """Run all seven layers in order and assemble the report.

    Mitigation is reported on the full dataset in layer 3 and applied to the
    training split only in layer 5, so test rows keep their original weights.
    Model-level metrics come from the test split (``model_test``) and, for
    reference, from every row (``model_full``).
    """
    now = now or (lambda: datetime.now(timezone.utc))
    attrs = config.attributes
    if not attrs:
        raise ConfigError("an audit needs at least one protected attribute")
    if config.split.test <= 0:
        raise ConfigError("an audit needs a non-empty test split")

    try:
        defs = load_definitions(config.checklist_definitions)
        if config.required_overrides:
            defs = apply_overrides(defs, config.required_overrides)
    except FairLayersError as exc:
        raise LayerError(1, exc) from exc
    by_layer = {d.layer: d for d in defs}

    def checklist(layer: int) -> LayerVerdict:
        definition = by_layer.get(layer)
        if definition is None:
            raise ConfigError(f"no checklist definition for layer {layer}")
        path = config.checklists.get(layer)
        response = ChecklistResponse.load(path) if path else ChecklistResponse(layer)
        if path is None:
            log.warning("no checklist responses for layer %d", layer)
        return evaluate_layer(definition, response)

    def step(layer: int, fn: Callable[[], Any]) -> Any:
        try:
            return fn()
        except LayerError:
            raise
        except (FairLayersError, OSError, ValueError) as exc:
            raise LayerError(layer, exc) from exc

    sections: list[LayerSection] = []
    model_selection = tuple(dict.fromkeys(RATE_METRICS + config.model_metrics))

    # layer 1: requirements, context, purpose
    sections.append(LayerSection(1, LAYER_NAMES[1], step(1, lambda: checklist(1))))

    # layer 2: data selection
    def layer2():
        data = config.dataset.load()
        report = validate(data, config.validation_threshold)
        prof = profile(data, attrs)
        metrics = evaluate_all(data, attrs, metrics=config.dataset_metrics)
        return data, report, prof, metrics

    verdict2 = step(2, lambda: checklist(2))
    data, validation, prof, dataset_metrics = step(2, layer2)
    sections.append(
        LayerSection(2, LAYER_NAMES[2], verdict2, {"validation": validation.to_dict(), "profile": prof.to_dict()})
    )

    # layer 3: pre-processing and mitigation
    verdict3 = step(3, lambda: checklist(3))
    mitigated_metrics = None
    details3: dict[str, Any] = {"mitigation": None}
    if config.mitigation:
        mitigated = step(3, lambda: config.mitigation.apply(data, attrs))
        mitigated_metrics = step(3, lambda: evaluate_all(mitigated, attrs, metrics=config.dataset_metrics))
        details3 = {
            "mitigation": json.loads(mitigated.provenance["mitigation"]),
            "rows_before": data.n,
            "rows_after": mitigated.n,
        }
    sections.append(LayerSection(3, LAYER_NAMES[3], verdict3, details3))

    # layer 4: algorithm
    sections.append(LayerSection(4, LAYER_NAMES[4], step(4, lambda: checklist(4))))

    # layer 5: training and model-level fairness
    def layer5():
        stratify_by = attrs[0] if config.split.strategy != "random" else None
        tr_idx, te_idx, va_idx = split_indices(data, config.split, stratify_by)
        train_set, test_set = data.take(tr_idx), data.take(te_idx)
        fit_set = config.mitigation.apply(train_set, attrs) if config.mitigation else train_set
        model = train(fit_set, config.model)
        test_pred = predict(model, test_set).labels
        full_pred = predict(model, data).labels
        model_metrics = evaluate_all(test_set, attrs, test_pred, model_selection)
        full_metrics = evaluate_all(data, attrs, full_pred, model_selection)
        perf = performance(test_set.labels, test_pred, test_set.weights)
        details = {
            "split": {
                **config.split.to_dict(),
                "sizes": {"train": len(tr_idx), "test": len(te_idx), "validation": len(va_idx)},
                "balance": {
                    "train": _group_balance(train_set, attrs),
                    "test": _group_balance(test_set, attrs),
                },
            },
            "training": {
                "config": config.model.to_dict(),
                "iterations": model.iterations,
                "converged": model.converged,
                "final_loss": model.loss_log[-1] if model.loss_log else None,
                "excluded_rows": model.excluded_rows,
                "mitigated": config.mitigation is not None,
            },
        }
        if len(va_idx):
            val_set = data.take(va_idx)
            details["validation_performance"] = performance(
                val_set.labels, predict(model, val_set).labels, val_set.weights
            ).to_dict()
            details["split"]["balance"]["validation"] = _group_balance(val_set, attrs)
        return train_set, model, model_metrics, full_metrics, perf, details

    verdict5 = step(5, lambda: checklist(5))
    train_set, model, model_metrics, full_metrics, perf, details5 = step(5, layer5)
    sections.append(LayerSection(5, LAYER_NAMES[5], verdict5, details5))

    # layer 6: independent audit and rating
    def layer6():
        rated = [mitigated_metrics or dataset_metrics, model_metrics]
        selection = {DATASET_LEVEL: config.dataset_metrics, MODEL_LEVEL: config.model_metrics}
        return fairness_score([bias_index(rated, a.column, selection) for a in attrs])

    verdict6 = step(6, lambda: checklist(6))
    rating = step(6, layer6)
    certified = rating.certified(config.tolerance)
    sections.append(
        LayerSection(6, LAYER_NAMES[6], verdict6, {"tolerance": config.tolerance, "certified": certified})
    )

    # layer 7: usage
    verdict7 = step(7, lambda: checklist(7))
    drift = None
    details7: dict[str, Any] = {"retraining_policy": config.retraining_policy}
    if config.production is not None:

        def layer7():
            prod = config.production.load()
            report = drift_check(train_set, prod, attrs, config.drift_threshold)
            prod_metrics = evaluate_all(
                prod, attrs, predict(model, prod).labels, model_selection
            )
            return report, prod_metrics

        drift, prod_metrics = step(7, layer7)
        details7["production_metrics"] = prod_metrics.to_dict()
        details7["metric_deltas"] = _metric_deltas(model_metrics, prod_metrics)
    sections.append(LayerSection(7, LAYER_NAMES[7], verdict7, details7))

    verdict = overall_verdict([s.verdict.verdict for s in sections], rating.bias_index, config.tolerance)
    metadata = {
        "timestamp": now().isoformat(),
        "tool": "fairlayers",
        "tool_version": __version__,
        "config_digest": config.digest,
        "seeds": {"split": config.split.seed, "model": config.model.seed},
    }
    return AuditReport(
        metadata=metadata,
        layers=tuple(sections),
        dataset_metrics=dataset_metrics,
        model_metrics=model_metrics,
        model_metrics_full=full_metrics,
        performance=perf,
        rating=rating,
        tolerance=config.tolerance,
        certified=certified,
        verdict=verdict,
        mitigated_metrics=mitigated_metrics,
        drift=drift,
    )


def seed_sweep(config: AuditConfig, seeds: Sequence[int], metrics: Sequence[str] = ("DI", "EMOD")) -> dict[str, Any]:
    """Re-run the audit under each seed and summarise model-level metrics.

    The seed replaces the split, model and mitigation seeds. Medians skip
    undefined values.
    """
    runs = []
    for seed in seeds:
        cfg = replace(
            config,
            split=replace(config.split, seed=seed),
            model=replace(config.model, seed=seed),
            mitigation=replace(config.mitigation, seed=seed) if config.mitigation else None,
        )
        report = run_audit(cfg, now=lambda: datetime(1970, 1, 1, tzinfo=timezone.utc))
        values = {
            a.column: {m: report.model_metrics.value(a.column, m) for m in metrics} for a in config.attributes
        }
        runs.append({"seed": seed, "bias_index": report.rating.bias_index, "model_test": values})
    medians: dict[str, Any] = {}
    for a in config.attributes:
        medians[a.column] = {}
        for m in metrics:
            vals = [r["model_test"][a.column][m] for r in runs if r["model_test"][a.column][m] is not None]
            medians[a.column][m] = float(np.median(vals)) if vals else UNDEFINED
    for r in runs:
        for row in r["model_test"].values():
            for m, v in row.items():
                row[m] = UNDEFINED if v is None else v
    return {
        "seeds": list(seeds),
        "runs": runs,
        "median": medians,
        "median_bias_index": float(np.median([r["bias_index"] for r in runs])),
    }


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if value is None or value == UNDEFINED:
        return "undefined"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def _metric_table(report: MetricReport) -> list[str]:
    metrics = []
    for a in report.attributes:
        for v in a.values:
            if v.metric not in metrics:
                metrics.append(v.metric)
    lines = ["| attribute | " + " | ".join(metrics) + " |", "|---" * (len(metrics) + 1) + "|"]
    for a in report.attributes:
        cells = []
        for m in metrics:
            try:
                cells.append(_fmt(a.get(m).value))
            except KeyError:
                cells.append("")
        lines.append(f"| {a.attribute} | " + " | ".join(cells) + " |")
        if a.error:
            lines.append(f"| {a.attribute} (error) | {a.error} |")
    return lines


def render_markdown(report: AuditReport) -> str:
    md = report.metadata
    lines = [
        "# Fairness audit report",
        "",
        f"- Overall verdict: **{report.verdict}**",
        f"- Certified (Bias Index <= {_fmt(report.tolerance)}): {'yes' if report.certified else 'no'}",
        f"- Tool: {md.get('tool')} {md.get('tool_version')}",
        f"- Config digest: `{md.get('config_digest')}`",
        f"- Timestamp: {md.get('timestamp')}",
        "",
        "## Layer verdicts",
        "",
        "| layer | name | checklist | failing | missing |",
        "|---|---|---|---|---|",
    ]
    for s in report.layers:
        v = s.verdict
        lines.append(
            f"| {s.layer} | {s.name} | {v.verdict} | {', '.join(v.failing) or '-'} | {', '.join(v.missing) or '-'} |"
        )

    lines += ["", "## Dataset-level metrics", "", *_metric_table(report.dataset_metrics)]
    if report.mitigated_metrics is not None:
        mit = report.layer(3).details.get("mitigation") or {}
        lines += ["", f"## Dataset-level metrics after mitigation ({mit.get('method')})", ""]
        lines += _metric_table(report.mitigated_metrics)
    lines += ["", "## Model-level metrics (test split)", "", *_metric_table(report.model_metrics)]
    lines += ["", "## Model-level metrics (all rows)", "", *_metric_table(report.model_metrics_full)]

    p = report.performance
    lines += [
        "",
        "## Model performance (test split)",
        "",
        "| accuracy | precision | recall | f1 |",
        "|---|---|---|---|",
        f"| {_fmt(p.accuracy)} | {_fmt(p.precision)} | {_fmt(p.recall)} | {_fmt(p.f1)} |",
    ]

    r = report.rating
    lines += [
        "",
        "## Rating",
        "",
        f"- Bias Index: {_fmt(r.bias_index)}",
        f"- Fairness Score: {_fmt(r.fairness_score)}",
        "",
        "| attribute | metric | level | value | deviation |",
        "|---|---|---|---|---|",
    ]
    for a in r.per_attribute:
        for d in a.deviations:
            lines.append(f"| {a.attribute} | {d.metric} | {d.level} | {_fmt(d.value)} | {_fmt(d.deviation)} |")
        lines.append(f"| {a.attribute} | **Bias Index** | | | {_fmt(a.bias_index)} |")

    lines += ["", "## Usage monitoring", ""]
    if report.drift is None:
        lines.append("No production data supplied.")
    else:
        lines += [
            f"Drift threshold (total variation distance): {_fmt(report.drift.threshold)}",
            "",
            "| attribute | TVD | flagged |",
            "|---|---|---|",
        ]
        for a in report.drift.attributes:
            lines.append(f"| {a.attribute} | {_fmt(a.tvd)} | {'yes' if a.flagged else 'no'} |")
    policy = report.layer(7).details.get("retraining_policy")
    lines.append("")
    lines.append(f"Retraining policy: {policy or 'not stated'}")
    return "\n".join(lines) + "\n"


def render_json(report: AuditReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_report(report: AuditReport, fmt: str = "json") -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "markdown":
        return render_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> AuditReport:
    return AuditReport.from_dict(json.loads(text))
