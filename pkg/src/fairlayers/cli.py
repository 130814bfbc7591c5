"""Command-line interface.

Exit status: 0 success or pass, 1 the command ran but the verdict is fail or
incomplete, 2 usage error, 3 runtime error. Machine output goes to stdout or
``--out``; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from .checklist import PASS, ChecklistResponse, apply_overrides, evaluate_layer, load_definitions, validate_response
from .dataset import CsvOptions, Dataset, Schema, dump_csv, load_csv, profile, validate
from .errors import ConfigError, FairLayersError
from .metrics import DATASET_LEVEL, MODEL_LEVEL, RATE_METRICS, MetricReport, evaluate_all
from .mitigation import resample, reweigh
from .model import TrainedModel, performance, predict, split_indices, train
from .pipeline import AuditConfig, drift_check, parse_report, render_markdown, render_report, run_audit, seed_sweep
from .rating import bias_index, fairness_score

log = logging.getLogger("fairlayers")

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3

GERMAN_URL = "https://archive.ics.uci.edu/dataset/144/statlog+german+credit+data"
GERMAN_FILE = "german.data"
GERMAN_SHA256 = "b21f3d81db8071257d5ff1deaeba1fd4303b62712e6fcc9715c7a86202cb5871"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _markdown(doc: Any, title: str) -> str:
    lines = [f"# {title}", ""]

    def walk(value: Any, depth: int, key: str | None) -> None:
        indent = "  " * depth
        label = f"**{key}**: " if key is not None else ""
        if isinstance(value, dict):
            if key is not None:
                lines.append(f"{indent}- **{key}**")
                depth += 1
            for k, v in value.items():
                walk(v, depth, str(k))
        elif isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value):
            if key is not None:
                lines.append(f"{indent}- **{key}**")
                depth += 1
            for i, v in enumerate(value):
                walk(v, depth, str(i))
        else:
            if isinstance(value, float):
                value = f"{value:.4f}"
            elif isinstance(value, list):
                value = ", ".join(str(v) for v in value) or "-"
            elif value is None:
                value = "-"
            lines.append(f"{indent}- {label}{value}")

    walk(doc, 0, None)
    return "\n".join(lines) + "\n"


def _emit(args: argparse.Namespace, doc: Any, title: str, text: str | None = None) -> None:
    if text is None:
        if args.format == "markdown":
            text = _markdown(doc, title)
        else:
            text = json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write(text)


def _config(args: argparse.Namespace) -> AuditConfig:
    if not args.config:
        raise UsageError(f"{args.command} needs --config")
    return AuditConfig.load(args.config, seed=args.seed)


def _dataset(args: argparse.Namespace, config: AuditConfig) -> Dataset:
    """The config's dataset, or ``--data``/``--schema`` when given."""
    data_path = getattr(args, "data", None)
    if not data_path:
        return config.dataset.load()
    schema = Schema.from_json(args.schema) if getattr(args, "schema", None) else config.dataset.schema
    options = CsvOptions() if getattr(args, "schema", None) else config.dataset.options
    return load_csv(data_path, schema, options, {"source": str(data_path)})


def _parts(config: AuditConfig, data: Dataset) -> dict[str, Dataset]:
    stratify = config.attributes[0] if config.split.strategy != "random" and config.attributes else None
    indices = dict(zip(("train", "test", "validation"), split_indices(data, config.split, stratify)))
    parts = {name: data.take(idx) for name, idx in indices.items() if len(idx)}
    parts["all"] = data
    return parts


def _part(parts: dict[str, Dataset], name: str) -> Dataset:
    if name not in parts:
        raise ConfigError(f"the {name} split is empty under this config")
    return parts[name]


def _attribute(config: AuditConfig, name: str | None):
    if not config.attributes:
        raise ConfigError("config lists no protected attributes")
    if name is None:
        return config.attributes[0]
    for a in config.attributes:
        if a.column == name:
            return a
    raise ConfigError(f"{name!r} is not a configured protected attribute")


def _model_for(args: argparse.Namespace, config: AuditConfig, parts: dict[str, Dataset]) -> TrainedModel:
    if getattr(args, "model", None):
        return TrainedModel.load(args.model)
    fit = _part(parts, "train")
    if config.mitigation:
        fit = config.mitigation.apply(fit, config.attributes)
    return train(fit, config.model)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_inspect(args: argparse.Namespace) -> int:
    config = _config(args)
    data = _dataset(args, config)
    report = validate(data, config.validation_threshold)
    doc = {
        "rows": data.n,
        "provenance": dict(data.provenance),
        "validation": report.to_dict(),
        "profile": profile(data, config.attributes).to_dict(),
    }
    _emit(args, doc, "Dataset inspection")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    config = _config(args)
    data = _dataset(args, config)
    if args.model or args.level == MODEL_LEVEL:
        parts = _parts(config, data)
        model = _model_for(args, config, parts)
        target = _part(parts, args.part)
        pred = predict(model, target).labels
        selection = tuple(dict.fromkeys(RATE_METRICS + config.model_metrics))
        report = evaluate_all(target, config.attributes, pred, selection)
    else:
        report = evaluate_all(data, config.attributes, metrics=config.dataset_metrics)
    _emit(args, report.to_dict(), "Fairness metrics")
    return EXIT_OK


def cmd_mitigate(args: argparse.Namespace) -> int:
    config = _config(args)
    data = _dataset(args, config)
    method = args.method or (config.mitigation.method if config.mitigation else "reweigh")
    attr = _attribute(config, args.attribute or (config.mitigation.attribute if config.mitigation else None))
    if method == "reweigh":
        out = reweigh(data, attr)
    else:
        seed = args.seed if args.seed is not None else (config.mitigation.seed if config.mitigation else 0)
        out = resample(data, attr, args.strategy, seed)
    summary: dict[str, Any] = {
        "mitigation": json.loads(out.provenance["mitigation"]),
        "rows_before": data.n,
        "rows_after": out.n,
        "metrics_before": evaluate_all(data, [attr], metrics=config.dataset_metrics).to_dict(),
        "metrics_after": evaluate_all(out, [attr], metrics=config.dataset_metrics).to_dict(),
    }
    if args.write_data:
        schema = dump_csv(out, args.write_data)
        schema_path = Path(str(args.write_data) + ".schema.json")
        schema_path.write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")
        summary["written"] = {"data": str(args.write_data), "schema": str(schema_path)}
        log.info("wrote mitigated dataset to %s", args.write_data)
    _emit(args, summary, "Mitigation")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    parts = _parts(config, _dataset(args, config))
    model = _model_for(args, config, parts)
    log.info("trained for %d iterations (converged: %s)", model.iterations, model.converged)
    _emit(args, model.to_dict(), "Trained model")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    config = _config(args)
    parts = _parts(config, _dataset(args, config))
    model = _model_for(args, config, parts)
    _emit(args, {"part": args.part, **predict(model, _part(parts, args.part)).to_dict()}, "Predictions")
    return EXIT_OK


def cmd_perf(args: argparse.Namespace) -> int:
    config = _config(args)
    parts = _parts(config, _dataset(args, config))
    model = _model_for(args, config, parts)
    target = _part(parts, args.part)
    perf = performance(target.labels, predict(model, target).labels, target.weights)
    _emit(args, {"part": args.part, **perf.to_dict()}, "Model performance")
    return EXIT_OK


def cmd_rate(args: argparse.Namespace) -> int:
    tolerance = args.tolerance
    if args.metrics:
        reports = [MetricReport.from_dict(json.loads(Path(p).read_text(encoding="utf-8"))) for p in args.metrics]
        names = list(dict.fromkeys(a.attribute for r in reports for a in r.attributes))
        rating = fairness_score([bias_index(reports, n) for n in names])
        if tolerance is None:
            tolerance = AuditConfig.__dataclass_fields__["tolerance"].default
    else:
        config = _config(args)
        data = _dataset(args, config)
        parts = _parts(config, data)
        model = _model_for(args, config, parts)
        test = _part(parts, "test")
        rated = config.mitigation.apply(data, config.attributes) if config.mitigation else data
        reports = [
            evaluate_all(rated, config.attributes, metrics=config.dataset_metrics),
            evaluate_all(test, config.attributes, predict(model, test).labels, config.model_metrics),
        ]
        selection = {DATASET_LEVEL: config.dataset_metrics, MODEL_LEVEL: config.model_metrics}
        rating = fairness_score([bias_index(reports, a.column, selection) for a in config.attributes])
        if tolerance is None:
            tolerance = config.tolerance
    certified = rating.certified(tolerance)
    _emit(args, {**rating.to_dict(), "tolerance": tolerance, "certified": certified}, "Fairness rating")
    return EXIT_OK if certified else EXIT_VERDICT


def _definitions(args: argparse.Namespace, config: AuditConfig | None):
    source = args.definitions or (config.checklist_definitions if config else None)
    defs = load_definitions(source)
    if config and config.required_overrides:
        defs = apply_overrides(defs, config.required_overrides)
    return {d.layer: d for d in defs}


def _responses(args: argparse.Namespace, config: AuditConfig | None) -> list[tuple[int, ChecklistResponse]]:
    if args.responses:
        r = ChecklistResponse.load(args.responses)
        if args.layer is not None and r.layer != args.layer:
            raise ConfigError(f"{args.responses} answers layer {r.layer}, not {args.layer}")
        return [(r.layer, r)]
    if config is None:
        raise UsageError("checklist needs --responses or --config")
    layers = [args.layer] if args.layer is not None else list(range(1, 8))
    out = []
    for layer in layers:
        path = config.checklists.get(layer)
        out.append((layer, ChecklistResponse.load(path) if path else ChecklistResponse(layer)))
    return out


def cmd_checklist(args: argparse.Namespace) -> int:
    config = AuditConfig.load(args.config, seed=args.seed) if args.config else None
    defs = _definitions(args, config)
    results = []
    ok = True
    for layer, response in _responses(args, config):
        if layer not in defs:
            raise ConfigError(f"no checklist definition for layer {layer}")
        if args.action == "validate":
            violations = validate_response(defs[layer], response)
            ok = ok and not violations
            results.append({"layer": layer, "valid": not violations, "violations": [v.to_dict() for v in violations]})
        else:
            verdict = evaluate_layer(defs[layer], response)
            ok = ok and verdict.verdict == PASS
            results.append(verdict.to_dict())
    _emit(args, {"action": args.action, "layers": results}, f"Checklist {args.action}")
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_drift(args: argparse.Namespace) -> int:
    config = _config(args)
    training = _dataset(args, config)
    if args.production:
        production = load_csv(args.production, config.dataset.schema, config.dataset.options)
    elif config.production is not None:
        production = config.production.load()
    else:
        raise UsageError("drift needs --production or a 'production' entry in the config")
    threshold = args.threshold if args.threshold is not None else config.drift_threshold
    report = drift_check(training, production, config.attributes, threshold)
    _emit(args, {**report.to_dict(), "flagged": report.flagged}, "Drift check")
    return EXIT_VERDICT if report.flagged else EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    config = _config(args)
    if args.tolerance is not None:
        config = replace(config, tolerance=args.tolerance)
    if args.action == "sweep":
        seeds = _seed_list(args.seeds)
        _emit(args, seed_sweep(config, seeds), "Seed sweep")
        return EXIT_OK
    report = run_audit(config)
    log.info("audit verdict: %s (Bias Index %.4f)", report.verdict, report.rating.bias_index)
    _emit(args, None, "Audit", render_report(report, args.format))
    return EXIT_OK if report.verdict == PASS else EXIT_VERDICT


def _seed_list(text: str) -> list[int]:
    seeds: list[int] = []
    try:
        for chunk in text.split(","):
            if "-" in chunk.strip()[1:]:
                lo, hi = chunk.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(chunk))
    except ValueError:
        raise UsageError(f"cannot parse seed list {text!r}") from None
    return seeds


def cmd_report(args: argparse.Namespace) -> int:
    text = Path(args.report).read_text(encoding="utf-8") if args.report != "-" else sys.stdin.read()
    report = parse_report(text)
    fmt = args.format or "markdown"
    _emit(args, None, "Audit", render_markdown(report) if fmt == "markdown" else render_report(report, "json"))
    return EXIT_OK


def cmd_fetch(args: argparse.Namespace) -> int:
    doc = {
        "dataset": "Statlog (German Credit Data)",
        "url": GERMAN_URL,
        "file": GERMAN_FILE,
        "sha256": GERMAN_SHA256,
        "rows": 1000,
        "instructions": f"Download {GERMAN_FILE}, then check it with: sha256sum {GERMAN_FILE}",
    }
    _emit(args, doc, "German Credit data")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, default_format: str | None = "json") -> None:
    p.add_argument("--config", help="audit config JSON")
    p.add_argument("--seed", type=int, help="overrides every seed in the config")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("json", "markdown"), default=default_format)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="dataset CSV overriding the config's dataset")
    p.add_argument("--schema", help="schema JSON for --data (read as a headed comma-separated file)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairlayers", description="Seven-layer fairness audit toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("inspect", help="validate and profile the dataset")
    _common(p)
    _data_flags(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("metrics", help="group-fairness metrics")
    _common(p)
    _data_flags(p)
    p.add_argument("--level", choices=(DATASET_LEVEL, MODEL_LEVEL), default=DATASET_LEVEL)
    p.add_argument("--model", help="trained model JSON; implies --level model")
    p.add_argument("--part", choices=("train", "test", "validation", "all"), default="test")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("mitigate", help="reweigh or resample")
    _common(p)
    _data_flags(p)
    p.add_argument("--method", choices=("reweigh", "resample"))
    p.add_argument("--attribute")
    p.add_argument("--strategy", choices=("oversample", "undersample"), default="oversample")
    p.add_argument("--write-data", help="write the mitigated dataset (with weights) to this CSV")
    p.set_defaults(func=cmd_mitigate)

    for name, func, helptext in (
        ("train", cmd_train, "train the reference classifier"),
        ("predict", cmd_predict, "predict with a trained model"),
        ("perf", cmd_perf, "accuracy, precision, recall and F1"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        _data_flags(p)
        if name != "train":
            p.add_argument("--model", help="trained model JSON; trains from the config when omitted")
            p.add_argument("--part", choices=("train", "test", "validation", "all"), default="test")
        p.set_defaults(func=func)

    p = sub.add_parser("rate", help="Bias Index and Fairness Score")
    _common(p)
    _data_flags(p)
    p.add_argument("--metrics", nargs="+", help="metric report JSON files to rate instead of the config")
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("checklist", help="validate or evaluate checklist responses")
    p.add_argument("action", choices=("validate", "evaluate"))
    _common(p)
    p.add_argument("--layer", type=int, choices=range(1, 8))
    p.add_argument("--responses", help="response JSON for one layer")
    p.add_argument("--definitions", help="custom checklist definitions JSON")
    p.set_defaults(func=cmd_checklist)

    p = sub.add_parser("drift", help="protected-class distribution drift")
    _common(p)
    _data_flags(p)
    p.add_argument("--production", help="production CSV read with the config's schema and options")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("audit", help="run the full seven-layer audit")
    p.add_argument("action", choices=("run", "sweep"))
    _common(p)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seeds", default="0-9", help="seed list for sweep, e.g. 0-9 or 1,5,7")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", help="render a saved JSON report")
    p.add_argument("action", choices=("render",))
    _common(p, default_format=None)
    p.add_argument("--report", required=True, help="report JSON, or - for stdin")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("fetch-instructions", help="where to obtain the German Credit data")
    _common(p)
    p.set_defaults(func=cmd_fetch)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fairlayers: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FairLayersError, OSError, ValueError, KeyError) as exc:
        print(f"fairlayers: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
