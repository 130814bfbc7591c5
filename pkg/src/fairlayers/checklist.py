"""Per-layer fairness checklists and gating of auditor responses.

The bundled definitions hold the 53 questions of the seven lifecycle layers.
A response records, per item, whether the check is satisfied (the concern the
question raises has been addressed), not the literal yes/no answer to it.

Gating policy: a layer passes when every required item is satisfied or
justified as not applicable; it is incomplete while any required item is
unanswered; otherwise it fails. Narrative items only count as satisfied with a
non-empty justification.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import ChecklistError, UnknownItemError

log = logging.getLogger(__name__)

BOOLEAN = "boolean"
NARRATIVE = "narrative"
EVIDENCE = "boolean+evidence"
ITEM_KINDS = (BOOLEAN, NARRATIVE, EVIDENCE)

SATISFIED = "satisfied"
NOT_SATISFIED = "not-satisfied"
NOT_APPLICABLE = "not-applicable"
UNANSWERED = "unanswered"
STATUSES = (SATISFIED, NOT_SATISFIED, NOT_APPLICABLE, UNANSWERED)

PASS = "pass"
FAIL = "fail"
INCOMPLETE = "incomplete"

# item counts of the bundled lifecycle checklist, by layer
MANIFEST = {1: 12, 2: 12, 3: 7, 4: 6, 5: 7, 6: 4, 7: 5}


class ChecklistCountWarning(UserWarning):
    """A loaded layer's item count differs from the bundled manifest."""


@dataclass(frozen=True)
class ChecklistItem:
    id: str
    question: str
    kind: str = BOOLEAN
    required: bool = True
    section: str | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"id": self.id, "question": self.question, "kind": self.kind, "required": self.required}
        if self.section:
            doc["section"] = self.section
        return doc


@dataclass(frozen=True)
class ChecklistDefinition:
    layer: int
    name: str
    items: tuple[ChecklistItem, ...]

    def item(self, item_id: str) -> ChecklistItem:
        for it in self.items:
            if it.id == item_id:
                return it
        raise UnknownItemError(f"layer {self.layer} has no item {item_id!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer, "name": self.name, "items": [i.to_dict() for i in self.items]}


def _parse_definitions(doc: Mapping[str, Any]) -> list[ChecklistDefinition]:
    try:
        layers = doc["layers"]
    except (KeyError, TypeError):
        raise ChecklistError("definition document needs a 'layers' list") from None
    seen: set[str] = set()
    defs = []
    for entry in layers:
        try:
            layer = int(entry["layer"])
            items = []
            for raw in entry["items"]:
                item = ChecklistItem(
                    id=str(raw["id"]),
                    question=str(raw["question"]),
                    kind=raw.get("kind", BOOLEAN),
                    required=bool(raw.get("required", True)),
                    section=raw.get("section"),
                )
                if item.kind not in ITEM_KINDS:
                    raise ChecklistError(f"item {item.id!r}: unknown kind {item.kind!r}")
                if item.id in seen:
                    raise ChecklistError(f"duplicate item id {item.id!r}")
                seen.add(item.id)
                items.append(item)
            defs.append(ChecklistDefinition(layer, str(entry["name"]), tuple(items)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ChecklistError(f"malformed layer entry: {exc}") from exc
    for d in defs:
        expected = MANIFEST.get(d.layer)
        if expected is not None and expected != len(d.items):
            msg = f"layer {d.layer} declares {len(d.items)} items; the lifecycle manifest has {expected}"
            log.warning(msg)
            warnings.warn(msg, ChecklistCountWarning, stacklevel=3)
    return sorted(defs, key=lambda d: d.layer)


def load_definitions(source: str | Path | None = None) -> list[ChecklistDefinition]:
    """Load checklist definitions from a JSON file, or the bundled set when ``source`` is None.

    Count mismatches against the manifest are permitted for custom checklists
    and raise :class:`ChecklistCountWarning` instead of failing.
    """
    if source is None:
        text = resources.files("fairlayers").joinpath("data/checklist.json").read_text(encoding="utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChecklistError(f"checklist definitions are not valid JSON: {exc}") from exc
    return _parse_definitions(doc)


def dump_definitions(defs: Sequence[ChecklistDefinition]) -> str:
    return json.dumps({"version": 1, "layers": [d.to_dict() for d in defs]}, indent=2, ensure_ascii=False) + "\n"


def apply_overrides(defs: Sequence[ChecklistDefinition], required: Mapping[str, bool]) -> list[ChecklistDefinition]:
    """Return definitions with per-item ``required`` flags replaced."""
    known = {i.id for d in defs for i in d.items}
    unknown = sorted(set(required) - known)
    if unknown:
        raise UnknownItemError(f"overrides name unknown items: {unknown}")
    return [
        replace(d, items=tuple(replace(i, required=required.get(i.id, i.required)) for i in d.items)) for d in defs
    ]


@dataclass(frozen=True)
class ItemResponse:
    status: str = UNANSWERED
    justification: str = ""
    evidence: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status, "justification": self.justification, "evidence": list(self.evidence)}


@dataclass(frozen=True)
class ChecklistResponse:
    layer: int
    items: Mapping[str, ItemResponse] = field(default_factory=dict)

    def get(self, item_id: str) -> ItemResponse:
        return self.items.get(item_id, ItemResponse())

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ChecklistResponse":
        try:
            items = {}
            for item_id, raw in doc.get("items", {}).items():
                status = raw.get("status", UNANSWERED)
                if status not in STATUSES:
                    raise ChecklistError(f"item {item_id!r}: unknown status {status!r}")
                items[item_id] = ItemResponse(status, raw.get("justification", "") or "", tuple(raw.get("evidence", ())))
            return cls(int(doc["layer"]), items)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ChecklistError(f"malformed checklist response: {exc}") from exc

    @classmethod
    def load(cls, path: str | Path) -> "ChecklistResponse":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ChecklistError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer, "items": {k: v.to_dict() for k, v in sorted(self.items.items())}}


@dataclass(frozen=True)
class Violation:
    item_id: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"item": self.item_id, "message": self.message}


def validate_response(definition: ChecklistDefinition, response: ChecklistResponse) -> list[Violation]:
    """Check response invariants; raises :class:`UnknownItemError` for foreign ids."""
    if response.layer != definition.layer:
        raise ChecklistError(f"response for layer {response.layer} checked against layer {definition.layer}")
    for item_id in response.items:
        definition.item(item_id)
    out = []
    for item in definition.items:
        r = response.get(item.id)
        has_reason = bool(r.justification.strip())
        if r.status == NOT_APPLICABLE and not has_reason:
            out.append(Violation(item.id, "not-applicable needs a justification"))
        if r.status == SATISFIED and item.kind == EVIDENCE and not r.evidence:
            out.append(Violation(item.id, "satisfied evidence item needs at least one evidence reference"))
        if r.status == SATISFIED and item.kind == NARRATIVE and not has_reason:
            out.append(Violation(item.id, "narrative item needs a written answer"))
    return out


@dataclass(frozen=True)
class LayerVerdict:
    layer: int
    verdict: str
    failing: tuple[str, ...] = ()
    missing: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"layer": self.layer, "verdict": self.verdict, "failing": list(self.failing), "missing": list(self.missing)}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "LayerVerdict":
        return cls(int(doc["layer"]), doc["verdict"], tuple(doc["failing"]), tuple(doc["missing"]))


def evaluate_layer(definition: ChecklistDefinition, response: ChecklistResponse) -> LayerVerdict:
    violations = validate_response(definition, response)
    if violations:
        listed = "; ".join(f"{v.item_id}: {v.message}" for v in violations)
        raise ChecklistError(f"layer {definition.layer} response is invalid: {listed}")
    failing, missing = [], []
    for item in definition.items:
        if not item.required:
            continue
        status = response.get(item.id).status
        if status == UNANSWERED:
            missing.append(item.id)
        elif status == NOT_SATISFIED:
            failing.append(item.id)
    if missing:
        verdict = INCOMPLETE
    elif failing:
        verdict = FAIL
    else:
        verdict = PASS
    return LayerVerdict(definition.layer, verdict, tuple(failing), tuple(missing))
