import json
import warnings

import pytest

from fairlayers.checklist import (
    FAIL,
    INCOMPLETE,
    MANIFEST,
    PASS,
    ChecklistCountWarning,
    ChecklistDefinition,
    ChecklistItem,
    ChecklistResponse,
    ItemResponse,
    LayerVerdict,
    apply_overrides,
    dump_definitions,
    evaluate_layer,
    load_definitions,
    validate_response,
)
from fairlayers.errors import ChecklistError, UnknownItemError

from conftest import FIXTURES


@pytest.fixture(scope="module")
def defs():
    return {d.layer: d for d in load_definitions()}


def all_satisfied(definition):
    items = {}
    for it in definition.items:
        items[it.id] = ItemResponse("satisfied", "answered", ("ref",))
    return ChecklistResponse(definition.layer, items)


def test_bundled_counts(defs):
    assert {k: len(d.items) for k, d in defs.items()} == MANIFEST
    ids = [i.id for d in defs.values() for i in d.items]
    assert len(ids) == len(set(ids)) == 53


def test_layer2_has_two_sections(defs):
    sections = [i.section for i in defs[2].items]
    assert sections.count("selection") == 9 and sections.count("labelling") == 3


def test_definitions_round_trip(tmp_path, defs):
    p = tmp_path / "defs.json"
    p.write_text(dump_definitions(list(defs.values())))
    assert {d.layer: d for d in load_definitions(p)} == defs


def test_count_mismatch_warns(tmp_path, defs):
    doc = json.loads(dump_definitions(list(defs.values())))
    doc["layers"][0]["items"].pop()
    p = tmp_path / "defs.json"
    p.write_text(json.dumps(doc))
    with pytest.warns(ChecklistCountWarning):
        loaded = load_definitions(p)
    assert len(loaded[0].items) == 11


def test_duplicate_ids_rejected(tmp_path):
    doc = {"layers": [{"layer": 9, "name": "x", "items": [{"id": "a", "question": "?"}, {"id": "a", "question": "?"}]}]}
    p = tmp_path / "d.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ChecklistError, match="duplicate"):
        load_definitions(p)


def test_unknown_kind_rejected(tmp_path):
    doc = {"layers": [{"layer": 9, "name": "x", "items": [{"id": "a", "question": "?", "kind": "scale"}]}]}
    p = tmp_path / "d.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ChecklistError):
        load_definitions(p)


def test_all_satisfied_passes(defs):
    for d in defs.values():
        assert evaluate_layer(d, all_satisfied(d)).verdict == PASS


def test_empty_response_is_incomplete(defs):
    v = evaluate_layer(defs[6], ChecklistResponse(6))
    assert v.verdict == INCOMPLETE and len(v.missing) == 4


def test_not_satisfied_fails(defs):
    r = all_satisfied(defs[6])
    items = dict(r.items)
    items["L6.Q01"] = ItemResponse("not-satisfied")
    v = evaluate_layer(defs[6], ChecklistResponse(6, items))
    assert v.verdict == FAIL and v.failing == ("L6.Q01",)


def test_incomplete_wins_over_fail(defs):
    items = {"L6.Q01": ItemResponse("not-satisfied")}
    assert evaluate_layer(defs[6], ChecklistResponse(6, items)).verdict == INCOMPLETE


def test_not_applicable_needs_reason(defs):
    items = dict(all_satisfied(defs[6]).items)
    items["L6.Q01"] = ItemResponse("not-applicable")
    viol = validate_response(defs[6], ChecklistResponse(6, items))
    assert [v.item_id for v in viol] == ["L6.Q01"]
    with pytest.raises(ChecklistError):
        evaluate_layer(defs[6], ChecklistResponse(6, items))
    items["L6.Q01"] = ItemResponse("not-applicable", "in-house audit is not used")
    assert evaluate_layer(defs[6], ChecklistResponse(6, items)).verdict == PASS


def test_evidence_and_narrative_rules():
    d = ChecklistDefinition(
        9, "t", (ChecklistItem("e", "?", "boolean+evidence"), ChecklistItem("n", "?", "narrative"))
    )
    r = ChecklistResponse(9, {"e": ItemResponse("satisfied"), "n": ItemResponse("satisfied")})
    assert sorted(v.item_id for v in validate_response(d, r)) == ["e", "n"]


def test_unknown_item(defs):
    with pytest.raises(UnknownItemError):
        validate_response(defs[6], ChecklistResponse(6, {"L9.Q01": ItemResponse("satisfied")}))


def test_layer_mismatch(defs):
    with pytest.raises(ChecklistError):
        validate_response(defs[6], ChecklistResponse(5))


def test_optional_items_do_not_gate(defs):
    relaxed = {d.layer: d for d in apply_overrides(list(defs.values()), {"L6.Q01": False})}
    items = dict(all_satisfied(defs[6]).items)
    del items["L6.Q01"]
    assert evaluate_layer(relaxed[6], ChecklistResponse(6, items)).verdict == PASS
    with pytest.raises(UnknownItemError):
        apply_overrides(list(defs.values()), {"nope": False})


def test_response_parsing_errors():
    with pytest.raises(ChecklistError):
        ChecklistResponse.from_dict({"layer": 1, "items": {"a": {"status": "maybe"}}})
    with pytest.raises(ChecklistError):
        ChecklistResponse.from_dict({"items": {}})


def test_case_study_responses(defs):
    expected = {1: FAIL, 2: FAIL, 3: PASS, 4: PASS, 5: PASS, 6: PASS, 7: FAIL}
    for layer, verdict in expected.items():
        r = ChecklistResponse.load(FIXTURES / "german" / "responses" / f"layer{layer}.json")
        assert evaluate_layer(defs[layer], r).verdict == verdict


def test_response_and_verdict_round_trip(defs):
    r = all_satisfied(defs[3])
    assert ChecklistResponse.from_dict(json.loads(json.dumps(r.to_dict()))) == r
    v = evaluate_layer(defs[3], r)
    assert LayerVerdict.from_dict(v.to_dict()) == v


def test_no_warning_for_bundled_set():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        load_definitions()
