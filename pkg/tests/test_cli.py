import hashlib
import json
import subprocess
import sys

import pytest

from fairlayers.cli import main

from conftest import FIXTURES

T10 = str(FIXTURES / "t10" / "config.json")
GERMAN = str(FIXTURES / "german" / "audit.json")
RESPONSES = FIXTURES / "german" / "responses"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def values(report_doc):
    return {v["metric"]: v["value"] for v in report_doc["attributes"][0]["values"]}


def test_metrics_on_t10(capsys):
    code, out, err = run(capsys, "metrics", "--config", T10)
    assert code == 0 and err == ""
    v = values(json.loads(out))
    assert v["SPD"] == pytest.approx(-0.4167, abs=5e-5)
    assert v["DI"] == pytest.approx(0.375)


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    out, err = capsys.readouterr()
    assert info.value.code == 2 and out == "" and "usage:" in err


def test_unknown_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["metrics", "--config", T10, "--bogus"])
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_missing_config_is_usage_error(capsys):
    code, out, err = run(capsys, "metrics")
    assert code == 2 and out == "" and "usage:" in err


def test_runtime_error_status(capsys, tmp_path):
    code, out, err = run(capsys, "metrics", "--config", str(tmp_path / "missing.json"))
    assert code == 3 and out == "" and "error" in err


def test_checklist_evaluate_failing_item(capsys):
    code, out, _ = run(capsys, "checklist", "evaluate", "--responses", str(RESPONSES / "layer1.json"))
    assert code == 1
    assert json.loads(out)["layers"][0]["verdict"] == "fail"


def test_checklist_evaluate_passing_layer(capsys):
    code, out, _ = run(capsys, "checklist", "evaluate", "--responses", str(RESPONSES / "layer3.json"))
    assert code == 0


def test_checklist_invalid_response(capsys, tmp_path):
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"layer": 6, "items": {"L6.Q01": {"status": "not-applicable"}}}))
    code, out, _ = run(capsys, "checklist", "validate", "--responses", str(p))
    assert code == 1 and json.loads(out)["layers"][0]["valid"] is False
    code, out, err = run(capsys, "checklist", "evaluate", "--responses", str(p))
    assert code == 3 and "justification" in err


def test_checklist_all_layers_from_config(capsys):
    code, out, _ = run(capsys, "checklist", "evaluate", "--config", GERMAN)
    verdicts = [l["verdict"] for l in json.loads(out)["layers"]]
    assert code == 1 and verdicts == ["fail", "fail", "pass", "pass", "pass", "pass", "fail"]


def test_audit_run_is_deterministic(capsys, tmp_path):
    reports = []
    for name in ("a.json", "b.json"):
        code, out, _ = run(capsys, "audit", "run", "--config", GERMAN, "--seed", "42", "--out", str(tmp_path / name))
        assert code == 1 and out == ""
        doc = json.loads((tmp_path / name).read_text())
        doc["metadata"].pop("timestamp")
        reports.append(json.dumps(doc, sort_keys=True))
    assert reports[0] == reports[1]


def test_report_render(capsys, tmp_path):
    path = tmp_path / "r.json"
    run(capsys, "audit", "run", "--config", GERMAN, "--out", str(path))
    code, out, _ = run(capsys, "report", "render", "--report", str(path))
    assert code == 0 and out.startswith("# Fairness audit report")
    code, out, _ = run(capsys, "report", "render", "--report", str(path), "--format", "json")
    assert json.loads(out) == json.loads(path.read_text())


def test_train_predict_perf(capsys, tmp_path):
    model = tmp_path / "m.json"
    code, _, _ = run(capsys, "train", "--config", GERMAN, "--out", str(model))
    assert code == 0
    code, out, _ = run(capsys, "predict", "--config", GERMAN, "--model", str(model))
    pred = json.loads(out)
    assert code == 0 and len(pred["labels"]) == 300
    code, out, _ = run(capsys, "perf", "--config", GERMAN, "--model", str(model))
    assert code == 0 and 0.5 < json.loads(out)["accuracy"] <= 1
    code, out, _ = run(capsys, "metrics", "--config", GERMAN, "--model", str(model))
    assert set(values(json.loads(out))) == {"SPD", "DI", "EOD", "EMOD", "AOD"}


def test_mitigate_writes_reweighed_data(capsys, tmp_path):
    data = tmp_path / "t10w.csv"
    code, out, _ = run(capsys, "mitigate", "--config", T10, "--write-data", str(data))
    assert code == 0
    written = json.loads(out)["written"]
    code, out, _ = run(capsys, "metrics", "--config", T10, "--data", str(data), "--schema", written["schema"])
    assert abs(values(json.loads(out))["SPD"]) <= 1e-12


def test_mitigate_resample(capsys):
    code, out, _ = run(capsys, "mitigate", "--config", T10, "--method", "resample", "--seed", "1")
    assert code == 0 and json.loads(out)["rows_after"] == 15


def test_rate_from_metric_files(capsys, tmp_path):
    p = tmp_path / "m.json"
    run(capsys, "metrics", "--config", T10, "--out", str(p))
    code, out, _ = run(capsys, "rate", "--metrics", str(p))
    doc = json.loads(out)
    assert code == 1 and doc["bias_index"] == pytest.approx(0.5208, abs=1e-4)
    assert doc["certified"] is False
    code, _, _ = run(capsys, "rate", "--metrics", str(p), "--tolerance", "0.6")
    assert code == 0


def test_rate_from_config(capsys):
    code, out, _ = run(capsys, "rate", "--config", GERMAN)
    doc = json.loads(out)
    assert doc["fairness_score"] == 1 - doc["bias_index"]
    assert code == (0 if doc["certified"] else 1)


def test_drift_command(capsys):
    code, out, _ = run(capsys, "drift", "--config", str(FIXTURES / "drift" / "config.json"))
    assert code == 1
    assert abs(json.loads(out)["attributes"][0]["tvd"] - 0.19) <= 1e-12


def test_inspect_markdown(capsys):
    code, out, _ = run(capsys, "inspect", "--config", T10, "--format", "markdown")
    assert code == 0 and out.startswith("# Dataset inspection")
    assert "**base_rate**: 0.2500" in out


def test_fetch_instructions_digest(capsys):
    code, out, _ = run(capsys, "fetch-instructions")
    doc = json.loads(out)
    digest = hashlib.sha256((FIXTURES / "german" / "german.data").read_bytes()).hexdigest()
    assert code == 0 and doc["sha256"] == digest and doc["url"].startswith("https://")


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "fairlayers.cli", "metrics", "--config", T10], capture_output=True, text=True
    )
    assert proc.returncode == 0 and proc.stderr == ""
    assert values(json.loads(proc.stdout))["DI"] == pytest.approx(0.375)
