import json
import subprocess
import sys

import pytest

from conftest import DATASET, GOLDEN, REPLAY, GROUND_TRUTHS, EMBEDDINGS_REPLAY
from procmodel.cli import main
from procmodel.model import parse_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_breakdown(capsys):
    code, out, _ = run(capsys, "breakdown", DATASET / "001" / "ground_truth.json")
    assert code == 0
    b = json.loads(out)
    assert set(b) == {"TN", "TT", "EN", "ET", "GN", "GT", "LN", "LR", "SF", "MF"}


def test_breakdown_invalid_model(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"sequenceFlows": [{"id": 1, "source": 2, "target": 3}]}')
    code, _, err = run(capsys, "breakdown", bad)
    assert code == 2 and "DANGLING_REF" in err


def test_score_self_with_trace(capsys, tmp_path):
    gt = DATASET / "002" / "ground_truth.json"
    out_file = tmp_path / "s.json"
    code, _, _ = run(capsys, "score", gt, gt, "--trace", "--out", out_file)
    doc = json.loads(out_file.read_text())
    assert code == 0 and doc["overall"] == 1.0 and "matchings" in doc


@pytest.mark.parametrize("provider", ["exact", "lexical"])
def test_score_providers(capsys, provider):
    a, b = GROUND_TRUTHS[0], GROUND_TRUTHS[1]
    code, out, _ = run(capsys, "score", a, b, "--provider", provider)
    assert code == 0 and 0.0 <= json.loads(out)["overall"] < 1.0


def test_score_remote_replay(capsys):
    gt = DATASET / "004" / "ground_truth.json"
    code, out, _ = run(capsys, "score", gt, gt, "--provider", "remote", "--embeddings-endpoint", "http://replay.invalid",
                       "--embeddings-model", "standin-trigram-projection-32", "--embeddings-replay", EMBEDDINGS_REPLAY)
    assert code == 0 and json.loads(out)["overall"] == 1.0


def test_generate_from_replay(capsys, tmp_path):
    model_out = tmp_path / "m.json"
    code, out, _ = run(capsys, "generate", DATASET / "004" / "pages", "--dataset", DATASET, "--strategy", "one",
                       "--replay", REPLAY, "--out", model_out)
    assert code == 0 and json.loads(out)["stage"] == "ok"
    assert parse_model(model_out.read_text()) == parse_model((DATASET / "004" / "ground_truth.json").read_text())


def test_generate_failure_exit_code(capsys, tmp_path):
    code, out, _ = run(capsys, "generate", DATASET / "005" / "pages", "--dataset", DATASET, "--strategy", "one",
                       "--replay", REPLAY, "--out", tmp_path / "m.json")
    assert code == 1 and json.loads(out)["stage"] == "extraction"
    assert not (tmp_path / "m.json").exists()


def test_evaluate_matches_golden(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "evaluate", DATASET, "--strategy", "one", "--replay", REPLAY, "--out", out)
    assert code == 0 and out.read_text() == (GOLDEN / "evaluate_one_shot.json").read_text()


def test_report_csv(capsys):
    code, out, _ = run(capsys, "report", GOLDEN / "evaluate_one_shot.json")
    assert code == 0 and out == (GOLDEN / "evaluate_one_shot.csv").read_text()


def test_config_file_defaults_and_override(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"strategy": "one", "replay": str(REPLAY), "format": "csv"}))
    code, out, _ = run(capsys, "--config", cfg, "evaluate", DATASET)
    assert code == 0 and out == (GOLDEN / "evaluate_one_shot.csv").read_text()
    code, out, _ = run(capsys, "--config", cfg, "evaluate", DATASET, "--format", "json")
    assert json.loads(out)["summary"]["n_scored"] == 2


def test_missing_dataset_exit_code(capsys, tmp_path):
    code, _, err = run(capsys, "evaluate", tmp_path / "nope", "--replay", REPLAY)
    assert code == 2 and "error:" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "procmodel", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("breakdown", "score", "generate", "evaluate", "report"):
        assert cmd in res.stdout
