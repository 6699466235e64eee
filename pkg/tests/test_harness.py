import json
import logging
import shutil

import numpy as np
import pytest

from conftest import DATASET, GOLDEN, REPLAY, FIXTURES
from oracles import linear_quantile
from procmodel.generation import LlmClientConfig, ReplayChatClient, TransportError
from procmodel.harness import (
    CSV_COLUMNS,
    GENERATION_FAILED,
    PARSE_FAILED,
    SCORE_NAMES,
    SCORED,
    DatasetError,
    ScoreRecord,
    evaluate_pair,
    load_dataset,
    load_records,
    render_report,
    run_batch,
    summarize,
    write_report,
)
from procmodel.model import serialize_model
from procmodel.similarity import MatchingConfig, ScoreReport

TABLE_ROWS = [
    "Overall", "Tasks Overall", "Task Names", "Task Types", "Events Overall", "Event Names",
    "Event Types", "Gateways Overall", "Gateway Names", "Gateway Types", "Flows Overall",
    "Sequence Flows", "Message Flows", "Lanes Overall", "Lane Names", "Lane Refs",
]


class Canned:
    def __init__(self, reply):
        self.reply = reply

    def complete(self, messages, cfg, *, doc_id="", strategy=""):
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply(doc_id) if callable(self.reply) else self.reply


@pytest.fixture(scope="module")
def index():
    return load_dataset(DATASET)


def _report(overall, **elements):
    return ScoreReport(overall, {}, elements, {})


def _rec(overall, status=SCORED, **elements):
    return ScoreRecord("m", "zero-shot", status, report=_report(overall, **elements) if status == SCORED else None)


# --- dataset -------------------------------------------------------------------------


def test_manifest_matches_committed_fixture(index):
    assert index.manifest() == json.loads((FIXTURES / "dataset_manifest.json").read_text())


def test_partial_dataset(tmp_path, caplog):
    for mid in ("001", "002", "003", "004", "005"):
        shutil.copytree(DATASET / mid, tmp_path / mid)
    shutil.rmtree(tmp_path / "005" / "pages")
    with caplog.at_level(logging.WARNING):
        idx = load_dataset(tmp_path)
    assert idx.example_ids == ("001", "002", "003")
    assert [e.model_id for e in idx.evaluation_entries] == ["004"]
    assert any("005" in r.getMessage() for r in caplog.records)


def test_examples_file_and_invalid_bundle(tmp_path):
    for mid in ("001", "002"):
        shutil.copytree(DATASET / mid, tmp_path / mid)
    (tmp_path / "002" / "ground_truth.json").write_text('{"tasks": [{"id": 1, "name": "a", "type": "user"}, '
                                                        '{"id": 1, "name": "b", "type": "user"}]}')
    (tmp_path / "examples.txt").write_text("# shots\n001\n")
    idx = load_dataset(tmp_path)
    assert [e.model_id for e in idx.entries] == ["001"]
    assert idx.evaluation_entries == ()
    with pytest.raises(DatasetError):
        idx.strategy("few-shot")
    (tmp_path / "examples.txt").write_text("777\n")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_empty_dataset(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing")


# --- evaluation ----------------------------------------------------------------------


def test_evaluate_pair_statuses(index):
    entry, s, cfg, m = index["004"], index.strategy("zero"), LlmClientConfig(), MatchingConfig()
    ok = evaluate_pair(entry, s, cfg, m, Canned(serialize_model(entry.ground_truth())))
    assert ok.status == SCORED and ok.report.overall == 1.0
    assert evaluate_pair(entry, s, cfg, m, Canned("no")).status == PARSE_FAILED
    assert evaluate_pair(entry, s, cfg, m, Canned('{"tasks": 3}')).status == PARSE_FAILED
    down = evaluate_pair(entry, s, cfg, m, Canned(TransportError("boom")))
    assert down.status == GENERATION_FAILED and "boom" in down.error


def test_replayed_batch(index):
    recs = run_batch(index, "one", LlmClientConfig(), MatchingConfig(), 2, ReplayChatClient(REPLAY))
    assert [(r.model_id, r.status) for r in recs] == [("004", SCORED), ("005", PARSE_FAILED), ("006", SCORED)]
    assert recs[0].report.overall == 1.0
    assert recs[2].report.overall == pytest.approx(70 / 82, abs=1e-12)


def test_batch_order_independent_of_parallelism(index):
    client = ReplayChatClient(REPLAY)
    outs = [
        render_report(summarize(rs), rs)
        for rs in (run_batch(index, "one", LlmClientConfig(), MatchingConfig(), p, client) for p in (1, 3, 1))
    ]
    assert outs[0] == outs[1] == outs[2]
    with pytest.raises(ValueError):
        run_batch(index, "one", LlmClientConfig(), MatchingConfig(), 0, client)


# --- statistics ----------------------------------------------------------------------


def test_summary_rows_in_table_order():
    assert list(SCORE_NAMES) == TABLE_ROWS
    stats = summarize([_rec(0.5, TN=0.5)])
    assert [r.name for r in stats.rows] == TABLE_ROWS


def test_single_record():
    row = summarize([_rec(0.5)]).row("Overall")
    assert (row.mean, row.median, row.q25, row.q75, row.n) == (0.5, 0.5, 0.5, 0.5, 1)


def test_two_records():
    row = summarize([_rec(0.0), _rec(1.0)]).row("Overall")
    assert (row.mean, row.median, row.q25, row.q75) == (0.5, 0.5, 0.25, 0.75)


def test_quantiles_match_oracle():
    rng = np.random.default_rng(3)
    vals = list(rng.random(11))
    row = summarize([_rec(v) for v in vals]).row("Overall")
    assert row.q25 == pytest.approx(linear_quantile(vals, 0.25), abs=1e-12)
    assert row.median == pytest.approx(linear_quantile(vals, 0.5), abs=1e-12)
    assert row.q75 == pytest.approx(linear_quantile(vals, 0.75), abs=1e-12)


def test_absent_scores_and_failures_excluded():
    stats = summarize([_rec(1.0, MF=None), _rec(0.0, MF=0.25), _rec(None, status=PARSE_FAILED)])
    assert stats.n_records == 3 and stats.n_scored == 2
    assert stats.status_counts == {SCORED: 2, PARSE_FAILED: 1}
    assert stats.row("Message Flows").n == 1 and stats.row("Message Flows").mean == 0.25
    assert stats.row("Lane Refs").n == 0 and stats.row("Lane Refs").mean is None


def test_no_scored_records_gives_header_only_csv(tmp_path):
    stats = summarize([_rec(None, status=PARSE_FAILED)])
    path = write_report(stats, [], tmp_path / "r.csv", "csv")
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


# --- reports -------------------------------------------------------------------------


def test_golden_reports(index):
    recs = run_batch(index, "one", LlmClientConfig(), MatchingConfig(), 2, ReplayChatClient(REPLAY))
    stats = summarize(recs)
    assert render_report(stats, recs, "json") == (GOLDEN / "evaluate_one_shot.json").read_text()
    assert render_report(stats, recs, "csv") == (GOLDEN / "evaluate_one_shot.csv").read_text()


def test_json_and_csv_agree():
    stats = summarize([_rec(0.2, TN=0.4), _rec(0.9, TN=None)])
    doc = json.loads(render_report(stats, [], "json"))
    lines = render_report(stats, [], "csv").splitlines()[1:]
    for row, line in zip(doc["summary"]["rows"], lines):
        cells = line.split(",")
        assert cells[0] == row["name"] and int(cells[5]) == row["n"]
        for col, cell in zip(("mean", "median", "q25", "q75"), cells[1:5]):
            assert (row[col] is None and cell == "") or float(cell) == row[col]


def test_records_round_trip(tmp_path):
    src = GOLDEN / "evaluate_one_shot.json"
    recs = load_records(src)
    assert render_report(summarize(recs), recs) == src.read_text()
    with pytest.raises(ValueError):
        render_report(summarize(recs), recs, "xml")
