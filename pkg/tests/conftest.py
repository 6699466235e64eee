import os
import socket
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from procmodel.embeddings import SimilarityProvider
from procmodel.model import CanonicalModel, Event, Gateway, Lane, MessageFlow, Pool, SequenceFlow, Task, parse_model

FIXTURES = Path(__file__).parent / "fixtures"
DATASET = FIXTURES / "dataset"
REPLAY = FIXTURES / "replay"
EMBEDDINGS_REPLAY = FIXTURES / "embeddings_replay.json"
GOLDEN = Path(__file__).parent / "golden"
GROUND_TRUTHS = sorted(DATASET.glob("*/ground_truth.json"))

_acceptance: list[tuple[str, str]] = []
_LABELS = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion exercised by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and (report.failed or report.skipped)):
        return
    for name, value in report.user_properties:
        if name == "criterion":
            _acceptance.append((value, report.outcome))


@pytest.fixture(autouse=True)
def _tag_criterion(request):
    marker = request.node.get_closest_marker("criterion")
    if marker:
        request.node.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    by_name: dict[str, str] = {}
    for name, outcome in _acceptance:
        prev = by_name.get(name, outcome)
        by_name[name] = "failed" if "failed" in (prev, outcome) else outcome
    for name, outcome in by_name.items():
        terminalreporter.write_line(f"{_LABELS.get(outcome, 'FAIL')}  {name}")


def load_gt(path) -> CanonicalModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


class MatrixProvider(SimilarityProvider):
    """Serves a fixed similarity table; items are the strings "a0", "a1", ... and "b0", ..."""

    kind = "matrix"

    def __init__(self, sims):
        self.sims = np.asarray(sims, dtype=float)

    def similarity_matrix(self, list_a, list_b):
        rows = [int(x[1:]) for x in list_a]
        cols = [int(x[1:]) for x in list_b]
        return self.sims[np.ix_(rows, cols)] if rows and cols else np.zeros((len(rows), len(cols)))


NAMES = ["Check order", "Ship goods", "Approve", "Send invoice", "Archive", "Call customer", "Pack items"]
TYPES = ["abstract", "manual", "user", "send"]
EVENT_TYPES = ["Start None", "End None", "Start Message", "Intermediate Timer"]


@st.composite
def models(draw, max_nodes=8):
    """Random valid canonical models."""
    n_tasks = draw(st.integers(1, max_nodes))
    n_events = draw(st.integers(0, 4))
    n_gw = draw(st.integers(0, 3))
    ids = iter(range(10_000))
    tasks = tuple(Task(str(next(ids)), draw(st.sampled_from(NAMES)), draw(st.sampled_from(TYPES))) for _ in range(n_tasks))
    events = tuple(
        Event(str(next(ids)), draw(st.sampled_from(["", *NAMES[:3]])), draw(st.sampled_from(EVENT_TYPES)))
        for _ in range(n_events)
    )
    gateways = tuple(
        Gateway(str(next(ids)), draw(st.sampled_from(["exclusive", "parallel"])), draw(st.sampled_from([None, "", "ok?"])))
        for _ in range(n_gw)
    )
    node_ids = [x.id for x in (*tasks, *events, *gateways)]
    pools = []
    for p in range(draw(st.integers(0, 2))):
        lanes = []
        for _ in range(draw(st.integers(0, 2))):
            refs = tuple(draw(st.lists(st.sampled_from(node_ids), max_size=4, unique=True)))
            lanes.append(Lane(str(next(ids)), draw(st.sampled_from(["Clerk", "", "Manager"])), refs))
        pools.append(Pool(str(next(ids)), draw(st.sampled_from(["Sales", "Customer"])), tuple(lanes)))
    endpoints = node_ids + [p.id for p in pools] + [ln.id for p in pools for ln in p.lanes]
    sfs = tuple(
        SequenceFlow(str(next(ids)), draw(st.sampled_from(node_ids)), draw(st.sampled_from(node_ids)), draw(st.sampled_from([None, "yes"])))
        for _ in range(draw(st.integers(0, 6)))
    )
    mfs = tuple(
        MessageFlow(str(next(ids)), draw(st.sampled_from(endpoints)), draw(st.sampled_from(endpoints)), draw(st.sampled_from([None, "msg"])))
        for _ in range(draw(st.integers(0, 3)))
    )
    return CanonicalModel(tasks, events, gateways, tuple(pools), sfs, mfs)


_LOOPBACK = {"127.0.0.1", "::1", "localhost"}
_real_connect = socket.socket.connect


def _guarded_connect(self, address):
    host = address[0] if isinstance(address, tuple) else address
    if isinstance(host, str) and host not in _LOOPBACK and not host.startswith("/"):
        raise OSError(f"network access blocked in tests: {address!r}")
    return _real_connect(self, address)


@pytest.fixture
def no_network(monkeypatch):
    """Fail any socket connection that leaves the machine."""
    monkeypatch.setattr(socket.socket, "connect", _guarded_connect)


def pytest_sessionstart(session):
    if os.environ.get("PROCMODEL_BLOCK_NETWORK"):
        socket.socket.connect = _guarded_connect
