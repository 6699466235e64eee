"""Dataset discovery, batch evaluation, summary statistics and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .breakdown import breakdown
from .generation import (
    SHOT_COUNTS,
    STRATEGY_ALIASES,
    ChatClient,
    DocumentPages,
    GenerationTrace,
    LlmClientConfig,
    MEDIA_TYPES,
    PromptStrategy,
    generate_model,
)
from .model import CanonicalModel, ModelError, id_sort_key, parse_model, validate_model
from .similarity import MatchingConfig, ScoreReport, score_models
from .embeddings import SimilarityProvider

logger = logging.getLogger(__name__)

SCORED = "scored"
GENERATION_FAILED = "generation-failed"
PARSE_FAILED = "parse-failed"
SCORE_FAILED = "score-failed"

# (row name, where to read it in a ScoreReport)
SCORE_ROWS: tuple[tuple[str, str, str], ...] = (
    ("Overall", "overall", ""),
    ("Tasks Overall", "categories", "tasks"),
    ("Task Names", "elements", "TN"),
    ("Task Types", "elements", "TT"),
    ("Events Overall", "categories", "events"),
    ("Event Names", "elements", "EN"),
    ("Event Types", "elements", "ET"),
    ("Gateways Overall", "categories", "gateways"),
    ("Gateway Names", "elements", "GN"),
    ("Gateway Types", "elements", "GT"),
    ("Flows Overall", "categories", "flows"),
    ("Sequence Flows", "elements", "SF"),
    ("Message Flows", "elements", "MF"),
    ("Lanes Overall", "categories", "lanes"),
    ("Lane Names", "elements", "LN"),
    ("Lane Refs", "elements", "LR"),
)
SCORE_NAMES = tuple(name for name, _, _ in SCORE_ROWS)


class DatasetError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class DatasetEntry:
    model_id: str
    ground_truth_path: Path
    pages_dir: Path
    source_document: Path | None = None

    def ground_truth(self) -> CanonicalModel:
        return parse_model(self.ground_truth_path.read_text(encoding="utf-8"))

    def pages(self) -> DocumentPages:
        return DocumentPages.from_directory(self.pages_dir, doc_id=self.model_id)


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    entries: tuple[DatasetEntry, ...]
    example_ids: tuple[str, ...]

    def __getitem__(self, model_id: str) -> DatasetEntry:
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(model_id)

    @property
    def evaluation_entries(self) -> tuple[DatasetEntry, ...]:
        return tuple(e for e in self.entries if e.model_id not in self.example_ids)

    def manifest(self) -> dict:
        return {
            "entries": [e.model_id for e in self.entries],
            "example_ids": list(self.example_ids),
            "evaluation_ids": [e.model_id for e in self.evaluation_entries],
        }

    def strategy(self, kind: str) -> PromptStrategy:
        kind = STRATEGY_ALIASES.get(kind, kind)
        if kind not in SHOT_COUNTS:
            raise ValueError(f"unknown strategy {kind!r}")
        n = SHOT_COUNTS[kind]
        if len(self.example_ids) < n:
            raise DatasetError(f"{kind} needs {n} example models, dataset reserves {len(self.example_ids)}")
        examples = tuple((self[i].pages(), self[i].ground_truth()) for i in self.example_ids[:n])
        return PromptStrategy(kind, examples)


def load_dataset(root: str | os.PathLike) -> DatasetIndex:
    """Index ``<root>/<id>/ground_truth.json`` + ``<root>/<id>/pages/*.png`` bundles.

    Bundles missing a ground truth or page images, or whose ground truth
    fails validation, are skipped with a warning. Shot-example ids come from
    ``<root>/examples.txt`` (one id per line) and default to the first three.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    entries = []
    for d in sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: id_sort_key(p.name)):
        gt = d / "ground_truth.json"
        pages = d / "pages"
        if not gt.is_file():
            logger.warning("skipping %s: no ground_truth.json", d.name)
            continue
        if not pages.is_dir() or not any(p.suffix.lower() in MEDIA_TYPES for p in pages.iterdir()):
            logger.warning("skipping %s: no page images", d.name)
            continue
        try:
            report = validate_model(parse_model(gt.read_text(encoding="utf-8")))
        except (ModelError, UnicodeDecodeError) as exc:
            logger.warning("skipping %s: unreadable ground truth (%s)", d.name, exc)
            continue
        if not report.ok:
            logger.warning("skipping %s: invalid ground truth (%s)", d.name, report.errors[0].message)
            continue
        source = next((p for p in sorted(d.glob("*.pdf"))), None)
        entries.append(DatasetEntry(d.name, gt, pages, source))
    if not entries:
        raise DatasetError(f"no usable model bundles under {root}")

    ids = [e.model_id for e in entries]
    examples_file = root / "examples.txt"
    if examples_file.is_file():
        example_ids = [
            ln.strip() for ln in examples_file.read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")
        ]
        unknown = [i for i in example_ids if i not in ids]
        if unknown:
            raise DatasetError(f"examples.txt names unknown models: {unknown}")
    else:
        example_ids = ids[:3]
    return DatasetIndex(root, tuple(entries), tuple(example_ids))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class ScoreRecord:
    model_id: str
    strategy: str
    status: str
    report: ScoreReport | None = None
    trace: GenerationTrace | None = None
    error: str | None = None
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self, *, trace: bool = False) -> dict:
        gen = self.trace.to_dict() if self.trace is not None else self.detail.get("generation")
        return {
            "model_id": self.model_id,
            "strategy": self.strategy,
            "status": self.status,
            "error": self.error,
            "scores": self.report.to_dict(trace=trace) if self.report else None,
            "generation": gen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScoreRecord:
        return cls(
            model_id=d["model_id"],
            strategy=d["strategy"],
            status=d["status"],
            report=ScoreReport.from_dict(d["scores"]) if d.get("scores") else None,
            error=d.get("error"),
            detail={"generation": d.get("generation")},
        )


def evaluate_pair(
    entry: DatasetEntry,
    strategy: PromptStrategy,
    llm_cfg: LlmClientConfig,
    match_cfg: MatchingConfig,
    client: ChatClient | None = None,
    provider: SimilarityProvider | None = None,
) -> ScoreRecord:
    """Generate a model for one bundle and score it against its ground truth."""
    try:
        doc = entry.pages()
    except (OSError, ValueError) as exc:
        return ScoreRecord(entry.model_id, strategy.kind, GENERATION_FAILED, error=str(exc))
    trace = generate_model(doc, strategy, llm_cfg, client)
    if trace.stage in ("prompt", "transport"):
        return ScoreRecord(entry.model_id, strategy.kind, GENERATION_FAILED, trace=trace, error=trace.error)
    if trace.parsed is None:
        return ScoreRecord(entry.model_id, strategy.kind, PARSE_FAILED, trace=trace, error=trace.error)
    try:
        gt = breakdown(entry.ground_truth())
        gen = breakdown(trace.parsed, strict=False)
        report = score_models(gt, gen, match_cfg, provider)
    except Exception as exc:  # noqa: BLE001
        return ScoreRecord(entry.model_id, strategy.kind, SCORE_FAILED, trace=trace, error=f"{type(exc).__name__}: {exc}")
    return ScoreRecord(entry.model_id, strategy.kind, SCORED, report=report, trace=trace)


def run_batch(
    index: DatasetIndex,
    strategy: str | PromptStrategy,
    llm_cfg: LlmClientConfig,
    match_cfg: MatchingConfig,
    parallelism: int = 2,
    client: ChatClient | None = None,
    provider: SimilarityProvider | None = None,
) -> list[ScoreRecord]:
    """Evaluate every non-example entry; records come back in dataset order."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if isinstance(strategy, str):
        strategy = index.strategy(strategy)
    provider = provider or match_cfg.resolve()

    def one(entry: DatasetEntry) -> ScoreRecord:
        return evaluate_pair(entry, strategy, llm_cfg, match_cfg, client, provider)

    entries = index.evaluation_entries
    if parallelism == 1:
        return [one(e) for e in entries]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, entries))


# ---------------------------------------------------------------------------
# statistics and reports


@dataclass(frozen=True)
class ScoreRow:
    name: str
    mean: float | None
    median: float | None
    q25: float | None
    q75: float | None
    n: int


@dataclass(frozen=True)
class SummaryStats:
    rows: tuple[ScoreRow, ...]
    n_records: int
    n_scored: int
    status_counts: dict[str, int]

    def row(self, name: str) -> ScoreRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "n_scored": self.n_scored,
            "status_counts": dict(sorted(self.status_counts.items())),
            "rows": [vars(r) for r in self.rows],
        }


def _read_score(report: ScoreReport, where: str, key: str) -> float | None:
    if where == "overall":
        return report.overall
    return getattr(report, where).get(key)


def summarize(records: Sequence[ScoreRecord]) -> SummaryStats:
    """Mean, median and interquartile bounds per score name over scored records.

    Quantiles interpolate linearly between order statistics. Absent scores
    do not contribute; a row with no contributions has ``n == 0``.
    """
    scored = [r for r in records if r.status == SCORED and r.report is not None]
    counts = Counter(r.status for r in records)
    rows = []
    if scored:
        for name, where, key in SCORE_ROWS:
            vals = [v for r in scored if (v := _read_score(r.report, where, key)) is not None]
            if not vals:
                rows.append(ScoreRow(name, None, None, None, None, 0))
                continue
            arr = np.asarray(vals, dtype=np.float64)
            q25, med, q75 = (float(x) for x in np.quantile(arr, [0.25, 0.5, 0.75], method="linear"))
            rows.append(ScoreRow(name, float(np.mean(arr)), med, q25, q75, len(vals)))
    return SummaryStats(tuple(rows), len(records), len(scored), dict(counts))


CSV_COLUMNS = ("score_name", "mean", "median", "q25", "q75", "n")


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def render_report(stats: SummaryStats, records: Sequence[ScoreRecord], fmt: str = "json") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in stats.rows:
            w.writerow([r.name, _fmt(r.mean), _fmt(r.median), _fmt(r.q25), _fmt(r.q75), r.n])
        return buf.getvalue()
    if fmt == "json":
        doc = {"summary": stats.to_dict(), "records": [r.to_dict() for r in records]}
        return json.dumps(doc, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def write_report(stats: SummaryStats, records: Sequence[ScoreRecord], path: str | os.PathLike, fmt: str = "json") -> Path:
    path = Path(path)
    text = render_report(stats, records, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def load_records(path: str | os.PathLike) -> list[ScoreRecord]:
    """Read records back from a JSON report written by :func:`write_report`."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ScoreRecord.from_dict(d) for d in doc["records"]]
