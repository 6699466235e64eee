"""Semantic- and frequency-aware Sørensen–Dice scoring of process models."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from .breakdown import ELEMENT_KEYS, ElementBreakdown, FlowTriple, LaneName, LaneRef
from .embeddings import ProviderConfig, SimilarityProvider, make_provider, pairwise_similarity

CATEGORIES: dict[str, tuple[str, str]] = {
    "tasks": ("TN", "TT"),
    "events": ("EN", "ET"),
    "gateways": ("GN", "GT"),
    "flows": ("SF", "MF"),
    "lanes": ("LN", "LR"),
}


@dataclass(frozen=True)
class MatchingConfig:
    threshold: float = 0.7
    provider: ProviderConfig | SimilarityProvider = field(default_factory=ProviderConfig)

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")

    def resolve(self) -> SimilarityProvider:
        if isinstance(self.provider, SimilarityProvider):
            return self.provider
        return make_provider(self.provider)


@dataclass(frozen=True)
class Matching:
    """Accepted pairs ``(index_a, index_b, similarity)`` in acceptance order."""

    pairs: tuple[tuple[int, int, float], ...] = ()

    def to_list(self) -> list[list]:
        return [list(p) for p in self.pairs]


def serialize_item(item) -> str:
    if isinstance(item, LaneRef):
        return f"{item.p} / {item.l} | {item.r}"
    if isinstance(item, LaneName):
        return item.render()
    if isinstance(item, FlowTriple):
        return f"{item.s} | {item.c} | {item.t}"
    return str(item)


def index_multiset(items: Iterable[Hashable]) -> set[tuple[Hashable, int]]:
    """Turn a multiset into a set by numbering repeated entries: a, a -> (a, 1), (a, 2)."""
    seen: Counter = Counter()
    out = set()
    for x in items:
        seen[x] += 1
        out.add((x, seen[x]))
    return out


def dice(a: Iterable[Hashable], b: Iterable[Hashable]) -> float:
    """Sørensen–Dice coefficient of two sets; 1.0 when both are empty."""
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return 2 * len(a & b) / (len(a) + len(b))


def match_items(
    a: Sequence[str],
    b: Sequence[str],
    cfg: MatchingConfig,
    provider: SimilarityProvider | None = None,
) -> Matching:
    """Greedy once-only matching, highest similarity first.

    Only pairs strictly above ``cfg.threshold`` qualify. Equal similarities
    are resolved by the smaller index in ``a``, then the smaller index in ``b``.
    """
    if not a or not b:
        return Matching()
    sims = pairwise_similarity(list(a), list(b), provider or cfg.resolve())
    candidates = [
        (float(sims[i, j]), i, j)
        for i in range(len(a))
        for j in range(len(b))
        if sims[i, j] > cfg.threshold
    ]
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_a: set[int] = set()
    used_b: set[int] = set()
    pairs = []
    for s, i, j in candidates:
        if i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        pairs.append((i, j, s))
    return Matching(tuple(pairs))


def _sfa(a: Sequence[str], b: Sequence[str], matching: Matching) -> float:
    b = list(b)
    for i, j, _ in matching.pairs:
        b[j] = a[i]
    return dice(index_multiset(a), index_multiset(b))


def dice_sfa(
    a: Sequence[str],
    b: Sequence[str],
    cfg: MatchingConfig,
    provider: SimilarityProvider | None = None,
) -> float:
    """Dice over semantically matched, duplicate-indexed item lists.

    Matched items in ``b`` take on the text of their partner in ``a``; both
    lists are then indexed so repeated entries survive as distinct members.
    """
    return _sfa(a, b, match_items(a, b, cfg, provider))


@dataclass(frozen=True)
class ScoreReport:
    overall: float
    categories: dict[str, float | None]
    elements: dict[str, float | None]
    weights: dict[str, int]
    matchings: dict[str, Matching] = field(default_factory=dict, compare=False)

    def to_dict(self, *, trace: bool = False) -> dict:
        d = {
            "overall": self.overall,
            "categories": dict(self.categories),
            "elements": dict(self.elements),
            "weights": dict(self.weights),
        }
        if trace:
            d["matchings"] = {k: m.to_list() for k, m in self.matchings.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ScoreReport:
        return cls(
            overall=d["overall"],
            categories=dict(d["categories"]),
            elements=dict(d["elements"]),
            weights={k: int(v) for k, v in d["weights"].items()},
            matchings={k: Matching(tuple(tuple(p) for p in v)) for k, v in d.get("matchings", {}).items()},
        )


def weighted_score(scores: dict[str, float], weights: dict[str, int], keys: Iterable[str]) -> float | None:
    keys = [k for k in keys if weights[k] > 0]
    total = sum(weights[k] for k in keys)
    if total == 0:
        return None
    return math.fsum(weights[k] * scores[k] for k in keys) / total


def score_models(
    gt: ElementBreakdown,
    gen: ElementBreakdown,
    cfg: MatchingConfig | None = None,
    provider: SimilarityProvider | None = None,
) -> ScoreReport:
    """Element, category and overall similarity of a generated model to a ground truth.

    Each element score is ``dice_sfa`` of the corresponding multisets; the
    aggregates weight element scores by ``|E_gt| + |E_gen|``. Scores whose
    weight is zero are reported as ``None``. Two empty models score 1.0.
    """
    cfg = cfg or MatchingConfig()
    provider = provider or cfg.resolve()
    elements: dict[str, float] = {}
    weights: dict[str, int] = {}
    matchings: dict[str, Matching] = {}
    for key in ELEMENT_KEYS:
        a = [serialize_item(x) for x in gt[key]]
        b = [serialize_item(x) for x in gen[key]]
        m = match_items(a, b, cfg, provider)
        matchings[key] = m
        elements[key] = _sfa(a, b, m)
        weights[key] = len(a) + len(b)

    overall = weighted_score(elements, weights, ELEMENT_KEYS)
    return ScoreReport(
        overall=1.0 if overall is None else overall,
        categories={name: weighted_score(elements, weights, keys) for name, keys in CATEGORIES.items()},
        elements={k: (elements[k] if weights[k] > 0 else None) for k in ELEMENT_KEYS},
        weights=weights,
        matchings=matchings,
    )
