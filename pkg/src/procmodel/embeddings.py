"""Text vectorization for semantic item matching.

Three similarity providers are available:

* :class:`RemoteEmbeddingProvider` talks to an embeddings HTTP API
  (``{"model", "input"}`` in, ``{"data": [{"index", "embedding"}]}`` out).
* :class:`LexicalFallbackProvider` embeds text as hashed character-trigram
  indicator vectors. It is deterministic and fully offline.
* :class:`ExactMatchProvider` scores 1.0 for identical strings and 0.0
  otherwise, which reduces semantic dice to plain multiset dice.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .model import normalize_ws

logger = logging.getLogger(__name__)

API_KEY_ENV = "EMBEDDINGS_API_KEY"


class EmbeddingError(RuntimeError):
    pass


class RetryableEmbeddingError(EmbeddingError):
    """Transport-level failure; the same request may succeed later."""


class EmbeddingUsageError(ValueError):
    pass


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbeddingUsageError(f"vector length mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        logger.warning("cosine of a zero vector; defined as 0.0")
        return 0.0
    if np.array_equal(a, b):
        return 1.0
    return min(1.0, max(-1.0, float(np.dot(a, b)) / (na * nb)))


class SimilarityProvider:
    kind = "abstract"
    model_name = ""

    def similarity_matrix(self, list_a: Sequence[str], list_b: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


def pairwise_similarity(list_a: Sequence[str], list_b: Sequence[str], provider: SimilarityProvider) -> np.ndarray:
    """``len(list_a) x len(list_b)`` matrix of similarities."""
    return provider.similarity_matrix(list_a, list_b)


class ExactMatchProvider(SimilarityProvider):
    kind = "exact"

    def similarity_matrix(self, list_a, list_b):
        out = np.zeros((len(list_a), len(list_b)))
        for i, a in enumerate(list_a):
            for j, b in enumerate(list_b):
                if a == b:
                    out[i, j] = 1.0
        return out


class EmbeddingCache:
    """Append-only JSON-lines cache keyed by (provider kind, model, text).

    Floats are stored as JSON numbers, which round-trip float64 exactly.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[tuple[str, str, str], np.ndarray] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._data[(rec["kind"], rec["model"], rec["text"])] = np.asarray(rec["embedding"], dtype=np.float64)

    def get(self, kind: str, model: str, text: str) -> np.ndarray | None:
        return self._data.get((kind, model, text))

    def put(self, kind: str, model: str, text: str, vec: np.ndarray) -> None:
        key = (kind, model, text)
        with self._lock:
            if key in self._data:
                return
            self._data[key] = vec
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                rec = {"kind": kind, "model": model, "text": text, "embedding": vec.tolist()}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def __len__(self) -> int:
        return len(self._data)


class EmbeddingProvider(SimilarityProvider):
    """Base for providers that map text to fixed-length vectors."""

    def __init__(self, cache: EmbeddingCache | None = None):
        self.cache = cache

    def _embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError

    def embed(self, text_item: str) -> np.ndarray:
        return self.embed_many([text_item])[0]

    def embed_many(self, texts: Sequence[str]) -> list[np.ndarray]:
        for t in texts:
            if not t or not t.strip():
                raise EmbeddingUsageError("cannot embed empty text")
        found: dict[str, np.ndarray] = {}
        missing = []
        for t in dict.fromkeys(texts):
            hit = self.cache.get(self.kind, self.model_name, t) if self.cache else None
            if hit is None:
                missing.append(t)
            else:
                found[t] = hit
        if missing:
            for t, vec in zip(missing, self._embed_batch(missing)):
                vec = np.asarray(vec, dtype=np.float64)
                if not np.all(np.isfinite(vec)):
                    raise EmbeddingError(f"non-finite embedding for {t!r}")
                found[t] = vec
                if self.cache is not None:
                    self.cache.put(self.kind, self.model_name, t, vec)
        return [found[t] for t in texts]

    def similarity_matrix(self, list_a, list_b):
        out = np.zeros((len(list_a), len(list_b)))
        if not list_a or not list_b:
            return out
        uniq = list(dict.fromkeys([*list_a, *list_b]))
        vecs = dict(zip(uniq, self.embed_many(uniq)))
        for i, a in enumerate(list_a):
            for j, b in enumerate(list_b):
                out[i, j] = 1.0 if a == b else cosine(vecs[a], vecs[b])
        return out


# ---------------------------------------------------------------------------
# lexical fallback


def trigrams(text: str) -> set[str]:
    """Character trigrams of the case-folded, whitespace-normalized text.

    Strings shorter than three characters yield themselves as a single gram.
    """
    s = normalize_ws(text).casefold()
    if len(s) < 3:
        return {s} if s else set()
    return {s[i : i + 3] for i in range(len(s) - 2)}


def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class LexicalFallbackProvider(EmbeddingProvider):
    kind = "lexical-fallback"

    def __init__(self, dim: int = 4096, cache: EmbeddingCache | None = None):
        super().__init__(cache)
        self.dim = dim
        self.model_name = f"trigram-{dim}"

    def _embed_batch(self, texts):
        out = []
        for t in texts:
            vec = np.zeros(self.dim)
            for g in trigrams(t):
                vec[_bucket(g, self.dim)] = 1.0
            out.append(vec)
        return out


# ---------------------------------------------------------------------------
# remote provider

Transport = Callable[[str, dict, dict], dict]


def urllib_transport(timeout: float = 60.0) -> Transport:
    def send(url: str, payload: dict, headers: dict) -> dict:
        req = urllib.request.Request(
            url,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json", **headers},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (408, 429) or exc.code >= 500:
                raise RetryableEmbeddingError(f"HTTP {exc.code} from {url}") from exc
            raise EmbeddingError(f"HTTP {exc.code} from {url}: {exc.read()[:200]!r}") from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise RetryableEmbeddingError(f"transport failure talking to {url}: {exc}") from exc

    return send


class ReplayEmbeddingTransport:
    """Serves recorded vectors (``{"<model>": {"<text>": [floats]}}``) in wire format."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.recorded = json.loads(self.path.read_text(encoding="utf-8"))

    def __call__(self, url: str, payload: dict, headers: dict) -> dict:
        table = self.recorded.get(payload["model"], {})
        data = []
        for i, text in enumerate(payload["input"]):
            if text not in table:
                raise EmbeddingError(f"no recorded embedding for {text!r} in {self.path}")
            data.append({"index": i, "embedding": table[text]})
        return {"data": data}


class RecordingEmbeddingTransport:
    """Wraps a transport and persists every returned vector for later replay."""

    def __init__(self, path: str | os.PathLike, inner: Transport):
        self.path = Path(path)
        self.inner = inner
        self._lock = threading.Lock()
        self.recorded: dict = json.loads(self.path.read_text(encoding="utf-8")) if self.path.exists() else {}

    def __call__(self, url, payload, headers):
        resp = self.inner(url, payload, headers)
        with self._lock:
            table = self.recorded.setdefault(payload["model"], {})
            for item in resp["data"]:
                table[payload["input"][item["index"]]] = item["embedding"]
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(json.dumps(self.recorded, indent=1, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        return resp


class RemoteEmbeddingProvider(EmbeddingProvider):
    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        model_name: str = "sentence-transformer",
        *,
        api_key: str | None = None,
        transport: Transport | None = None,
        cache: EmbeddingCache | None = None,
        batch_size: int = 64,
        max_in_flight: int = 4,
        retries: int = 2,
        backoff: float = 0.5,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(cache)
        if not endpoint:
            raise EmbeddingUsageError("remote embedding provider requires an endpoint")
        self.endpoint = endpoint
        self.model_name = model_name
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.transport = transport or urllib_transport()
        self.batch_size = batch_size
        self.max_in_flight = max(1, max_in_flight)
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep

    def _request(self, batch: list[str]) -> list[np.ndarray]:
        payload = {"model": self.model_name, "input": batch}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        for attempt in range(self.retries + 1):
            try:
                resp = self.transport(self.endpoint, payload, headers)
                break
            except RetryableEmbeddingError:
                if attempt == self.retries:
                    raise
                self._sleep(self.backoff * 2**attempt)
        try:
            items = sorted(resp["data"], key=lambda d: d["index"])
            vecs = [np.asarray(d["embedding"], dtype=np.float64) for d in items]
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"malformed embeddings response: {exc}") from exc
        if len(vecs) != len(batch):
            raise EmbeddingError(f"expected {len(batch)} embeddings, got {len(vecs)}")
        return vecs

    def _embed_batch(self, texts):
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if len(batches) == 1:
            return self._request(batches[0])
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            results = list(pool.map(self._request, batches))
        return [v for chunk in results for v in chunk]


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "lexical-fallback"
    endpoint: str | None = None
    model_name: str | None = None
    cache_path: str | None = None
    replay_path: str | None = None

    KINDS = ("remote", "lexical-fallback", "exact")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise EmbeddingUsageError(f"unknown provider kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "remote" and not self.endpoint:
            raise EmbeddingUsageError("remote provider requires an endpoint")


def make_provider(cfg: ProviderConfig) -> SimilarityProvider:
    if cfg.kind == "exact":
        return ExactMatchProvider()
    cache = EmbeddingCache(cfg.cache_path) if cfg.cache_path else None
    if cfg.kind == "lexical-fallback":
        return LexicalFallbackProvider(cache=cache)
    transport = ReplayEmbeddingTransport(cfg.replay_path) if cfg.replay_path else None
    return RemoteEmbeddingProvider(
        cfg.endpoint, cfg.model_name or "sentence-transformer", transport=transport, cache=cache
    )
