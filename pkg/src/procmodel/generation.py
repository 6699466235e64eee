"""Multimodal LLM extraction of canonical models from paged document images."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

from .model import CanonicalModel, ModelError, ValidationReport, parse_model, schema_text, serialize_model, validate_model

logger = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"

META_PROMPT = """### Instruction ###
You are a BPMN expert. Your task is to extract process information out of
the passed documents which are parsed as a list of images where each image
represents one page of the document. Make sure that you include the
sequence and message flow. Use numbers for the ids starting from zero.
Generate json according to the following schema for extracting the process
information. Only output the generated json.

### Schema ###
"""

MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}
_MAGIC = {b"\x89PNG\r\n\x1a\n": "image/png", b"\xff\xd8\xff": "image/jpeg"}

SHOT_COUNTS = {"zero-shot": 0, "one-shot": 1, "few-shot": 3}
STRATEGY_ALIASES = {"zero": "zero-shot", "one": "one-shot", "few": "few-shot"}


class GenerationError(RuntimeError):
    pass


class TransportError(GenerationError):
    def __init__(self, message: str, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ExtractionError(GenerationError):
    def __init__(self, message: str, raw_response: str):
        super().__init__(message)
        self.raw_response = raw_response


# ---------------------------------------------------------------------------
# documents and strategies


@dataclass(frozen=True)
class Page:
    number: int
    data: bytes = field(repr=False)
    media_type: str


@dataclass(frozen=True)
class DocumentPages:
    pages: tuple[Page, ...]
    source_path: str = ""
    doc_id: str = ""

    def __post_init__(self):
        if not self.pages:
            raise ValueError("a document needs at least one page")
        for p in self.pages:
            if p.media_type not in ("image/png", "image/jpeg"):
                raise ValueError(f"unsupported media type {p.media_type!r} on page {p.number}")

    @classmethod
    def from_directory(cls, path: str | os.PathLike, doc_id: str | None = None) -> DocumentPages:
        """Load ``*.png``/``*.jpg`` pages in lexicographic file-name order."""
        path = Path(path)
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in MEDIA_TYPES)
        if not files:
            raise ValueError(f"no page images in {path}")
        pages = []
        for n, f in enumerate(files, start=1):
            data = f.read_bytes()
            media = next((mt for magic, mt in _MAGIC.items() if data.startswith(magic)), None)
            if media is None:
                raise ValueError(f"{f} is not a PNG or JPEG image")
            pages.append(Page(n, data, media))
        if doc_id is None:
            doc_id = path.parent.name if path.name == "pages" else path.name
        return cls(tuple(pages), str(path), doc_id)


@dataclass(frozen=True)
class PromptStrategy:
    kind: str = "zero-shot"
    examples: tuple[tuple[DocumentPages, CanonicalModel], ...] = ()

    def __post_init__(self):
        kind = STRATEGY_ALIASES.get(self.kind, self.kind)
        if kind not in SHOT_COUNTS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if len(self.examples) != SHOT_COUNTS[kind]:
            raise ValueError(f"{kind} needs {SHOT_COUNTS[kind]} examples, got {len(self.examples)}")


def _image_part(page: Page) -> dict:
    b64 = base64.b64encode(page.data).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:{page.media_type};base64,{b64}"}}


def build_prompt(schema: str, strategy: PromptStrategy, doc: DocumentPages) -> list[dict]:
    """Chat messages for one extraction request.

    The system turn carries the meta prompt followed by the schema. Each
    shot example becomes a user turn of page images answered by an assistant
    turn holding the serialized ground truth. The target pages come last.
    """
    if len(strategy.examples) != SHOT_COUNTS[strategy.kind]:
        raise ValueError("example count does not match strategy kind")
    messages: list[dict] = [{"role": "system", "content": [{"type": "text", "text": META_PROMPT + schema}]}]
    for ex_doc, ex_model in strategy.examples:
        messages.append({"role": "user", "content": [_image_part(p) for p in ex_doc.pages]})
        messages.append({"role": "assistant", "content": [{"type": "text", "text": serialize_model(ex_model)}]})
    messages.append({"role": "user", "content": [_image_part(p) for p in doc.pages]})
    return messages


def count_example_exchanges(messages: Sequence[dict]) -> int:
    return sum(1 for m in messages if m["role"] == "assistant")


# ---------------------------------------------------------------------------
# response handling


def extract_json(response: str) -> str:
    """Return the first complete JSON object in an LLM response.

    Code-fenced blocks are searched before the surrounding prose.
    """
    decoder = json.JSONDecoder()
    candidates = []
    parts = response.split("```")
    # odd-indexed parts sit inside fences; drop a leading language tag
    for k in range(1, len(parts), 2):
        block = parts[k]
        first, _, rest = block.partition("\n")
        candidates.append(rest if first.strip().isalpha() else block)
    candidates.append(response)
    for text in candidates:
        start = text.find("{")
        while start != -1:
            try:
                obj, end = decoder.raw_decode(text, start)
            except json.JSONDecodeError:
                pass
            else:
                if isinstance(obj, dict):
                    return text[start:end]
            start = text.find("{", start + 1)
    raise ExtractionError("no JSON object found in response", response)


# ---------------------------------------------------------------------------
# chat clients


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str = ""
    model_name: str = "gpt-4-vision-preview"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    timeout: float = 120.0
    retries: int = 2
    backoff: float = 1.0

    def __post_init__(self):
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def payload(self, messages: list[dict]) -> dict:
        return {
            "model": self.model_name,
            "temperature": self.temperature,
            "max_tokens": self.max_output_tokens,
            "messages": messages,
        }


class ChatClient(Protocol):
    def complete(self, messages: list[dict], cfg: LlmClientConfig, *, doc_id: str = "", strategy: str = "") -> str: ...


def request_digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


class HttpChatClient:
    """OpenAI-compatible chat-completions client; thread-safe."""

    def __init__(self, api_key: str | None = None, sleep: Callable[[float], None] = time.sleep):
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self._sleep = sleep

    def _post(self, cfg: LlmClientConfig, payload: dict) -> dict:
        if not cfg.endpoint:
            raise TransportError("no LLM endpoint configured", retryable=False)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        req = urllib.request.Request(
            cfg.endpoint, data=json.dumps(payload).encode("utf-8"), headers=headers, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            retryable = exc.code in (408, 429) or exc.code >= 500
            raise TransportError(f"HTTP {exc.code} from {cfg.endpoint}", retryable=retryable) from exc
        except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
            raise TransportError(f"cannot reach {cfg.endpoint}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise TransportError(f"non-JSON body from {cfg.endpoint}", retryable=False) from exc

    def complete(self, messages, cfg, *, doc_id="", strategy=""):
        payload = cfg.payload(messages)
        for attempt in range(cfg.retries + 1):
            try:
                body = self._post(cfg, payload)
                break
            except TransportError as exc:
                if not exc.retryable or attempt == cfg.retries:
                    raise
                delay = cfg.backoff * 2**attempt
                logger.warning("chat request failed (%s); retrying in %.1fs", exc, delay)
                self._sleep(delay)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed chat-completions response", retryable=False) from exc
        if isinstance(content, list):
            content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
        return content or ""


def _replay_file(directory: Path, doc_id: str, strategy: str) -> Path:
    return directory / f"{doc_id}__{strategy}.json"


class ReplayChatClient:
    """Answers from responses recorded by :class:`RecordingChatClient`.

    Files are ``<dir>/<doc_id>__<strategy>.json`` holding ``response`` and the
    ``request_sha256`` of the payload that produced it. A digest mismatch only
    logs a warning, so replay survives harmless prompt edits.
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    def complete(self, messages, cfg, *, doc_id="", strategy=""):
        path = _replay_file(self.directory, doc_id, strategy)
        if not path.exists():
            raise TransportError(f"no recorded response at {path}", retryable=False)
        rec = json.loads(path.read_text(encoding="utf-8"))
        digest = request_digest(cfg.payload(messages))
        if rec.get("request_sha256") not in (None, digest):
            logger.warning("recorded response %s was captured for a different request", path.name)
        return rec["response"]


class RecordingChatClient:
    def __init__(self, directory: str | os.PathLike, inner: ChatClient):
        self.directory = Path(directory)
        self.inner = inner

    def complete(self, messages, cfg, *, doc_id="", strategy=""):
        response = self.inner.complete(messages, cfg, doc_id=doc_id, strategy=strategy)
        self.directory.mkdir(parents=True, exist_ok=True)
        rec = {
            "doc_id": doc_id,
            "strategy": strategy,
            "model": cfg.model_name,
            "request_sha256": request_digest(cfg.payload(messages)),
            "response": response,
        }
        _replay_file(self.directory, doc_id, strategy).write_text(
            json.dumps(rec, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        return response


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class GenerationTrace:
    messages: list[dict]
    raw_response: str | None = None
    extracted_json: str | None = None
    parsed: CanonicalModel | None = None
    validation: ValidationReport | None = None
    stage: str = "ok"  # ok | prompt | transport | extraction | parse
    error: str | None = None
    timing_ms: float = 0.0

    @property
    def failed(self) -> bool:
        return self.stage != "ok"

    def to_dict(self, *, include_messages: bool = False) -> dict[str, Any]:
        d: dict[str, Any] = {
            "stage": self.stage,
            "error": self.error,
            "raw_response": self.raw_response,
            "extracted_json": self.extracted_json,
            "validation": self.validation.to_dict() if self.validation else None,
        }
        if include_messages:
            d["messages"] = self.messages
        return d


def generate_model(
    doc: DocumentPages,
    strategy: PromptStrategy,
    cfg: LlmClientConfig,
    client: ChatClient | None = None,
    schema: str | None = None,
) -> GenerationTrace:
    """Prompt, call, extract, parse and validate. Never raises."""
    started = time.perf_counter()
    trace = GenerationTrace(messages=[])
    try:
        trace.messages = build_prompt(schema if schema is not None else schema_text(), strategy, doc)
    except Exception as exc:  # noqa: BLE001
        trace.stage, trace.error = "prompt", f"{type(exc).__name__}: {exc}"
        return _finish(trace, started)

    client = client or HttpChatClient()
    try:
        trace.raw_response = client.complete(trace.messages, cfg, doc_id=doc.doc_id, strategy=strategy.kind)
    except Exception as exc:  # noqa: BLE001
        trace.stage, trace.error = "transport", f"{type(exc).__name__}: {exc}"
        return _finish(trace, started)

    try:
        trace.extracted_json = extract_json(trace.raw_response)
    except ExtractionError as exc:
        trace.stage, trace.error = "extraction", str(exc)
        return _finish(trace, started)

    try:
        trace.parsed = parse_model(trace.extracted_json)
        trace.validation = validate_model(trace.parsed)
    except ModelError as exc:
        trace.parsed = None
        trace.stage, trace.error = "parse", str(exc)
    except Exception as exc:  # noqa: BLE001
        trace.parsed = None
        trace.stage, trace.error = "parse", f"{type(exc).__name__}: {exc}"
    return _finish(trace, started)


def _finish(trace: GenerationTrace, started: float) -> GenerationTrace:
    trace.timing_ms = (time.perf_counter() - started) * 1000.0
    return trace
