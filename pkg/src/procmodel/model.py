"""Canonical simplified process-model schema: parsing, validation, serialization."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

logger = logging.getLogger(__name__)

__all__ = [
    "BPMN_SCHEMA",
    "CanonicalModel",
    "Event",
    "Gateway",
    "Issue",
    "Lane",
    "MessageFlow",
    "ModelError",
    "ModelParseError",
    "ModelSchemaError",
    "Pool",
    "SequenceFlow",
    "Task",
    "ValidationReport",
    "normalize_ws",
    "parse_model",
    "schema_text",
    "serialize_model",
    "validate_model",
]


class ModelError(ValueError):
    """Base class for canonical model failures."""


class ModelParseError(ModelError):
    """Input text is not well-formed JSON."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte {byte_offset})")
        self.byte_offset = byte_offset


class ModelSchemaError(ModelError):
    """JSON is well-formed but does not fit the canonical schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def id_sort_key(ident: str) -> tuple:
    # numeric ids sort numerically, everything else lexicographically after them
    if re.fullmatch(r"-?\d+", ident):
        return (0, int(ident), ident)
    return (1, 0, ident)


def _sorted(items: Iterable) -> tuple:
    return tuple(sorted(items, key=lambda x: id_sort_key(x.id)))


@dataclass(frozen=True)
class Task:
    id: str
    name: str
    type: str


@dataclass(frozen=True)
class Event:
    id: str
    name: str
    type: str


@dataclass(frozen=True)
class Gateway:
    id: str
    type: str
    name: str | None = None


@dataclass(frozen=True)
class Lane:
    id: str
    name: str
    element_refs: tuple[str, ...] = ()


@dataclass(frozen=True)
class Pool:
    id: str
    name: str
    lanes: tuple[Lane, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lanes", _sorted(self.lanes))


@dataclass(frozen=True)
class SequenceFlow:
    id: str
    source: str
    target: str
    condition: str | None = None


@dataclass(frozen=True)
class MessageFlow:
    id: str
    source: str
    target: str
    label: str | None = None


@dataclass(frozen=True)
class CanonicalModel:
    """Immutable process model.

    Element collections are kept sorted by id, so two models holding the same
    elements compare equal regardless of the order they were listed in.
    """

    tasks: tuple[Task, ...] = ()
    events: tuple[Event, ...] = ()
    gateways: tuple[Gateway, ...] = ()
    pools: tuple[Pool, ...] = ()
    sequence_flows: tuple[SequenceFlow, ...] = ()
    message_flows: tuple[MessageFlow, ...] = ()

    def __post_init__(self):
        for name in ("tasks", "events", "gateways", "pools", "sequence_flows", "message_flows"):
            object.__setattr__(self, name, _sorted(getattr(self, name)))

    @property
    def lanes(self) -> tuple[tuple[Pool, Lane], ...]:
        return tuple((pool, lane) for pool in self.pools for lane in pool.lanes)

    def n_elements(self) -> int:
        return (
            len(self.tasks)
            + len(self.events)
            + len(self.gateways)
            + len(self.pools)
            + len(self.lanes)
            + len(self.sequence_flows)
            + len(self.message_flows)
        )


# JSON Schema of the canonical format. Embedded verbatim in generation prompts.
_ID = {"type": "string"}
BPMN_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": _ID, "name": {"type": "string"}, "type": {"type": "string"}},
                "required": ["id", "name", "type"],
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": _ID, "name": {"type": "string"}, "type": {"type": "string"}},
                "required": ["id", "name", "type"],
            },
        },
        "gateways": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": _ID, "name": {"type": "string"}, "type": {"type": "string"}},
                "required": ["id", "type"],
            },
        },
        "pools": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": _ID,
                    "name": {"type": "string"},
                    "lanes": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "id": _ID,
                                "name": {"type": "string"},
                                "elementRefs": {"type": "array", "items": _ID},
                            },
                            "required": ["id", "name", "elementRefs"],
                        },
                    },
                },
                "required": ["id", "name", "lanes"],
            },
        },
        "sequenceFlows": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": _ID, "source": _ID, "target": _ID, "condition": {"type": "string"}},
                "required": ["id", "source", "target"],
            },
        },
        "messageFlows": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": _ID, "source": _ID, "target": _ID, "label": {"type": "string"}},
                "required": ["id", "source", "target"],
            },
        },
    },
    "required": ["tasks", "events", "gateways", "pools", "sequenceFlows", "messageFlows"],
}


def schema_text() -> str:
    return json.dumps(BPMN_SCHEMA, indent=2)


# ---------------------------------------------------------------------------
# parsing

_TOP_KEYS = ("tasks", "events", "gateways", "pools", "sequenceFlows", "messageFlows")


class _Reader:
    def __init__(self):
        self.unknown: list[str] = []

    def obj(self, value: Any, path: str, allowed: tuple[str, ...]) -> dict:
        if not isinstance(value, dict):
            raise ModelSchemaError(path, f"expected an object, got {type(value).__name__}")
        for key in value:
            if key not in allowed:
                self.unknown.append(f"{path}.{key}" if path else key)
        return value

    def array(self, parent: dict, key: str, path: str) -> list:
        value = parent.get(key)
        if value is None:
            return []
        if not isinstance(value, list):
            raise ModelSchemaError(_join(path, key), "expected an array")
        return value

    def ident(self, value: Any, path: str) -> str:
        # LLMs are asked for numeric ids; accept JSON numbers and keep them opaque
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise ModelSchemaError(path, "expected a string or integer id")
        return str(value).strip()

    def required_id(self, parent: dict, key: str, path: str) -> str:
        if key not in parent or parent[key] is None:
            raise ModelSchemaError(_join(path, key), "missing required field")
        return self.ident(parent[key], _join(path, key))

    def text(self, parent: dict, key: str, path: str, *, required: bool = False) -> str | None:
        if key not in parent or parent[key] is None:
            if required:
                raise ModelSchemaError(_join(path, key), "missing required field")
            return None
        value = parent[key]
        if not isinstance(value, str):
            raise ModelSchemaError(_join(path, key), "expected a string")
        return normalize_ws(value)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def parse_model(json_text: str | bytes) -> CanonicalModel:
    """Parse canonical-format JSON into a :class:`CanonicalModel`.

    Names, labels and types are whitespace-normalized. Unknown keys are
    logged and ignored. Raises :class:`ModelParseError` for malformed JSON and
    :class:`ModelSchemaError` (carrying the offending path) for schema misfits.
    """
    if isinstance(json_text, bytes):
        json_text = json_text.decode("utf-8")
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        offset = len(json_text[: exc.pos].encode("utf-8"))
        raise ModelParseError(exc.msg, offset) from None

    r = _Reader()
    root = r.obj(data, "", _TOP_KEYS)

    tasks = []
    for i, item in enumerate(r.array(root, "tasks", "")):
        p = f"tasks[{i}]"
        r.obj(item, p, ("id", "name", "type"))
        tasks.append(
            Task(
                id=r.required_id(item, "id", p),
                name=r.text(item, "name", p) or "",
                type=r.text(item, "type", p, required=True),
            )
        )

    events = []
    for i, item in enumerate(r.array(root, "events", "")):
        p = f"events[{i}]"
        r.obj(item, p, ("id", "name", "type"))
        events.append(
            Event(
                id=r.required_id(item, "id", p),
                name=r.text(item, "name", p) or "",
                type=r.text(item, "type", p, required=True),
            )
        )

    gateways = []
    for i, item in enumerate(r.array(root, "gateways", "")):
        p = f"gateways[{i}]"
        r.obj(item, p, ("id", "name", "type"))
        gateways.append(
            Gateway(
                id=r.required_id(item, "id", p),
                type=r.text(item, "type", p, required=True),
                name=r.text(item, "name", p),
            )
        )

    pools = []
    for i, item in enumerate(r.array(root, "pools", "")):
        p = f"pools[{i}]"
        r.obj(item, p, ("id", "name", "lanes"))
        lanes = []
        for j, lane in enumerate(r.array(item, "lanes", p)):
            lp = f"{p}.lanes[{j}]"
            r.obj(lane, lp, ("id", "name", "elementRefs"))
            refs = [
                r.ident(ref, f"{lp}.elementRefs[{k}]")
                for k, ref in enumerate(r.array(lane, "elementRefs", lp))
            ]
            lanes.append(
                Lane(
                    id=r.required_id(lane, "id", lp),
                    name=r.text(lane, "name", lp) or "",
                    element_refs=tuple(refs),
                )
            )
        pools.append(
            Pool(id=r.required_id(item, "id", p), name=r.text(item, "name", p) or "", lanes=tuple(lanes))
        )

    sequence_flows = []
    for i, item in enumerate(r.array(root, "sequenceFlows", "")):
        p = f"sequenceFlows[{i}]"
        r.obj(item, p, ("id", "source", "target", "condition"))
        sequence_flows.append(
            SequenceFlow(
                id=r.required_id(item, "id", p),
                source=r.required_id(item, "source", p),
                target=r.required_id(item, "target", p),
                condition=r.text(item, "condition", p),
            )
        )

    message_flows = []
    for i, item in enumerate(r.array(root, "messageFlows", "")):
        p = f"messageFlows[{i}]"
        r.obj(item, p, ("id", "source", "target", "label"))
        message_flows.append(
            MessageFlow(
                id=r.required_id(item, "id", p),
                source=r.required_id(item, "source", p),
                target=r.required_id(item, "target", p),
                label=r.text(item, "label", p),
            )
        )

    for key in r.unknown:
        logger.warning("ignoring unknown key %s", key)

    return CanonicalModel(
        tasks=tuple(tasks),
        events=tuple(events),
        gateways=tuple(gateways),
        pools=tuple(pools),
        sequence_flows=tuple(sequence_flows),
        message_flows=tuple(message_flows),
    )


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Issue:
    code: str
    element_id: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[Issue, ...] = ()
    warnings: tuple[Issue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [e.code for e in self.errors]

    def to_dict(self) -> dict:
        return {
            "errors": [vars(e) for e in self.errors],
            "warnings": [vars(w) for w in self.warnings],
        }


def validate_model(m: CanonicalModel) -> ValidationReport:
    """Check id uniqueness, reference resolution and mandatory text fields.

    Error codes: ``DUPLICATE_ID``, ``DANGLING_REF``, ``BAD_REF_KIND``,
    ``EMPTY_NAME``, ``EMPTY_TYPE``. Warning codes: ``MULTI_LANE``,
    ``EMPTY_LABEL``.
    """
    errors: list[Issue] = []
    warnings: list[Issue] = []

    kinds: dict[str, str] = {}

    def define(ident: str, kind: str) -> None:
        if ident in kinds:
            errors.append(Issue("DUPLICATE_ID", ident, f"id {ident!r} defined by {kinds[ident]} and {kind}"))
        else:
            kinds[ident] = kind

    for t in m.tasks:
        define(t.id, "task")
        if not t.name:
            errors.append(Issue("EMPTY_NAME", t.id, "task name is empty"))
        if not t.type:
            errors.append(Issue("EMPTY_TYPE", t.id, "task type is empty"))
    for e in m.events:
        define(e.id, "event")
        if not e.type:
            errors.append(Issue("EMPTY_TYPE", e.id, "event type is empty"))
    for g in m.gateways:
        define(g.id, "gateway")
        if not g.type:
            errors.append(Issue("EMPTY_TYPE", g.id, "gateway type is empty"))
    for pool in m.pools:
        define(pool.id, "pool")
        if not pool.name:
            warnings.append(Issue("EMPTY_LABEL", pool.id, "pool name is empty"))
        for lane in pool.lanes:
            define(lane.id, "lane")
    for f in m.sequence_flows:
        define(f.id, "sequence flow")
    for f in m.message_flows:
        define(f.id, "message flow")

    laned: dict[str, str] = {}
    for pool, lane in m.lanes:
        for ref in lane.element_refs:
            kind = kinds.get(ref)
            if kind is None:
                errors.append(Issue("DANGLING_REF", ref, f"lane {lane.id!r} references unknown id {ref!r}"))
            elif kind not in ("task", "event", "gateway"):
                errors.append(Issue("BAD_REF_KIND", ref, f"lane {lane.id!r} references a {kind}"))
            elif ref in laned and laned[ref] != lane.id:
                warnings.append(Issue("MULTI_LANE", ref, f"element {ref!r} placed in several lanes"))
            else:
                laned[ref] = lane.id

    for flow in (*m.sequence_flows, *m.message_flows):
        for end in (flow.source, flow.target):
            kind = kinds.get(end)
            if kind is None:
                errors.append(Issue("DANGLING_REF", end, f"flow {flow.id!r} references unknown id {end!r}"))
            elif kind not in ("task", "event", "gateway", "pool", "lane"):
                errors.append(Issue("BAD_REF_KIND", end, f"flow {flow.id!r} connects to a {kind}"))

    return ValidationReport(errors=tuple(errors), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# serialization


def to_dict(m: CanonicalModel) -> dict:
    def gateway(g: Gateway) -> dict:
        d = {"id": g.id, "type": g.type}
        if g.name is not None:
            d["name"] = g.name
        return d

    def flow(f, key: str, value: str | None) -> dict:
        d = {"id": f.id, "source": f.source, "target": f.target}
        if value is not None:
            d[key] = value
        return d

    return {
        "tasks": [{"id": t.id, "name": t.name, "type": t.type} for t in m.tasks],
        "events": [{"id": e.id, "name": e.name, "type": e.type} for e in m.events],
        "gateways": [gateway(g) for g in m.gateways],
        "pools": [
            {
                "id": p.id,
                "name": p.name,
                "lanes": [{"id": ln.id, "name": ln.name, "elementRefs": list(ln.element_refs)} for ln in p.lanes],
            }
            for p in m.pools
        ],
        "sequenceFlows": [flow(f, "condition", f.condition) for f in m.sequence_flows],
        "messageFlows": [flow(f, "label", f.label) for f in m.message_flows],
    }


def serialize_model(m: CanonicalModel, *, indent: int | None = 2) -> str:
    """Deterministic JSON rendering; refuses models that fail validation."""
    report = validate_model(m)
    if not report.ok:
        first = report.errors[0]
        raise ModelError(f"refusing to serialize invalid model: {first.code} {first.message}")
    return json.dumps(to_dict(m), indent=indent, ensure_ascii=False, sort_keys=True)
