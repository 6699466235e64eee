"""Decompose a canonical model into the ten element multisets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields
from typing import NamedTuple, Union

from .model import CanonicalModel

logger = logging.getLogger(__name__)

ELEMENT_KEYS = ("TN", "TT", "EN", "ET", "GN", "GT", "LN", "LR", "SF", "MF")


class BreakdownError(ValueError):
    pass


class LaneName(NamedTuple):
    p: str
    l: str  # noqa: E741

    def render(self) -> str:
        return f"{self.p} / {self.l}"


class LaneRef(NamedTuple):
    p: str
    l: str  # noqa: E741
    r: str


class FlowTriple(NamedTuple):
    s: str
    c: str
    t: str


Item = Union[str, LaneName, LaneRef, FlowTriple]


@dataclass(frozen=True)
class ElementBreakdown:
    """The ten multisets of one model, each stored as a tuple in model order."""

    TN: tuple[str, ...] = ()
    TT: tuple[str, ...] = ()
    EN: tuple[str, ...] = ()
    ET: tuple[str, ...] = ()
    GN: tuple[str, ...] = ()
    GT: tuple[str, ...] = ()
    LN: tuple[LaneName, ...] = ()
    LR: tuple[LaneRef, ...] = ()
    SF: tuple[FlowTriple, ...] = ()
    MF: tuple[FlowTriple, ...] = ()

    def __getitem__(self, key: str) -> tuple:
        if key not in ELEMENT_KEYS:
            raise KeyError(key)
        return getattr(self, key)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_dict(self) -> dict[str, list]:
        return {k: [list(x) if isinstance(x, tuple) else x for x in v] for k, v in self.items()}

    @classmethod
    def from_dict(cls, data: dict) -> ElementBreakdown:
        ctors = {"LN": LaneName, "LR": LaneRef, "SF": FlowTriple, "MF": FlowTriple}
        kwargs = {}
        for key in ELEMENT_KEYS:
            ctor = ctors.get(key)
            kwargs[key] = tuple(ctor(*x) if ctor else x for x in data.get(key, ()))
        return cls(**kwargs)


class _Index:
    """id -> renderable element lookup; first definition wins on duplicates."""

    def __init__(self, m: CanonicalModel):
        self.nodes: dict[str, tuple[str, object]] = {}
        for kind, items in (("task", m.tasks), ("event", m.events), ("gateway", m.gateways)):
            for x in items:
                self.nodes.setdefault(x.id, (kind, x))
        for pool in m.pools:
            self.nodes.setdefault(pool.id, ("pool", pool))
            for lane in pool.lanes:
                self.nodes.setdefault(lane.id, ("lane", (pool, lane)))


def _render(kind: str, obj) -> str:
    if kind == "task":
        return obj.name or obj.type
    if kind == "event":
        return obj.name or obj.type
    if kind == "gateway":
        return obj.type
    if kind == "lane":
        pool, lane = obj
        return LaneName(pool.name, lane.name).render()
    if kind == "pool":
        return LaneName(obj.name, "").render()
    raise BreakdownError(f"cannot render a {kind}")


def render_endpoint(element_id: str, m: CanonicalModel) -> str:
    """Text used for a flow endpoint or lane reference.

    Tasks render as their name, events as their name or (if unnamed) their
    type, gateways always as their type, lanes as ``"pool / lane"`` and bare
    pools as ``"pool / "``.
    """
    index = _Index(m)
    try:
        kind, obj = index.nodes[element_id]
    except KeyError:
        raise BreakdownError(f"unresolvable element id {element_id!r}") from None
    return _render(kind, obj)


def breakdown(m: CanonicalModel, *, strict: bool = True) -> ElementBreakdown:
    """Build the ten multisets of ``m``.

    With ``strict=False`` unresolvable flow endpoints and lane references are
    dropped (with a logged warning) instead of raising; this is how generated
    models that fail validation are still scored.
    """
    index = _Index(m)

    def resolve(ident: str, where: str, allowed: tuple[str, ...]) -> str | None:
        entry = index.nodes.get(ident)
        if entry is None or entry[0] not in allowed:
            what = "unresolvable" if entry is None else f"{entry[0]} not allowed as"
            if strict:
                raise BreakdownError(f"{what} reference {ident!r} in {where}")
            logger.warning("dropping %s reference %r in %s", what, ident, where)
            return None
        return _render(*entry)

    tn = tuple(t.name for t in m.tasks if t.name)
    tt = tuple(t.type for t in m.tasks)
    en = tuple(e.name for e in m.events if e.name)
    et = tuple(e.type for e in m.events)
    gn = tuple(g.name for g in m.gateways if g.name)
    gt = tuple(g.type for g in m.gateways)

    ln: list[LaneName] = []
    lr: list[LaneRef] = []
    for pool, lane in m.lanes:
        ln.append(LaneName(pool.name, lane.name))
        for ref in lane.element_refs:
            r = resolve(ref, f"lane {lane.id!r}", ("task", "event", "gateway"))
            if r is not None:
                lr.append(LaneRef(pool.name, lane.name, r))

    def triples(flows, label_attr: str) -> tuple[FlowTriple, ...]:
        out = []
        for f in flows:
            all_nodes = ("task", "event", "gateway", "pool", "lane")
            s = resolve(f.source, f"flow {f.id!r}", all_nodes)
            t = resolve(f.target, f"flow {f.id!r}", all_nodes)
            if s is None or t is None:
                continue
            out.append(FlowTriple(s, getattr(f, label_attr) or "", t))
        return tuple(out)

    return ElementBreakdown(
        TN=tn,
        TT=tt,
        EN=en,
        ET=et,
        GN=gn,
        GT=gt,
        LN=tuple(ln),
        LR=tuple(lr),
        SF=triples(m.sequence_flows, "condition"),
        MF=triples(m.message_flows, "label"),
    )
