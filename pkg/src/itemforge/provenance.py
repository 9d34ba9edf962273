"""Provenance queries: the denormalized property index, history filters,
and lineage traversal over Created/promotion records.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TypeMismatch
from .model import Event, EventKind, ItemSnapshot, Property, value_type_name

QUERY_OPS = ("==", "!=", "<", "<=", ">", ">=")


class PropertyIndex:
    """(name, type, value) -> set of item ids, kept in step with commits.

    The type tag keeps True and 1 apart (they hash equal in Python).
    """

    def __init__(self):
        self._entries: dict[tuple[str, str, object], set[str]] = {}

    @staticmethod
    def key(name: str, value) -> tuple[str, str, object]:
        return (name, value_type_name(value), value)

    def add(self, item_id: str, prop: Property) -> None:
        self._entries.setdefault(self.key(prop.name, prop.value), set()).add(item_id)

    def remove(self, item_id: str, prop: Property) -> None:
        key = self.key(prop.name, prop.value)
        bucket = self._entries.get(key)
        if bucket:
            bucket.discard(item_id)
            if not bucket:
                del self._entries[key]

    def index_item(self, snapshot: ItemSnapshot) -> None:
        for prop in snapshot.properties.values():
            self.add(snapshot.id, prop)

    def unindex_item(self, snapshot: ItemSnapshot) -> None:
        for prop in snapshot.properties.values():
            self.remove(snapshot.id, prop)

    def replace_property(self, item_id: str, old: Property | None, new: Property) -> None:
        if old is not None:
            self.remove(item_id, old)
        self.add(item_id, new)

    def lookup(self, name: str, value) -> set[str]:
        return set(self._entries.get(self.key(name, value), ()))

    def to_doc(self, watermarks: dict[str, int]) -> dict:
        return {
            "watermarks": dict(sorted(watermarks.items())),
            "entries": [
                [name, tag, value, sorted(ids)]
                for (name, tag, value), ids in sorted(
                    self._entries.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))
                )
            ],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "PropertyIndex":
        index = cls()
        for name, tag, value, ids in doc.get("entries", []):
            index._entries[(name, tag, value)] = set(ids)
        return index


def check_constraint(op: str, value) -> None:
    if op not in QUERY_OPS:
        raise TypeMismatch(f"unknown operator {op!r}")
    tag = value_type_name(value)  # raises TypeError on non-scalars
    if op in ("<", "<=", ">", ">=") and tag == "boolean":
        raise TypeMismatch("ordered comparison against a boolean value")


def constraint_matches(snapshot: ItemSnapshot, name: str, op: str, value) -> bool:
    """All operators require the property to exist; == and != compare type
    and value together; ordered operators compare within one type only."""
    prop = snapshot.properties.get(name)
    if prop is None:
        return False
    same_type = value_type_name(prop.value) == value_type_name(value)
    if op == "==":
        return same_type and prop.value == value
    if op == "!=":
        return not (same_type and prop.value == value)
    if not same_type:
        return False
    if op == "<":
        return prop.value < value
    if op == "<=":
        return prop.value <= value
    if op == ">":
        return prop.value > value
    return prop.value >= value


def filter_history(
    events: list[Event],
    agent_id: str | None = None,
    role: str | None = None,
    kind: str | None = None,
    time_from: int | None = None,
    time_to: int | None = None,
    step_prefix: str | None = None,
) -> list[Event]:
    """Conjunction of all supplied filters, in seq order."""
    out = []
    for e in events:
        if agent_id is not None and e.agent_id != agent_id:
            continue
        if role is not None and e.role != role:
            continue
        if kind is not None and e.kind.value != kind:
            continue
        if time_from is not None and e.timestamp < time_from:
            continue
        if time_to is not None and e.timestamp > time_to:
            continue
        if step_prefix is not None and not (e.step_path or "").startswith(step_prefix):
            continue
        out.append(e)
    return out


@dataclass(frozen=True)
class LineageRecord:
    item_id: str
    origin_desc_item_id: str
    origin_version: int
    agent_id: str
    timestamp: int
    source_item_id: str | None = None  # re-run source
    promoted_from: str | None = None  # item whose workflow became this version

    def to_doc(self) -> dict:
        doc: dict = {
            "itemId": self.item_id,
            "originDescItemId": self.origin_desc_item_id,
            "originVersion": self.origin_version,
            "agentId": self.agent_id,
            "timestamp": self.timestamp,
        }
        if self.source_item_id is not None:
            doc["sourceItemId"] = self.source_item_id
        if self.promoted_from is not None:
            doc["promotedFrom"] = self.promoted_from
        return doc


def lineage_record(created: Event, promoted_from: str | None) -> LineageRecord:
    p = created.payload
    if created.kind != EventKind.CREATED:
        raise ValueError("lineage derives from Created events")
    return LineageRecord(
        item_id=created.item_id,
        origin_desc_item_id=p["descItemId"],
        origin_version=int(p["descVersion"]),
        agent_id=created.agent_id,
        timestamp=created.timestamp,
        source_item_id=p.get("sourceItemId"),
        promoted_from=promoted_from,
    )
