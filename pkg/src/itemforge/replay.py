"""The state transition function: fold events into Item snapshots.

Live execution and historical replay share this exact fold, so a snapshot is
always a pure function of its event sequence plus the immutable outcome
payloads the events reference (supplied by ``outcome_provider``).
"""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Iterable, Optional

from . import workflow
from .errors import CorruptLayout
from .model import (
    BUILTIN_COLLECTIONS,
    Collection,
    Event,
    EventKind,
    ItemSnapshot,
    Member,
    Origin,
    Outcome,
    Property,
    Transition,
    Viewpoint,
    ViewpointTarget,
)

OutcomeProvider = Callable[[str, int], dict]


def apply_event(
    snapshot: Optional[ItemSnapshot], event: Event, outcomes: OutcomeProvider
) -> ItemSnapshot:
    if event.kind == EventKind.CREATED:
        if snapshot is not None:
            raise CorruptLayout(f"duplicate Created event at seq {event.seq}")
        return _settled(_create(event), event)
    if snapshot is None:
        raise CorruptLayout(f"event seq {event.seq} before any Created event")
    if event.kind == EventKind.PROPERTY_SET:
        name, value = event.payload["name"], event.payload["value"]
        props = dict(snapshot.properties)
        existing = props.get(name)
        props[name] = Property(name, value, existing.mutable if existing else True)
        snapshot = replace(snapshot, properties=props)
    elif event.kind == EventKind.COLLECTION_CHANGE:
        snapshot = replace(snapshot, collections=_change_collection(snapshot, event.payload))
    elif event.kind == EventKind.VIEWPOINT_SET:
        schema, name = event.payload["schema"], event.payload["name"]
        target = ViewpointTarget.from_doc(event.payload["target"])
        vps = dict(snapshot.viewpoints)
        vps[(schema, name)] = Viewpoint(schema, name, target)
        snapshot = replace(snapshot, viewpoints=vps)
    elif event.kind == EventKind.WORKFLOW_EDITED:
        new_graph = workflow.apply_patch(snapshot.workflow.graph, event.payload["patch"])
        snapshot = replace(snapshot, workflow=workflow.prune_states(snapshot.workflow, new_graph))
    elif event.kind == EventKind.TRANSITION:
        snapshot = _apply_transition(snapshot, event, outcomes)
    else:
        raise CorruptLayout(f"unknown event kind {event.kind}")
    return _settled(snapshot, event)


_WORKFLOW_KINDS = (EventKind.CREATED, EventKind.TRANSITION, EventKind.WORKFLOW_EDITED)


def _settled(snapshot: ItemSnapshot, event: Event) -> ItemSnapshot:
    # Only workflow-touching events can finish a subgraph: between events no
    # loop body is ever finished-but-undecided, so settling after property,
    # collection or viewpoint folds is provably a no-op.
    instance = snapshot.workflow
    if event.kind in _WORKFLOW_KINDS:
        instance = workflow.settle(instance, snapshot)
    return replace(
        snapshot,
        workflow=instance,
        last_event_seq=event.seq,
        last_timestamp=event.timestamp,
    )


def _create(event: Event) -> ItemSnapshot:
    p = event.payload
    properties = {d["name"]: Property.from_doc(d) for d in p.get("properties", [])}
    collections = {name: Collection(name) for name in BUILTIN_COLLECTIONS}
    for c in p.get("collections", []):
        collections[c["name"]] = Collection(c["name"], c.get("constraint"))
    graph = workflow.graph_from_doc(p["workflow"])
    origin = Origin(p["descItemId"], int(p["descVersion"]), p.get("sourceItemId"))
    return ItemSnapshot(
        id=event.item_id,
        properties=properties,
        collections=collections,
        outcomes={},
        viewpoints={},
        workflow=workflow.new_instance(graph),
        origin=origin,
        last_event_seq=event.seq,
        last_timestamp=event.timestamp,
    )


def _change_collection(snapshot: ItemSnapshot, payload: dict) -> dict[str, Collection]:
    colls = dict(snapshot.collections)
    coll = colls[payload["collection"]]
    if payload["op"] == "add":
        member = Member(
            payload["childId"],
            tuple(Property.from_doc(d) for d in payload.get("slots", [])),
        )
        colls[coll.name] = replace(coll, members=coll.members + (member,))
    else:
        members = list(coll.members)
        for i, m in enumerate(members):
            if m.child_id == payload["childId"]:
                del members[i]
                break
        colls[coll.name] = replace(coll, members=tuple(members))
    return colls


def _apply_transition(
    snapshot: ItemSnapshot, event: Event, outcomes: OutcomeProvider
) -> ItemSnapshot:
    if event.transition == Transition.COMPLETE:
        ref = event.outcome_ref
        if ref is None:
            raise CorruptLayout(f"Complete event at seq {event.seq} lacks an outcomeRef")
        versions = snapshot.outcomes.get(ref.schema_name, ())
        if ref.version != len(versions):
            raise CorruptLayout(
                f"outcome {ref.schema_name} v{ref.version} breaks contiguity at seq {event.seq}"
            )
        outcome = Outcome(
            item_id=snapshot.id,
            schema_name=ref.schema_name,
            schema_version=ref.schema_version,
            version=ref.version,
            content=outcomes(ref.schema_name, ref.version),
            event_seq=event.seq,
        )
        table = dict(snapshot.outcomes)
        table[ref.schema_name] = versions + (outcome,)
        snapshot = replace(snapshot, outcomes=table)
    instance = workflow.mark_transition(snapshot.workflow, event.step_path, event.transition)
    return replace(snapshot, workflow=instance)


def replay(events: Iterable[Event], outcomes: OutcomeProvider) -> ItemSnapshot:
    snapshot: Optional[ItemSnapshot] = None
    for event in events:
        snapshot = apply_event(snapshot, event, outcomes)
    if snapshot is None:
        raise CorruptLayout("no events to replay")
    return snapshot
