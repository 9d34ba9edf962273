"""The engine facade: one Store per on-disk layout.

Writes to one Item are serialized by a per-Item lock; every mutating
operation builds its events, folds them onto the current snapshot (rejecting
before anything is written), commits the batch durably, then swaps the live
snapshot and updates the property index. Reads serve immutable snapshots
without blocking writers.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from typing import Callable, Iterable

from . import predicates, workflow
from .canonical import canonical_json
from .errors import (
    Conflict,
    CorruptLayout,
    InvalidRequest,
    ImmutableProperty,
    InvalidResultingGraph,
    JobNotEnabled,
    MemberNotFound,
    MissingAgent,
    NoBranchSelected,
    NotFound,
    OutcomeInvalid,
    OutcomeRequired,
    RoleMismatch,
    SequenceConflict,
    TouchesExecutedStep,
    TypeConstraintViolation,
    TypeMismatch,
    UnknownChild,
    UnknownItem,
    UnknownSchema,
)
from .model import (
    Event,
    EventKind,
    ItemSnapshot,
    OutcomeRef,
    OutcomeSchema,
    Property,
    RESERVED_NAME,
    RESERVED_TYPE,
    Transition,
    ViewpointTarget,
    new_item_id,
    validate_outcome,
    value_type_name,
)
from .provenance import (
    PropertyIndex,
    check_constraint,
    constraint_matches,
    filter_history,
)
from .replay import apply_event
from .storage import FileStore
from .workflow import ActivityState, Evaluator, Job

# Built-in outcome schemas: the self-describing core plus the default
# completion receipt for activities without a schema reference.
DOCUMENT_SCHEMA = {
    "document": {"type": "string", "required": True},
    "sourceItem": {"type": "string", "required": False},
}
BUILTIN_SCHEMAS: dict[tuple[str, int], dict] = {
    ("WorkflowDef", 0): DOCUMENT_SCHEMA,
    ("PropertyDefList", 0): DOCUMENT_SCHEMA,
    ("CollectionDefList", 0): DOCUMENT_SCHEMA,
    ("SchemaDef", 0): DOCUMENT_SCHEMA,
    ("Completion", 0): {"completed": {"type": "boolean", "required": True}},
}
COMPLETION_SCHEMA = ("Completion", 0)

SCHEMA_DESC_TYPE = "SchemaDescription"
ITEM_DESC_TYPE = "ItemDescription"


class Store:
    def __init__(self, files: FileStore, clock: Callable[[], int] | None = None,
                 id_factory: Callable[[], str] | None = None):
        self.files = files
        self.clock = clock or (lambda: int(time.time() * 1000))
        self.new_id = id_factory or new_item_id
        self.session_id = str(uuid.uuid4())  # changes only when a process reopens
        self._lock = threading.Lock()
        self._item_locks: dict[str, threading.Lock] = {}
        self._snapshots: dict[str, ItemSnapshot] = {}
        self._index = PropertyIndex()
        self._schema_cache: dict[tuple[str, int], OutcomeSchema] = {}
        self._version = 0  # bumps on every commit; drives long-polls
        self._changed = threading.Condition()
        self._load()

    # -- loading -----------------------------------------------------------

    def _load(self) -> None:
        self.load_failures: dict[str, str] = {}
        for item_id in self.files.item_ids():
            if item_id in self.files.quarantined:
                continue
            try:
                self._snapshots[item_id] = self.files.load_item(item_id)
            except (CorruptLayout, KeyError, ValueError) as e:
                # unreadable items stay on disk for verify_integrity to report
                self.load_failures[item_id] = str(e)
        index_doc = self.files.read_index()
        if index_doc and self._index_fresh(index_doc):
            self._index = PropertyIndex.from_doc(index_doc)
        else:
            for snapshot in self._snapshots.values():
                self._index.index_item(snapshot)

    def _index_fresh(self, doc: dict) -> bool:
        marks = doc.get("watermarks", {})
        if set(marks) != set(self._snapshots):
            return False
        return all(self._snapshots[i].last_event_seq == s for i, s in marks.items())

    def close(self) -> None:
        """Flush caches: property index file plus snapshots for long logs."""
        with self._lock:
            watermarks = {i: s.last_event_seq for i, s in self._snapshots.items()}
            self.files.write_index(self._index.to_doc(watermarks))
            for item_id, snapshot in self._snapshots.items():
                if snapshot.last_event_seq >= 16:
                    self.files.write_snapshot(item_id, snapshot)
            self.files.close()

    # -- basics ------------------------------------------------------------

    def _item_lock(self, item_id: str) -> threading.Lock:
        with self._lock:
            lock = self._item_locks.get(item_id)
            if lock is None:
                lock = self._item_locks[item_id] = threading.Lock()
            return lock

    def item(self, item_id: str) -> ItemSnapshot:
        snapshot = self._snapshots.get(item_id)
        if snapshot is None:
            raise UnknownItem(f"no item {item_id}")
        return snapshot

    def item_ids(self) -> list[str]:
        return sorted(self._snapshots)

    def has_item(self, item_id: str) -> bool:
        return item_id in self._snapshots

    @property
    def version(self) -> int:
        return self._version

    def wait_for_change(self, cursor: int, timeout: float) -> int:
        deadline = time.monotonic() + timeout
        with self._changed:
            while self._version == cursor:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    break
                self._changed.wait(remaining)
            return self._version

    def _stamp(self, snapshot: ItemSnapshot | None) -> int:
        now = self.clock()
        if snapshot is not None and snapshot.last_timestamp > now:
            return snapshot.last_timestamp  # clock stepped backward; clamp
        return now

    @staticmethod
    def acting_role(agent, role: str | None = None) -> str:
        if role:
            if role not in agent.roles:
                raise RoleMismatch(f"agent {agent.name} lacks role {role!r}")
            return role
        if not agent.roles:
            raise MissingAgent(f"agent {agent.name} has no roles")
        return min(agent.roles)

    def _publish(self, snapshot: ItemSnapshot, events: list[Event],
                 old: ItemSnapshot | None) -> None:
        with self._lock:
            self._snapshots[snapshot.id] = snapshot
            for event in events:
                if event.kind == EventKind.CREATED:
                    self._index.index_item(snapshot)
                elif event.kind == EventKind.PROPERTY_SET:
                    name = event.payload["name"]
                    old_prop = old.properties.get(name) if old else None
                    self._index.replace_property(snapshot.id, old_prop, snapshot.properties[name])
        with self._changed:
            self._version += 1
            self._changed.notify_all()

    def _commit(self, old: ItemSnapshot | None, new: ItemSnapshot, events: list[Event],
                payloads: dict[tuple[str, int], dict] | None = None) -> None:
        self.files.commit_events(new.id, events, payloads)
        self._publish(new, events, old)

    # -- raw append (provenance-store surface) ------------------------------

    def append_event(self, event: Event, outcome_payload: dict | None = None) -> int:
        """Append a pre-built event; the caller owns sequencing. Returns the
        committed seq. Stale writers get SequenceConflict."""
        if not event.agent_id or not event.role:
            raise MissingAgent("events must carry a non-empty agentId and role")
        with self._item_lock(event.item_id):
            snapshot = self._snapshots.get(event.item_id)
            expected = (snapshot.last_event_seq + 1) if snapshot else 0
            if event.seq != expected:
                raise SequenceConflict(f"expected seq {expected}, got {event.seq}")
            payloads = {}
            provider = self._provider_for(event.item_id, payloads)
            if outcome_payload is not None and event.outcome_ref is not None:
                ref = event.outcome_ref
                payloads[(ref.schema_name, ref.version)] = outcome_payload
            folded = apply_event(snapshot, event, provider)
            self._commit(snapshot, folded, [event], payloads)
            return event.seq

    def _provider_for(self, item_id: str, pending: dict[tuple[str, int], dict]):
        disk = self.files.outcome_provider(item_id)

        def provider(schema: str, version: int) -> dict:
            if (schema, version) in pending:
                return pending[(schema, version)]
            return disk(schema, version)

        return provider

    def _next_event(self, snapshot: ItemSnapshot | None, agent, role: str,
                    kind: EventKind, **fields) -> Event:
        seq = (snapshot.last_event_seq + 1) if snapshot else 0
        return Event(
            item_id=snapshot.id if snapshot else fields.pop("item_id"),
            seq=seq,
            agent_id=agent.agent_item_id,
            role=role,
            timestamp=self._stamp(snapshot),
            kind=kind,
            **fields,
        )

    # -- item creation (used by the registry) --------------------------------

    def create_item(self, item_id: str, agent, role: str, purpose: str, payload: dict) -> ItemSnapshot:
        with self._item_lock(item_id):
            if item_id in self._snapshots or self.files.has_item(item_id):
                raise Conflict(f"item {item_id} already exists")
            event = self._next_event(None, agent, role, EventKind.CREATED,
                                     item_id=item_id, purpose=purpose, payload=payload)
            folded = apply_event(None, event, self.files.outcome_provider(item_id))
            self._commit(None, folded, [event])
            return folded

    # -- core-model operations ------------------------------------------------

    def set_property(self, item_id: str, name: str, value, agent,
                     purpose: str = "", role: str | None = None) -> Event:
        acting = self.acting_role(agent, role)
        value_type_name(value)  # rejects unsupported types
        with self._item_lock(item_id):
            snapshot = self.item(item_id)
            existing = snapshot.properties.get(name)
            if existing is not None:
                if not existing.mutable:
                    raise ImmutableProperty(f"property {name!r} is immutable")
                if value_type_name(existing.value) != value_type_name(value):
                    raise TypeMismatch(
                        f"property {name!r} holds {value_type_name(existing.value)}, "
                        f"got {value_type_name(value)}"
                    )
            event = self._next_event(snapshot, agent, acting, EventKind.PROPERTY_SET,
                                     purpose=purpose, payload={"name": name, "value": value})
            folded = apply_event(snapshot, event, self.files.outcome_provider(item_id))
            self._commit(snapshot, folded, [event])
            return event

    def update_collection(self, item_id: str, collection: str, op: str, child_id: str,
                          slots: list[Property] | None = None, agent=None,
                          purpose: str = "", role: str | None = None) -> Event:
        acting = self.acting_role(agent, role)
        with self._item_lock(item_id):
            snapshot = self.item(item_id)
            coll = snapshot.collections.get(collection)
            if coll is None:
                raise NotFound(f"item {item_id} has no collection {collection!r}")
            if op == "add":
                child = self._snapshots.get(child_id)
                if child is None:
                    raise UnknownChild(f"no item {child_id}")
                if coll.constraint and child.type_name != coll.constraint:
                    raise TypeConstraintViolation(
                        f"collection {collection!r} requires Type={coll.constraint!r}, "
                        f"child has {child.type_name!r}"
                    )
            elif op == "remove":
                if not any(m.child_id == child_id for m in coll.members):
                    raise MemberNotFound(f"{child_id} is not a member of {collection!r}")
            else:
                raise InvalidRequest(f"unknown collection op {op!r}")
            payload = {"collection": collection, "op": op, "childId": child_id}
            if slots:
                payload["slots"] = [p.to_doc() for p in slots]
            event = self._next_event(snapshot, agent, acting, EventKind.COLLECTION_CHANGE,
                                     purpose=purpose, payload=payload)
            folded = apply_event(snapshot, event, self.files.outcome_provider(item_id))
            self._commit(snapshot, folded, [event])
            return event

    def set_viewpoint(self, item_id: str, schema: str, name: str, target: ViewpointTarget,
                      agent=None, purpose: str = "", role: str | None = None) -> Event:
        acting = self.acting_role(agent, role)
        if name == "last":
            raise InvalidRequest('"last" is the implicit viewpoint and cannot be redefined')
        with self._item_lock(item_id):
            snapshot = self.item(item_id)
            if target.kind == "pinned":
                versions = snapshot.outcomes.get(schema, ())
                if target.version is None or not 0 <= target.version < len(versions):
                    raise InvalidRequest(
                        f"cannot pin {schema} at v{target.version}: no such outcome"
                    )
            payload = {"schema": schema, "name": name, "target": target.to_doc()}
            event = self._next_event(snapshot, agent, acting, EventKind.VIEWPOINT_SET,
                                     purpose=purpose, payload=payload)
            folded = apply_event(snapshot, event, self.files.outcome_provider(item_id))
            self._commit(snapshot, folded, [event])
            return event

    # -- schema registry view ---------------------------------------------------

    def schema(self, name: str, version: int) -> OutcomeSchema:
        key = (name, version)
        if key in self._schema_cache:
            return self._schema_cache[key]
        if key in BUILTIN_SCHEMAS:
            schema = OutcomeSchema.from_doc(name, version, BUILTIN_SCHEMAS[key])
        else:
            holders = self.query_items([(RESERVED_TYPE, "==", SCHEMA_DESC_TYPE),
                                        (RESERVED_NAME, "==", name)])
            if not holders:
                raise UnknownSchema(f"no schema named {name!r}")
            holder = self.item(sorted(holders)[0])
            versions = holder.outcomes.get("SchemaDef", ())
            if not 0 <= version < len(versions):
                raise UnknownSchema(f"schema {name!r} has no version {version}")
            doc = json.loads(versions[version].content["document"])
            schema = OutcomeSchema.from_doc(name, version, doc)
        self._schema_cache[key] = schema
        return schema

    def schema_exists(self, name: str) -> bool:
        if any(k[0] == name for k in BUILTIN_SCHEMAS):
            return True
        return bool(self.query_items([(RESERVED_TYPE, "==", SCHEMA_DESC_TYPE),
                                      (RESERVED_NAME, "==", name)]))

    # -- workflow-engine operations ----------------------------------------------

    def enabled_jobs(self, item_id: str | None = None,
                     roles: Iterable[str] | None = None) -> list[Job]:
        if item_id is not None:
            snapshots = [self.item(item_id)]
        else:
            snapshots = [self._snapshots[i] for i in self.item_ids()]
        jobs: list[Job] = []
        role_set = set(roles) if roles is not None else None
        for snapshot in snapshots:
            for job in Evaluator(snapshot.workflow).enabled_jobs(snapshot.id):
                if role_set is None or job.required_role in role_set:
                    jobs.append(job)
        jobs.sort(key=lambda j: (j.item_id, j.step_path, j.transition.value))
        return jobs

    def apply_transition(self, item_id: str, step_path: str, transition: Transition,
                         outcome_content: dict | None, agent, purpose: str = ""
                         ) -> tuple[ItemSnapshot, list[Event]]:
        if transition == Transition.SKIP:
            raise JobNotEnabled("Skip is engine-internal")
        with self._item_lock(item_id):
            snapshot = self.item(item_id)
            evaluator = Evaluator(snapshot.workflow)
            located = evaluator.find_activity(step_path)
            if located is None:
                raise NotFound(f"no activity at {step_path!r} on {item_id}")
            _, _, node = located
            enabled = {
                (j.step_path, j.transition) for j in evaluator.enabled_jobs(item_id)
            }
            if (step_path, transition) not in enabled:
                raise JobNotEnabled(
                    f"{transition.value} at {step_path} is not currently enabled"
                )
            if node.activity.role not in agent.roles:
                raise RoleMismatch(
                    f"step {step_path} requires role {node.activity.role!r}"
                )
            payloads: dict[tuple[str, int], dict] = {}
            ref = None
            if transition == Transition.COMPLETE:
                schema_ref = node.activity.schema_ref or COMPLETION_SCHEMA
                if outcome_content is None:
                    if node.activity.schema_ref is not None:
                        raise OutcomeRequired(f"step {step_path} requires an outcome document")
                    outcome_content = {"completed": True}
                schema = self.schema(*schema_ref)
                result = validate_outcome(outcome_content, schema)
                if not result.ok:
                    raise OutcomeInvalid(
                        f"outcome rejected by schema {schema_ref[0]} v{schema_ref[1]}",
                        violations=list(result.violations),
                    )
                version = len(snapshot.outcomes.get(schema_ref[0], ()))
                ref = OutcomeRef(schema_ref[0], schema_ref[1], version)
                payloads[(ref.schema_name, ref.version)] = outcome_content
            provider = self._provider_for(item_id, payloads)
            event = self._next_event(
                snapshot, agent, node.activity.role, EventKind.TRANSITION,
                purpose=purpose, step_path=step_path, transition=transition,
                outcome_ref=ref,
            )
            folded = apply_event(snapshot, event, provider)
            events = [event]
            folded, skip_events = self._cascade_decisions(
                folded, agent, node.activity.role, provider, purpose
            )
            events.extend(skip_events)
            self._commit(snapshot, folded, events, payloads)
            return folded, events

    def _cascade_decisions(self, snapshot: ItemSnapshot, agent, role: str, provider,
                           purpose: str) -> tuple[ItemSnapshot, list[Event]]:
        """Resolve fired-but-undecided xorSplits, recording one Skip event per
        skipped stateful node; repeats until no decision is pending. Skips are
        attributed to the agent (and role) of the triggering transition."""
        events: list[Event] = []
        while True:
            evaluator = Evaluator(snapshot.workflow)
            pending = evaluator.pending_decisions()
            if not pending:
                return snapshot, events
            pending.sort(key=lambda fs: fs[0].prefix + fs[1])
            frame, split = pending[0]
            node = frame.graph.nodes[split]
            chosen = None
            for branch in node.branches:
                if predicates.evaluate(branch.predicate, snapshot):
                    chosen = branch.to
                    break
            if chosen is None:
                raise NoBranchSelected(
                    f"no branch predicate of {frame.prefix + split} holds"
                )
            for path in evaluator.skip_paths(frame, split, chosen):
                event = self._next_event(
                    snapshot, agent, role, EventKind.TRANSITION, purpose=purpose,
                    step_path=path, transition=Transition.SKIP,
                )
                snapshot = apply_event(snapshot, event, provider)
                events.append(event)

    def edit_live_workflow(self, item_id: str, patch: dict, agent,
                           purpose: str = "", role: str | None = None
                           ) -> tuple[ItemSnapshot, Event]:
        acting = self.acting_role(agent, role)
        with self._item_lock(item_id):
            snapshot = self.item(item_id)
            instance = snapshot.workflow
            touched = workflow.touched_graph_paths(instance.graph, patch)
            for gpath in touched:
                rpath = runtime_path(instance, gpath)
                state = instance.state(rpath)
                if state in (ActivityState.STARTED, ActivityState.COMPLETED,
                             ActivityState.SUSPENDED):
                    raise TouchesExecutedStep(
                        f"patch touches {rpath} in state {state.value}"
                    )
            new_graph = workflow.apply_patch(instance.graph, patch)
            violations = workflow.validate_graph(new_graph)
            if violations:
                raise InvalidResultingGraph(
                    "patched graph is invalid",
                    violations=[v.to_doc() for v in violations],
                )
            event = self._next_event(snapshot, agent, acting, EventKind.WORKFLOW_EDITED,
                                     purpose=purpose, payload={"patch": patch})
            folded = apply_event(snapshot, event, self.files.outcome_provider(item_id))
            self._commit(snapshot, folded, [event])
            return folded, event

    def evaluate_routing(self, predicate: dict, item_id: str) -> bool:
        return predicates.evaluate(predicate, self.item(item_id))

    # -- provenance-store operations ------------------------------------------------

    def replay_item(self, item_id: str, up_to: int | None = None) -> ItemSnapshot:
        if not self.files.has_item(item_id):
            raise UnknownItem(f"no item {item_id}")
        return self.files.replay_item(item_id, up_to)

    def query_history(self, item_id: str, **filters) -> list[Event]:
        if not self.files.has_item(item_id):
            raise UnknownItem(f"no item {item_id}")
        return filter_history(self.files.read_events(item_id), **filters)

    def lineage(self, item_id: str) -> list[dict]:
        from .registry import lineage_chain  # local import; registry builds on store

        return lineage_chain(self, item_id)

    def query_items(self, constraints: list[tuple[str, str, object]]) -> set[str]:
        for _, op, value in constraints:
            check_constraint(op, value)
        equality = [(n, v) for n, op, v in constraints if op == "=="]
        if equality:
            candidates: set[str] | None = None
            for name, value in equality:
                bucket = self._index.lookup(name, value)
                candidates = bucket if candidates is None else candidates & bucket
            ids = candidates or set()
        else:
            ids = set(self._snapshots)
        out = set()
        for item_id in ids:
            snapshot = self._snapshots.get(item_id)
            if snapshot is None:
                continue
            if all(constraint_matches(snapshot, n, op, v) for n, op, v in constraints):
                out.add(item_id)
        return out

    # -- export ------------------------------------------------------------------

    def export_events(self) -> Iterable[str]:
        """All events as canonical NDJSON, ordered by (itemId, seq)."""
        for item_id in self.files.item_ids():
            if item_id in self.files.quarantined:
                continue
            for doc in self.files.read_event_docs(item_id):
                yield canonical_json(doc)

    def verify_integrity(self) -> list[dict]:
        return self.files.verify_integrity()


def runtime_path(instance: workflow.WorkflowInstance, graph_path: str) -> str:
    """Graph path -> runtime path with current loop iteration suffixes."""
    graph = instance.graph
    segments = [s for s in graph_path.split("/") if s]
    out: list[str] = []
    for i, seg in enumerate(segments):
        node = graph.nodes.get(seg)
        if node is None:
            return "/".join(out + segments[i:])
        if node.kind == workflow.LOOP:
            it = instance.iterations.get("/".join(out + [seg]), 0)
            out.append(f"{seg}[{it}]")
        else:
            out.append(seg)
        if node.kind in (workflow.COMPOSITE, workflow.LOOP):
            graph = node.subgraph
    return "/".join(out)


def open_store(path, create: bool = False, clock=None, id_factory=None,
               fsync: bool = True, fault_hook=None, bootstrap: bool = True) -> Store:
    files = FileStore(path, create=create, fault_hook=fault_hook, fsync=fsync)
    store = Store(files, clock=clock, id_factory=id_factory)
    if bootstrap and not files.bootstrapped:
        if files.item_ids():
            from .errors import CorruptLayout

            raise CorruptLayout(
                "store initialization was interrupted; delete the directory and re-initialize"
            )
        from .registry import bootstrap_meta_descriptions

        bootstrap_meta_descriptions(store)
    return store
