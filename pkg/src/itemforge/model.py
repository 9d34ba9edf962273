"""Core domain types: properties, schemas, outcomes, viewpoints, collections,
events and the Item snapshot they fold into.

Everything here is an immutable value. Mutation happens only by appending
events; the fold that turns events into snapshots lives in ``replay``.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import NoOutcomes, UnknownViewpoint

PropertyValue = str | int | bool

RESERVED_NAME = "Name"
RESERVED_TYPE = "Type"

# Collections every Item carries from creation (unconstrained, empty).
BUILTIN_COLLECTIONS = ("Instances", "Promotions")


def new_item_id() -> str:
    return str(uuid.uuid4())


def value_type_name(value: Any) -> str:
    """Property value type tag; bool checked before int (bool is an int)."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, str):
        return "string"
    raise TypeError(f"unsupported property value type: {type(value).__name__}")


@dataclass(frozen=True)
class Property:
    name: str
    value: PropertyValue
    mutable: bool = True

    def to_doc(self) -> dict:
        return {"name": self.name, "value": self.value, "mutable": self.mutable}

    @classmethod
    def from_doc(cls, doc: dict) -> "Property":
        return cls(doc["name"], doc["value"], bool(doc.get("mutable", True)))


# ---------------------------------------------------------------------------
# Outcome schemas and validation
# ---------------------------------------------------------------------------

FIELD_TYPES = ("string", "integer", "number", "boolean", "enum")


@dataclass(frozen=True)
class FieldSpec:
    type: str
    required: bool = False
    values: tuple[str, ...] | None = None  # enum members
    min: float | None = None
    max: float | None = None

    def to_doc(self) -> dict:
        doc: dict = {"type": self.type, "required": self.required}
        if self.values is not None:
            doc["values"] = list(self.values)
        if self.min is not None:
            doc["min"] = self.min
        if self.max is not None:
            doc["max"] = self.max
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "FieldSpec":
        return cls(
            type=doc["type"],
            required=bool(doc.get("required", False)),
            values=tuple(doc["values"]) if "values" in doc else None,
            min=doc.get("min"),
            max=doc.get("max"),
        )


@dataclass(frozen=True)
class OutcomeSchema:
    """A named, versioned validation contract for outcome documents."""

    name: str
    version: int
    fields: dict[str, FieldSpec]

    def to_doc(self) -> dict:
        return {f: spec.to_doc() for f, spec in self.fields.items()}

    @classmethod
    def from_doc(cls, name: str, version: int, doc: dict) -> "OutcomeSchema":
        return cls(name, version, {f: FieldSpec.from_doc(d) for f, d in doc.items()})


@dataclass(frozen=True)
class Violation:
    field: str
    code: str
    message: str

    def to_doc(self) -> dict:
        return {"field": self.field, "code": self.code, "message": self.message}


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_doc(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_doc() for v in self.violations]}


def check_schema_definition(doc: Any) -> list[str]:
    """Well-formedness of a schema document (field name -> spec)."""
    problems: list[str] = []
    if not isinstance(doc, dict) or not doc:
        return ["schema must declare at least one field"]
    for fname, spec in doc.items():
        if not isinstance(fname, str) or not fname:
            problems.append("field names must be non-empty strings")
            continue
        if not isinstance(spec, dict):
            problems.append(f"{fname}: spec must be an object")
            continue
        ftype = spec.get("type")
        if ftype not in FIELD_TYPES:
            problems.append(f"{fname}: unknown type {ftype!r}")
            continue
        if ftype == "enum":
            values = spec.get("values")
            if not isinstance(values, list) or not values or not all(
                isinstance(v, str) for v in values
            ):
                problems.append(f"{fname}: enum requires a non-empty list of string values")
        elif "values" in spec:
            problems.append(f"{fname}: values only allowed on enum fields")
        has_bounds = "min" in spec or "max" in spec
        if has_bounds and ftype not in ("integer", "number"):
            problems.append(f"{fname}: bounds only allowed on numeric fields")
        if has_bounds:
            lo, hi = spec.get("min"), spec.get("max")
            for bound, label in ((lo, "min"), (hi, "max")):
                if bound is not None and (isinstance(bound, bool) or not isinstance(bound, (int, float))):
                    problems.append(f"{fname}: {label} must be numeric")
            if (
                isinstance(lo, (int, float))
                and isinstance(hi, (int, float))
                and not isinstance(lo, bool)
                and not isinstance(hi, bool)
                and lo > hi
            ):
                problems.append(f"{fname}: min exceeds max")
        if "required" in spec and not isinstance(spec["required"], bool):
            problems.append(f"{fname}: required must be boolean")
    return problems


def _value_matches(spec: FieldSpec, value: Any) -> Violation | None:
    t = spec.type
    if t == "string":
        if not isinstance(value, str):
            return Violation("", "type_mismatch", "expected string")
    elif t == "integer":
        if isinstance(value, bool) or not isinstance(value, int):
            return Violation("", "type_mismatch", "expected integer")
    elif t == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return Violation("", "type_mismatch", "expected number")
    elif t == "boolean":
        if not isinstance(value, bool):
            return Violation("", "type_mismatch", "expected boolean")
    elif t == "enum":
        if not isinstance(value, str) or value not in (spec.values or ()):
            allowed = ",".join(spec.values or ())
            return Violation("", "enum_violation", f"expected one of {allowed}")
    if t in ("integer", "number") and isinstance(value, (int, float)) and not isinstance(value, bool):
        if spec.min is not None and value < spec.min:
            return Violation("", "bounds_violation", f"below minimum {spec.min}")
        if spec.max is not None and value > spec.max:
            return Violation("", "bounds_violation", f"above maximum {spec.max}")
    return None


def validate_outcome(content: Any, schema: OutcomeSchema) -> ValidationResult:
    """Closed-world validation of a flat outcome document against a schema.

    Every required field must be present, every present field must match its
    declared type/enum/bounds, and no undeclared fields may appear.
    """
    violations: list[Violation] = []
    if not isinstance(content, dict):
        return ValidationResult((Violation("", "not_a_document", "outcome must be an object"),))
    for fname, spec in sorted(schema.fields.items()):
        if spec.required and fname not in content:
            violations.append(
                Violation(fname, "missing_required", f"missing required field {fname}")
            )
    for fname in sorted(content):
        value = content[fname]
        if fname not in schema.fields:
            violations.append(Violation(fname, "undeclared_field", f"undeclared field {fname}"))
            continue
        problem = _value_matches(schema.fields[fname], value)
        if problem is not None:
            violations.append(replace(problem, field=fname))
    return ValidationResult(tuple(violations))


# ---------------------------------------------------------------------------
# Outcomes, viewpoints, collections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Outcome:
    item_id: str
    schema_name: str
    schema_version: int
    version: int
    content: dict
    event_seq: int

    def to_doc(self) -> dict:
        return {
            "itemId": self.item_id,
            "schema": self.schema_name,
            "schemaVersion": self.schema_version,
            "version": self.version,
            "content": self.content,
            "eventSeq": self.event_seq,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Outcome":
        return cls(
            item_id=doc["itemId"],
            schema_name=doc["schema"],
            schema_version=int(doc["schemaVersion"]),
            version=int(doc["version"]),
            content=doc["content"],
            event_seq=int(doc["eventSeq"]),
        )


@dataclass(frozen=True)
class ViewpointTarget:
    kind: str  # "latest" | "pinned"
    version: int | None = None

    def to_doc(self) -> dict:
        if self.kind == "pinned":
            return {"kind": "pinned", "version": self.version}
        return {"kind": "latest"}

    @classmethod
    def from_doc(cls, doc: dict) -> "ViewpointTarget":
        if doc.get("kind") == "pinned":
            return cls("pinned", int(doc["version"]))
        return cls("latest")


LATEST = ViewpointTarget("latest")


def pinned(version: int) -> ViewpointTarget:
    return ViewpointTarget("pinned", version)


@dataclass(frozen=True)
class Viewpoint:
    schema_name: str
    name: str
    target: ViewpointTarget

    def to_doc(self) -> dict:
        return {"schema": self.schema_name, "name": self.name, "target": self.target.to_doc()}

    @classmethod
    def from_doc(cls, doc: dict) -> "Viewpoint":
        return cls(doc["schema"], doc["name"], ViewpointTarget.from_doc(doc["target"]))


@dataclass(frozen=True)
class Member:
    child_id: str
    slots: tuple[Property, ...] = ()

    def to_doc(self) -> dict:
        return {"childId": self.child_id, "slots": [p.to_doc() for p in self.slots]}

    @classmethod
    def from_doc(cls, doc: dict) -> "Member":
        return cls(doc["childId"], tuple(Property.from_doc(p) for p in doc.get("slots", [])))


@dataclass(frozen=True)
class Collection:
    name: str
    constraint: str | None = None
    members: tuple[Member, ...] = ()

    def to_doc(self) -> dict:
        return {
            "name": self.name,
            "constraint": self.constraint,
            "members": [m.to_doc() for m in self.members],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "Collection":
        return cls(
            doc["name"],
            doc.get("constraint"),
            tuple(Member.from_doc(m) for m in doc.get("members", [])),
        )


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

class EventKind(str, Enum):
    CREATED = "Created"
    TRANSITION = "Transition"
    PROPERTY_SET = "PropertySet"
    COLLECTION_CHANGE = "CollectionChange"
    WORKFLOW_EDITED = "WorkflowEdited"
    VIEWPOINT_SET = "ViewpointSet"


class Transition(str, Enum):
    START = "Start"
    COMPLETE = "Complete"
    SUSPEND = "Suspend"
    RESUME = "Resume"
    SKIP = "Skip"  # engine-internal, never offered as a Job


# Transitions agents can request through jobs.
JOB_TRANSITIONS = (Transition.START, Transition.COMPLETE, Transition.SUSPEND, Transition.RESUME)


@dataclass(frozen=True)
class OutcomeRef:
    schema_name: str
    schema_version: int
    version: int

    def to_doc(self) -> dict:
        return {
            "schema": self.schema_name,
            "schemaVersion": self.schema_version,
            "version": self.version,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "OutcomeRef":
        return cls(doc["schema"], int(doc["schemaVersion"]), int(doc["version"]))


@dataclass(frozen=True)
class Event:
    """Immutable provenance record of one state change."""

    item_id: str
    seq: int
    agent_id: str
    role: str
    timestamp: int  # UTC milliseconds, engine-assigned
    kind: EventKind
    step_path: str | None = None
    transition: Transition | None = None
    outcome_ref: OutcomeRef | None = None
    purpose: str = ""
    payload: dict = field(default_factory=dict)
    batch_end: bool = True  # last event of its atomic commit

    def to_doc(self) -> dict:
        doc: dict = {
            "itemId": self.item_id,
            "seq": self.seq,
            "agentId": self.agent_id,
            "role": self.role,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "purpose": self.purpose,
            "batchEnd": self.batch_end,
        }
        if self.step_path is not None:
            doc["stepPath"] = self.step_path
        if self.transition is not None:
            doc["transition"] = self.transition.value
        if self.outcome_ref is not None:
            doc["outcomeRef"] = self.outcome_ref.to_doc()
        if self.payload:
            doc["payload"] = self.payload
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Event":
        return cls(
            item_id=doc["itemId"],
            seq=int(doc["seq"]),
            agent_id=doc["agentId"],
            role=doc["role"],
            timestamp=int(doc["timestamp"]),
            kind=EventKind(doc["kind"]),
            step_path=doc.get("stepPath"),
            transition=Transition(doc["transition"]) if "transition" in doc else None,
            outcome_ref=OutcomeRef.from_doc(doc["outcomeRef"]) if "outcomeRef" in doc else None,
            purpose=doc.get("purpose", ""),
            payload=doc.get("payload", {}),
            batch_end=bool(doc.get("batchEnd", True)),
        )


# ---------------------------------------------------------------------------
# Item snapshot
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Origin:
    desc_item_id: str
    version: int
    source_item_id: str | None = None

    def to_doc(self) -> dict:
        doc: dict = {"descItemId": self.desc_item_id, "version": self.version}
        if self.source_item_id is not None:
            doc["sourceItemId"] = self.source_item_id
        return doc


@dataclass(frozen=True)
class ItemSnapshot:
    """The live state of an Item: a pure function of its event sequence."""

    id: str
    properties: dict[str, Property]
    collections: dict[str, Collection]
    outcomes: dict[str, tuple[Outcome, ...]]  # schema name -> versions 0..n
    viewpoints: dict[tuple[str, str], Viewpoint]
    workflow: Any  # workflow.WorkflowInstance
    origin: Origin | None
    last_event_seq: int
    last_timestamp: int

    @property
    def name(self) -> str:
        prop = self.properties.get(RESERVED_NAME)
        return str(prop.value) if prop else ""

    @property
    def type_name(self) -> str:
        prop = self.properties.get(RESERVED_TYPE)
        return str(prop.value) if prop else ""

    def outcome(self, schema_name: str, version: int) -> Outcome:
        versions = self.outcomes.get(schema_name, ())
        if not 0 <= version < len(versions):
            raise NoOutcomes(f"no outcome {schema_name} v{version} on {self.id}")
        return versions[version]

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "lastEventSeq": self.last_event_seq,
            "lastTimestamp": self.last_timestamp,
            "properties": [p.to_doc() for _, p in sorted(self.properties.items())],
            "collections": [c.to_doc() for _, c in sorted(self.collections.items())],
            "outcomes": [
                o.to_doc()
                for _, versions in sorted(self.outcomes.items())
                for o in versions
            ],
            "viewpoints": [v.to_doc() for _, v in sorted(self.viewpoints.items())],
            "workflow": self.workflow.to_doc() if self.workflow else None,
            "origin": self.origin.to_doc() if self.origin else None,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ItemSnapshot":
        from . import workflow as _workflow  # noqa: PLC0415 (cycle at import time)

        outcomes: dict[str, list[Outcome]] = {}
        for odoc in doc.get("outcomes", []):
            outcomes.setdefault(odoc["schema"], []).append(Outcome.from_doc(odoc))
        for versions in outcomes.values():
            versions.sort(key=lambda o: o.version)
        origin_doc = doc.get("origin")
        return cls(
            id=doc["id"],
            properties={p["name"]: Property.from_doc(p) for p in doc.get("properties", [])},
            collections={c["name"]: Collection.from_doc(c) for c in doc.get("collections", [])},
            outcomes={s: tuple(v) for s, v in outcomes.items()},
            viewpoints={
                (v["schema"], v["name"]): Viewpoint.from_doc(v)
                for v in doc.get("viewpoints", [])
            },
            workflow=_workflow.WorkflowInstance.from_doc(doc["workflow"]),
            origin=Origin(
                origin_doc["descItemId"],
                int(origin_doc["version"]),
                origin_doc.get("sourceItemId"),
            )
            if origin_doc
            else None,
            last_event_seq=int(doc["lastEventSeq"]),
            last_timestamp=int(doc.get("lastTimestamp", 0)),
        )


def resolve_viewpoint(item: ItemSnapshot, schema_name: str, viewpoint_name: str) -> int:
    """Resolve a viewpoint to a concrete outcome version.

    "last" is implicit on every schema with at least one outcome; named
    viewpoints resolve Latest to the max version and Pinned to its fixed one.
    """
    versions = item.outcomes.get(schema_name, ())
    if viewpoint_name == "last":
        if not versions:
            raise NoOutcomes(f"item {item.id} has no outcomes of {schema_name}")
        return len(versions) - 1
    vp = item.viewpoints.get((schema_name, viewpoint_name))
    if vp is None:
        raise UnknownViewpoint(f"no viewpoint {viewpoint_name!r} for {schema_name} on {item.id}")
    if vp.target.kind == "pinned":
        return int(vp.target.version)  # type: ignore[arg-type]
    if not versions:
        raise NoOutcomes(f"item {item.id} has no outcomes of {schema_name}")
    return len(versions) - 1
