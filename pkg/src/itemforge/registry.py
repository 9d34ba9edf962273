"""Descriptions as Items: bootstrap meta-descriptions, schema and description
registration, instantiation, promotion and version diffing.

Everything here drives the kernel through ordinary Store operations, so every
registry mutation is visible as Item events — descriptions have no private
write path. A description versions itself by executing one iteration of its
own meta-workflow (an unbounded loop of define-activities, exited only when
the description's "Retired" property is set true).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import predicates, workflow
from .canonical import canonical_json
from .errors import (
    Conflict,
    DuplicateName,
    ImmutableProperty,
    InvalidDefinition,
    InvalidRequest,
    NotFound,
    UnknownAgent,
    UnknownDescription,
    UnknownItem,
    UnknownSchema,
    UnknownVersion,
    UnresolvableSelector,
)
from .model import (
    BUILTIN_COLLECTIONS,
    ItemSnapshot,
    Property,
    RESERVED_NAME,
    RESERVED_TYPE,
    Transition,
    check_schema_definition,
    resolve_viewpoint,
)
from .provenance import lineage_record
from .store import BUILTIN_SCHEMAS, ITEM_DESC_TYPE, SCHEMA_DESC_TYPE, Store

# Fixed ids of the bootstrap meta-Items.
ITEM_DESCRIPTION_ID = "00000000-0000-4000-8000-000000000001"
SCHEMA_DESCRIPTION_ID = "00000000-0000-4000-8000-000000000002"
AGENT_DESCRIPTION_ID = "00000000-0000-4000-8000-000000000003"
SYSTEM_AGENT_ID = "00000000-0000-4000-8000-000000000004"

MODELER_ROLE = "modeler"
ADMIN_ROLE = "admin"

VERSION_SCHEMAS = ("WorkflowDef", "PropertyDefList", "CollectionDefList")


@dataclass(frozen=True)
class AgentRef:
    """An executing agent: itself an Item of Type "Agent"."""

    agent_item_id: str
    name: str
    roles: frozenset[str]
    kind: str = "Human"  # "Human" | "Mechanical"

    def to_doc(self) -> dict:
        return {
            "agentItemId": self.agent_item_id,
            "name": self.name,
            "roles": sorted(self.roles),
            "kind": self.kind,
        }


@dataclass(frozen=True)
class BootstrapSet:
    item_description_id: str = ITEM_DESCRIPTION_ID
    schema_description_id: str = SCHEMA_DESCRIPTION_ID
    agent_description_id: str = AGENT_DESCRIPTION_ID
    system_agent_id: str = SYSTEM_AGENT_ID


@dataclass(frozen=True)
class DescriptionDefs:
    """One version's content: a workflow plus instance templates."""

    workflow_doc: dict
    property_defs: tuple[Property, ...] = ()
    collection_defs: tuple[dict, ...] = ()  # {"name":..., "constraint":...}

    def to_docs(self) -> dict[str, dict]:
        return {
            "WorkflowDef": {"document": canonical_json(self.workflow_doc)},
            "PropertyDefList": {
                "document": canonical_json([p.to_doc() for p in self.property_defs])
            },
            "CollectionDefList": {"document": canonical_json(list(self.collection_defs))},
        }

    @classmethod
    def from_request(cls, defs: dict) -> "DescriptionDefs":
        return cls(
            workflow_doc=defs["workflow"],
            property_defs=tuple(Property.from_doc(p) for p in defs.get("properties", [])),
            collection_defs=tuple(defs.get("collections", [])),
        )


# ---------------------------------------------------------------------------
# Meta workflows
# ---------------------------------------------------------------------------

def _retired_exit() -> dict:
    return predicates.prop_equals("Retired", True)


def _define_body(activities: list[tuple[str, str]]) -> workflow.Graph:
    return workflow.chain(*[
        (name, workflow.activity(MODELER_ROLE, (schema, 0)))
        for name, schema in activities
    ])


def item_description_workflow() -> workflow.Graph:
    body = _define_body([
        ("DefineWorkflow", "WorkflowDef"),
        ("DefineProperties", "PropertyDefList"),
        ("DefineCollections", "CollectionDefList"),
    ])
    nodes = {"Define": workflow.loop(body, _retired_exit())}
    return workflow.Graph(nodes, (), "Define", frozenset({"Define"}))


def schema_description_workflow() -> workflow.Graph:
    body = _define_body([("DefineSchema", "SchemaDef")])
    nodes = {"Define": workflow.loop(body, _retired_exit())}
    return workflow.Graph(nodes, (), "Define", frozenset({"Define"}))


def agent_workflow() -> workflow.Graph:
    body = workflow.chain(("Update", workflow.activity(ADMIN_ROLE)))
    nodes = {"Maintain": workflow.loop(body, _retired_exit())}
    return workflow.Graph(nodes, (), "Maintain", frozenset({"Maintain"}))


_DESC_TEMPLATE_PROPS = (Property("Retired", False), Property("Deprecated", False))


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

def bootstrap_meta_descriptions(store: Store) -> BootstrapSet:
    """Create the self-describing meta-Items; idempotent (zero events when
    they already exist)."""
    bootstrap = BootstrapSet()
    if store.has_item(ITEM_DESCRIPTION_ID):
        return bootstrap
    system = AgentRef(SYSTEM_AGENT_ID, "system",
                      frozenset({ADMIN_ROLE, MODELER_ROLE}), "Mechanical")
    item_desc_graph = workflow.graph_to_doc(item_description_workflow())

    def created_payload(name: str, type_name: str, desc_id: str, version: int,
                        graph_doc: dict, extra_props: tuple[Property, ...]) -> dict:
        props = [Property(RESERVED_NAME, name).to_doc(),
                 Property(RESERVED_TYPE, type_name, mutable=False).to_doc()]
        props += [p.to_doc() for p in extra_props]
        return {
            "name": name,
            "descItemId": desc_id,
            "descVersion": version,
            "properties": props,
            "collections": [],
            "workflow": graph_doc,
        }

    store.create_item(ITEM_DESCRIPTION_ID, system, ADMIN_ROLE, "bootstrap",
                      created_payload("ItemDescription", ITEM_DESC_TYPE,
                                      ITEM_DESCRIPTION_ID, 0, item_desc_graph,
                                      _DESC_TEMPLATE_PROPS))
    _store_version(store, ITEM_DESCRIPTION_ID,
                   DescriptionDefs(item_desc_graph, _DESC_TEMPLATE_PROPS),
                   system, "bootstrap")

    store.create_item(SCHEMA_DESCRIPTION_ID, system, ADMIN_ROLE, "bootstrap",
                      created_payload("SchemaDescription", ITEM_DESC_TYPE,
                                      ITEM_DESCRIPTION_ID, 0, item_desc_graph,
                                      _DESC_TEMPLATE_PROPS))
    _store_version(store, SCHEMA_DESCRIPTION_ID,
                   DescriptionDefs(workflow.graph_to_doc(schema_description_workflow()),
                                   _DESC_TEMPLATE_PROPS),
                   system, "bootstrap")
    store.update_collection(ITEM_DESCRIPTION_ID, "Instances", "add",
                            SCHEMA_DESCRIPTION_ID, agent=system, purpose="bootstrap")

    agent_props = (Property("Retired", False), Property("Roles", ""),
                   Property("AgentKind", "Human"))
    store.create_item(AGENT_DESCRIPTION_ID, system, ADMIN_ROLE, "bootstrap",
                      created_payload("Agent", ITEM_DESC_TYPE,
                                      ITEM_DESCRIPTION_ID, 0, item_desc_graph,
                                      _DESC_TEMPLATE_PROPS))
    _store_version(store, AGENT_DESCRIPTION_ID,
                   DescriptionDefs(workflow.graph_to_doc(agent_workflow()), agent_props),
                   system, "bootstrap")
    store.update_collection(ITEM_DESCRIPTION_ID, "Instances", "add",
                            AGENT_DESCRIPTION_ID, agent=system, purpose="bootstrap")

    store.create_item(SYSTEM_AGENT_ID, system, ADMIN_ROLE, "bootstrap",
                      created_payload("system", "Agent", AGENT_DESCRIPTION_ID, 0,
                                      workflow.graph_to_doc(agent_workflow()),
                                      (Property("Retired", False),
                                       Property("Roles", "admin,modeler"),
                                       Property("AgentKind", "Mechanical"))))
    store.update_collection(AGENT_DESCRIPTION_ID, "Instances", "add",
                            SYSTEM_AGENT_ID, agent=system, purpose="bootstrap")
    store.files.set_bootstrapped()
    return bootstrap


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

def agent_ref(store: Store, agent_item_id: str) -> AgentRef:
    try:
        snapshot = store.item(agent_item_id)
    except UnknownItem as e:
        raise UnknownAgent(str(e)) from e
    if snapshot.type_name != "Agent":
        raise UnknownAgent(f"item {agent_item_id} is not an Agent")
    roles_prop = snapshot.properties.get("Roles")
    roles = frozenset(r for r in str(roles_prop.value).split(",") if r) if roles_prop else frozenset()
    kind_prop = snapshot.properties.get("AgentKind")
    return AgentRef(snapshot.id, snapshot.name, roles,
                    str(kind_prop.value) if kind_prop else "Human")


def create_agent(store: Store, name: str, roles: list[str], kind: str,
                 agent: AgentRef, purpose: str = "") -> AgentRef:
    if store.query_items([(RESERVED_TYPE, "==", "Agent"), (RESERVED_NAME, "==", name)]):
        raise DuplicateName(f"an agent named {name!r} already exists")
    snapshot = instantiate_item(store, AGENT_DESCRIPTION_ID, ("viewpoint", "last"),
                                name, agent, purpose or f"create agent {name}")
    store.set_property(snapshot.id, "Roles", ",".join(sorted(set(roles))), agent,
                       purpose="assign roles")
    store.set_property(snapshot.id, "AgentKind", kind, agent, purpose="set agent kind")
    return agent_ref(store, snapshot.id)


def system_agent(store: Store) -> AgentRef:
    return agent_ref(store, SYSTEM_AGENT_ID)


# ---------------------------------------------------------------------------
# Version storage through the meta-workflow
# ---------------------------------------------------------------------------

def _store_version(store: Store, desc_id: str, defs: DescriptionDefs,
                   agent: AgentRef, purpose: str, source_item: str | None = None) -> int:
    """Run one Define iteration on a description Item, storing the defs trio.
    Returns the stored version number."""
    snapshot = store.item(desc_id)
    loop_path = snapshot.workflow.graph.start
    iteration = snapshot.workflow.iterations.get(loop_path, 0)
    docs = defs.to_docs()
    if source_item is not None:
        docs["WorkflowDef"]["sourceItem"] = source_item
    version = len(snapshot.outcomes.get("WorkflowDef", ()))
    body = snapshot.workflow.graph.nodes[loop_path].subgraph
    order = _chain_order(body)
    first_path = f"{loop_path}[{iteration}]/{order[0]}"
    if snapshot.workflow.state(first_path) != workflow.ActivityState.WAITING:
        raise Conflict(
            f"a definition iteration is already in progress on {snapshot.name}"
        )
    for activity_name in order:
        schema_name = body.nodes[activity_name].activity.schema_ref[0]
        path = f"{loop_path}[{iteration}]/{activity_name}"
        store.apply_transition(desc_id, path, Transition.START, None, agent, purpose)
        store.apply_transition(desc_id, path, Transition.COMPLETE,
                               docs[schema_name], agent, purpose)
    return version


def _chain_order(graph: workflow.Graph) -> list[str]:
    order = [graph.start]
    while True:
        succs = graph.successors(order[-1])
        if not succs:
            return order
        order.append(succs[0])


def _schema_version_store(store: Store, item_id: str, definition: dict,
                          agent: AgentRef, purpose: str) -> int:
    snapshot = store.item(item_id)
    loop_path = snapshot.workflow.graph.start
    iteration = snapshot.workflow.iterations.get(loop_path, 0)
    version = len(snapshot.outcomes.get("SchemaDef", ()))
    path = f"{loop_path}[{iteration}]/DefineSchema"
    content = {"document": canonical_json(definition)}
    store.apply_transition(item_id, path, Transition.START, None, agent, purpose)
    store.apply_transition(item_id, path, Transition.COMPLETE, content, agent, purpose)
    return version


# ---------------------------------------------------------------------------
# Schemas
# ---------------------------------------------------------------------------

def register_schema(store: Store, name: str, definition: dict,
                    agent: AgentRef, purpose: str = "") -> tuple[str, int]:
    problems = check_schema_definition(definition)
    if problems:
        raise InvalidDefinition(f"schema {name!r} is malformed", violations=problems)
    if store.schema_exists(name):
        raise DuplicateName(f"a schema named {name!r} already exists")
    snapshot = instantiate_item(store, SCHEMA_DESCRIPTION_ID, ("viewpoint", "last"),
                                name, agent, purpose or f"register schema {name}")
    version = _schema_version_store(store, snapshot.id, definition, agent,
                                    purpose or f"register schema {name}")
    return snapshot.id, version


def add_schema_version(store: Store, name: str, definition: dict,
                       agent: AgentRef, purpose: str = "") -> int:
    problems = check_schema_definition(definition)
    if problems:
        raise InvalidDefinition(f"schema {name!r} is malformed", violations=problems)
    holders = store.query_items([(RESERVED_TYPE, "==", SCHEMA_DESC_TYPE),
                                 (RESERVED_NAME, "==", name)])
    if not holders:
        raise UnknownSchema(f"no schema named {name!r}")
    return _schema_version_store(store, sorted(holders)[0], definition, agent, purpose)


# ---------------------------------------------------------------------------
# Descriptions
# ---------------------------------------------------------------------------

def _validate_defs(store: Store, defs: DescriptionDefs) -> workflow.Graph:
    try:
        graph = workflow.graph_from_doc(defs.workflow_doc)
    except (InvalidRequest, KeyError, TypeError) as e:
        raise InvalidDefinition(f"unreadable workflow document: {e}") from e
    violations = workflow.validate_graph(graph)
    if violations:
        raise InvalidDefinition("workflow graph is invalid",
                                violations=[v.to_doc() for v in violations])
    for path, node in workflow.walk_paths(graph).items():
        schema = node.get("schema")
        if node.get("kind") == workflow.ACTIVITY and schema:
            try:
                store.schema(schema["name"], int(schema["version"]))
            except UnknownSchema as e:
                raise InvalidDefinition(
                    f"activity {path} references unknown schema "
                    f"{schema['name']} v{schema['version']}"
                ) from e
    for prop in defs.property_defs:
        if prop.name in (RESERVED_NAME, RESERVED_TYPE):
            raise InvalidDefinition(f"property template may not redefine {prop.name!r}")
    for coll in defs.collection_defs:
        if not coll.get("name") or coll["name"] in BUILTIN_COLLECTIONS:
            raise InvalidDefinition(f"illegal collection template {coll.get('name')!r}")
    return graph


def find_description(store: Store, name_or_id: str) -> ItemSnapshot:
    if store.has_item(name_or_id):
        snapshot = store.item(name_or_id)
    else:
        ids = store.query_items([(RESERVED_TYPE, "==", ITEM_DESC_TYPE),
                                 (RESERVED_NAME, "==", name_or_id)])
        if not ids:
            raise UnknownDescription(f"no description {name_or_id!r}")
        snapshot = store.item(sorted(ids)[0])
    if snapshot.type_name != ITEM_DESC_TYPE:
        raise UnknownDescription(f"item {name_or_id} is not a description")
    return snapshot


def register_description(store: Store, name: str, defs: DescriptionDefs,
                         agent: AgentRef, purpose: str = "") -> tuple[str, int]:
    if store.query_items([(RESERVED_TYPE, "==", ITEM_DESC_TYPE),
                          (RESERVED_NAME, "==", name)]):
        raise DuplicateName(f"a description named {name!r} already exists")
    _validate_defs(store, defs)
    snapshot = instantiate_item(store, ITEM_DESCRIPTION_ID, ("viewpoint", "last"),
                                name, agent, purpose or f"register {name}")
    version = _store_version(store, snapshot.id, defs, agent,
                             purpose or f"register {name}")
    return snapshot.id, version


def add_description_version(store: Store, desc: str, defs: DescriptionDefs,
                            agent: AgentRef, purpose: str = "",
                            source_item: str | None = None) -> int:
    snapshot = find_description(store, desc)
    _validate_defs(store, defs)
    return _store_version(store, snapshot.id, defs, agent,
                          purpose or f"new version of {snapshot.name}",
                          source_item=source_item)


def describe(store: Store, desc_id: str, version: int) -> DescriptionDefs:
    snapshot = find_description(store, desc_id)
    cache = getattr(store, "_defs_cache", None)
    if cache is None:
        cache = store._defs_cache = {}
    key = (snapshot.id, version)
    if key in cache:
        return cache[key]
    versions = snapshot.outcomes.get("WorkflowDef", ())
    if not 0 <= version < len(versions):
        raise UnknownVersion(f"{snapshot.name} has no version {version}")
    workflow_doc = json.loads(versions[version].content["document"])
    props = json.loads(snapshot.outcomes["PropertyDefList"][version].content["document"])
    colls = json.loads(snapshot.outcomes["CollectionDefList"][version].content["document"])
    defs = DescriptionDefs(
        workflow_doc=workflow_doc,
        property_defs=tuple(Property.from_doc(p) for p in props),
        collection_defs=tuple(colls),
    )
    cache[key] = defs  # versions are immutable once stored
    return defs


def description_versions(store: Store, desc_id: str) -> int:
    return len(find_description(store, desc_id).outcomes.get("WorkflowDef", ()))


# ---------------------------------------------------------------------------
# Instantiation and re-run
# ---------------------------------------------------------------------------

def _resolve_selector(snapshot: ItemSnapshot, selector) -> int:
    kind, value = selector
    versions = snapshot.outcomes.get("WorkflowDef", ())
    if kind == "pinned":
        if not 0 <= int(value) < len(versions):
            raise UnresolvableSelector(f"{snapshot.name} has no version {value}")
        return int(value)
    if kind == "viewpoint":
        try:
            return resolve_viewpoint(snapshot, "WorkflowDef", str(value))
        except NotFound as e:
            raise UnresolvableSelector(str(e)) from e
    raise UnresolvableSelector(f"unknown selector {selector!r}")


def instantiate_item(store: Store, desc: str, selector, instance_name: str,
                     agent: AgentRef, purpose: str = "",
                     overrides: list[Property] | None = None,
                     source_item: str | None = None) -> ItemSnapshot:
    desc_snapshot = find_description(store, desc)
    if not instance_name:
        raise InvalidRequest("instance name must be non-empty")
    version = _resolve_selector(desc_snapshot, selector)
    deprecated = desc_snapshot.properties.get("Deprecated")
    if deprecated is not None and deprecated.value is True:
        warnings.warn(f"instantiating deprecated description {desc_snapshot.name}",
                      stacklevel=2)
    defs = describe(store, desc_snapshot.id, version)
    properties: dict[str, Property] = {
        RESERVED_NAME: Property(RESERVED_NAME, instance_name),
        RESERVED_TYPE: Property(RESERVED_TYPE, desc_snapshot.name, mutable=False),
    }
    for prop in defs.property_defs:
        properties[prop.name] = prop
    for override in overrides or ():
        existing = properties.get(override.name)
        if override.name == RESERVED_TYPE or (existing and not existing.mutable):
            raise ImmutableProperty(f"cannot override immutable property {override.name!r}")
        properties[override.name] = Property(override.name, override.value)
    payload = {
        "name": instance_name,
        "descItemId": desc_snapshot.id,
        "descVersion": version,
        "properties": [p.to_doc() for p in properties.values()],
        "collections": [
            {"name": c["name"], "constraint": c.get("constraint")}
            for c in defs.collection_defs
        ],
        "workflow": defs.workflow_doc,
    }
    if source_item is not None:
        payload["sourceItemId"] = source_item
    item_id = store.new_id()
    snapshot = store.create_item(item_id, agent, store.acting_role(agent), purpose, payload)
    store.update_collection(desc_snapshot.id, "Instances", "add", item_id,
                            slots=[Property("version", version)],
                            agent=agent, purpose=purpose or "instantiate")
    return snapshot


def rerun_item(store: Store, source_id: str, overrides: list[Property],
               instance_name: str, agent: AgentRef, purpose: str = "") -> ItemSnapshot:
    source = store.item(source_id)
    if source.origin is None:
        raise UnknownItem(f"item {source_id} has no resolvable origin")
    desc = find_description(store, source.origin.desc_item_id)
    return instantiate_item(
        store, desc.id, ("pinned", source.origin.version), instance_name, agent,
        purpose or f"re-run of {source.name}", overrides=overrides,
        source_item=source_id,
    )


# ---------------------------------------------------------------------------
# Promotion and diff
# ---------------------------------------------------------------------------

def promote_instance_workflow(store: Store, item_id: str, target_desc: str,
                              agent: AgentRef, purpose: str = "") -> int:
    source = store.item(item_id)
    desc = find_description(store, target_desc)
    graph_doc = workflow.graph_to_doc(source.workflow.graph)
    latest = description_versions(store, desc.id) - 1
    base = describe(store, desc.id, latest)
    defs = DescriptionDefs(graph_doc, base.property_defs, base.collection_defs)
    version = add_description_version(
        store, desc.id, defs, agent,
        purpose or f"promoted from {source.name}", source_item=item_id,
    )
    store.update_collection(item_id, "Promotions", "add", desc.id,
                            slots=[Property("version", version)],
                            agent=agent, purpose=purpose or "promotion")
    return version


def diff_description_versions(store: Store, desc: str, v1: int, v2: int) -> dict:
    snapshot = find_description(store, desc)
    total = description_versions(store, snapshot.id)
    for v in (v1, v2):
        if not 0 <= v < total:
            raise UnknownVersion(f"{snapshot.name} has no version {v}")
    old, new = describe(store, snapshot.id, v1), describe(store, snapshot.id, v2)
    change_set = workflow.diff_graphs(
        workflow.graph_from_doc(old.workflow_doc),
        workflow.graph_from_doc(new.workflow_doc),
    )
    change_set["propertyDefChanges"] = _template_diff(
        {p.name: p.to_doc() for p in old.property_defs},
        {p.name: p.to_doc() for p in new.property_defs},
    )
    change_set["collectionDefChanges"] = _template_diff(
        {c["name"]: c for c in old.collection_defs},
        {c["name"]: c for c in new.collection_defs},
    )
    return change_set


def _template_diff(old: dict[str, dict], new: dict[str, dict]) -> dict:
    return {
        "added": sorted(set(new) - set(old)),
        "removed": sorted(set(old) - set(new)),
        "changed": sorted(k for k in set(old) & set(new) if old[k] != new[k]),
    }


# ---------------------------------------------------------------------------
# Lineage
# ---------------------------------------------------------------------------

def lineage_chain(store: Store, item_id: str) -> list[dict]:
    """Created-event chain from an item up to the bootstrap meta-Items,
    annotated with promotion sources where a version came from an instance."""
    if not store.files.has_item(item_id):
        raise UnknownItem(f"no item {item_id}")
    chain: list[dict] = []
    seen: set[str] = set()
    current = item_id
    while current not in seen:
        seen.add(current)
        created = store.files.read_events(current)[0]
        origin_desc = created.payload["descItemId"]
        origin_version = int(created.payload["descVersion"])
        promoted_from = None
        if store.files.has_item(origin_desc):
            desc_snapshot = store.item(origin_desc)
            versions = desc_snapshot.outcomes.get("WorkflowDef", ())
            if 0 <= origin_version < len(versions):
                promoted_from = versions[origin_version].content.get("sourceItem")
        chain.append(lineage_record(created, promoted_from).to_doc())
        if origin_desc == current:
            break
        current = origin_desc
    return chain


# ---------------------------------------------------------------------------
# Description archives (share a description between stores)
# ---------------------------------------------------------------------------

def export_description(store: Store, desc: str, path: str | Path) -> dict:
    snapshot = find_description(store, desc)
    total = description_versions(store, snapshot.id)
    versions = []
    schema_names: set[str] = set()
    for v in range(total):
        defs = describe(store, snapshot.id, v)
        graph = workflow.graph_from_doc(defs.workflow_doc)
        for node in workflow.walk_paths(graph).values():
            if node.get("schema"):
                schema_names.add(node["schema"]["name"])
        versions.append({
            "workflow": defs.workflow_doc,
            "properties": [p.to_doc() for p in defs.property_defs],
            "collections": list(defs.collection_defs),
        })
    schemas: dict[str, list[dict]] = {}
    for name in sorted(schema_names):
        if any(k[0] == name for k in BUILTIN_SCHEMAS):
            continue
        holders = store.query_items([(RESERVED_TYPE, "==", SCHEMA_DESC_TYPE),
                                     (RESERVED_NAME, "==", name)])
        holder = store.item(sorted(holders)[0])
        schemas[name] = [
            json.loads(o.content["document"])
            for o in holder.outcomes.get("SchemaDef", ())
        ]
    archive = {"name": snapshot.name, "versions": versions, "schemas": schemas}
    Path(path).write_text(canonical_json(archive), "utf-8")
    return archive


def import_description(store: Store, path: str | Path, agent: AgentRef) -> tuple[str, int]:
    archive = json.loads(Path(path).read_text("utf-8"))
    for name, versions in sorted(archive.get("schemas", {}).items()):
        for i, definition in enumerate(versions):
            if store.schema_exists(name):
                try:
                    existing = store.schema(name, i)
                    if existing.to_doc() == definition:
                        continue
                    raise DuplicateName(f"schema {name!r} v{i} differs from the archive")
                except UnknownSchema:
                    add_schema_version(store, name, definition, agent, "import")
            else:
                register_schema(store, name, definition, agent, "import")
    name = archive["name"]
    versions = archive["versions"]
    if not versions:
        raise InvalidDefinition("archive holds no versions")
    first = DescriptionDefs.from_request(versions[0])
    desc_id, _ = register_description(store, name, first, agent, "import")
    for vdoc in versions[1:]:
        add_description_version(store, desc_id, DescriptionDefs.from_request(vdoc),
                                agent, "import")
    return desc_id, len(versions) - 1
