"""Descriptions-as-Items: bootstrap, registration, versioning, instantiation,
promotion and diffing."""

import random

import pytest

from itemforge import (
    DescriptionDefs,
    add_description_version,
    describe,
    diff_description_versions,
    export_description,
    import_description,
    instantiate_item,
    open_store,
    promote_instance_workflow,
    register_description,
    register_schema,
    rerun_item,
    system_agent,
)
from itemforge import registry, workflow as wf
from itemforge.errors import (
    DuplicateName,
    ImmutableProperty,
    InvalidDefinition,
    UnknownVersion,
    UnresolvableSelector,
)
from itemforge.model import Property, Transition
from itemforge.registry import (
    AGENT_DESCRIPTION_ID,
    ITEM_DESCRIPTION_ID,
    SCHEMA_DESCRIPTION_ID,
    SYSTEM_AGENT_ID,
)
from test_workflow_exec import act


def simple_defs(*names: str) -> DescriptionDefs:
    graph = wf.chain(*[(n, act("op")) for n in names])
    return DescriptionDefs(wf.graph_to_doc(graph))


def test_bootstrap_creates_meta_items_with_fixed_ids(store):
    for item_id, name in ((ITEM_DESCRIPTION_ID, "ItemDescription"),
                          (SCHEMA_DESCRIPTION_ID, "SchemaDescription"),
                          (AGENT_DESCRIPTION_ID, "Agent"),
                          (SYSTEM_AGENT_ID, "system")):
        assert store.item(item_id).name == name


def test_bootstrap_idempotent(tmp_path):
    store = open_store(tmp_path / "s", create=True)
    seqs = {i: store.item(i).last_event_seq for i in store.item_ids()}
    registry.bootstrap_meta_descriptions(store)  # second call: zero events
    assert {i: store.item(i).last_event_seq for i in store.item_ids()} == seqs
    store.close()
    reopened = open_store(tmp_path / "s")
    assert {i: reopened.item(i).last_event_seq for i in reopened.item_ids()} == seqs


def test_meta_lineage_terminates_quickly(store):
    chain = store.lineage(SCHEMA_DESCRIPTION_ID)
    assert [r["itemId"] for r in chain] == [SCHEMA_DESCRIPTION_ID, ITEM_DESCRIPTION_ID]
    assert store.lineage(ITEM_DESCRIPTION_ID)[-1]["itemId"] == ITEM_DESCRIPTION_ID


def test_register_description_and_duplicate(store, operator):
    desc_id, version = register_description(store, "SparkPlugType",
                                            simple_defs("TestPlug", "Mount"), operator)
    assert version == 0
    with pytest.raises(DuplicateName):
        register_description(store, "SparkPlugType", simple_defs("X"), operator)


def test_register_invalid_graph_carries_validator_output(store, operator):
    bad_doc = {
        "nodes": {"A": wf.node_to_doc(act()), "B": wf.node_to_doc(act()),
                  "C": wf.node_to_doc(act())},
        "edges": [["A", "B"], ["A", "C"]],
        "start": "A",
        "ends": ["B"],
    }
    with pytest.raises(InvalidDefinition) as exc:
        register_description(store, "Bad", DescriptionDefs(bad_doc), operator)
    expected = wf.validate_graph(wf.graph_from_doc(bad_doc))
    assert exc.value.violations == [v.to_doc() for v in expected]


def test_register_unresolvable_schema_ref(store, operator):
    graph = wf.chain(("A", act("op", ("NoSuchSchema", 0))))
    with pytest.raises(InvalidDefinition):
        register_description(store, "Bad", DescriptionDefs(wf.graph_to_doc(graph)),
                             operator)


def test_versions_accumulate_and_old_remain_bit_identical(store, operator):
    desc_id, _ = register_description(store, "Widget", simple_defs("A"), operator)
    docs = [describe(store, desc_id, 0).workflow_doc]
    for i in range(1, 6):
        defs = simple_defs(*[f"A{k}" for k in range(i + 1)])
        assert add_description_version(store, desc_id, defs, operator) == i
        docs.append(defs.workflow_doc)
    assert registry.description_versions(store, desc_id) == 6
    for i, doc in enumerate(docs):
        assert describe(store, desc_id, i).workflow_doc == doc
    from itemforge import resolve_viewpoint

    assert resolve_viewpoint(store.item(desc_id), "WorkflowDef", "last") == 5


def test_identical_version_yields_empty_diff(store, operator):
    desc_id, _ = register_description(store, "Widget", simple_defs("A"), operator)
    add_description_version(store, desc_id, simple_defs("A"), operator)
    change_set = diff_description_versions(store, desc_id, 0, 1)
    assert change_set["addedNodes"] == [] and change_set["removedNodes"] == []
    assert change_set["changedParams"] == []
    assert change_set["changedEdges"] == {"added": [], "removed": []}


def test_instances_progress_independently(store, operator):
    desc_id, _ = register_description(store, "Widget",
                                      simple_defs("A", "B"), operator)
    first = instantiate_item(store, desc_id, ("viewpoint", "last"), "#123", operator)
    store.apply_transition(first.id, "A", Transition.START, None, operator)
    add_description_version(store, desc_id, simple_defs("A", "Extra", "B"), operator)
    second = instantiate_item(store, desc_id, ("viewpoint", "last"), "#124", operator)
    # the mid-flight instance is unaffected by the new version
    snap, _ = store.apply_transition(first.id, "A", Transition.COMPLETE, None, operator)
    assert "Extra" not in snap.workflow.graph.nodes
    assert "Extra" in store.item(second.id).workflow.graph.nodes
    assert store.item(first.id).origin.version == 0
    assert store.item(second.id).origin.version == 1


def test_instantiate_selector_semantics(store, operator):
    desc_id, _ = register_description(store, "Widget", simple_defs("A"), operator)
    add_description_version(store, desc_id, simple_defs("A", "B"), operator)
    pinned_item = instantiate_item(store, desc_id, ("pinned", 0), "pin0", operator)
    assert list(pinned_item.workflow.graph.nodes) == ["A"]
    with pytest.raises(UnresolvableSelector):
        instantiate_item(store, desc_id, ("pinned", 9), "nope", operator)
    with pytest.raises(UnresolvableSelector):
        instantiate_item(store, desc_id, ("viewpoint", "nope"), "nope", operator)


def test_instantiation_purity(store, operator):
    desc_id, _ = register_description(store, "Widget", simple_defs("A", "B"), operator)
    a = instantiate_item(store, desc_id, ("pinned", 0), "one", operator)
    b = instantiate_item(store, desc_id, ("pinned", 0), "two", operator)
    assert a.workflow.graph == b.workflow.graph
    assert a.workflow.states == b.workflow.states == {}


def test_description_records_instances(store, operator):
    desc_id, _ = register_description(store, "Widget", simple_defs("A"), operator)
    item = instantiate_item(store, desc_id, ("viewpoint", "last"), "w-1", operator)
    members = store.item(desc_id).collections["Instances"].members
    assert item.id in {m.child_id for m in members}


def test_promotion_roundtrip_and_lineage(store, operator):
    desc_id, _ = register_description(store, "PanelType",
                                      simple_defs("Deposit", "Inspect"), operator)
    template = instantiate_item(store, desc_id, ("viewpoint", "last"), "tmpl", operator)
    # identity promotion: no edits -> empty diff against the base version
    version = promote_instance_workflow(store, template.id, desc_id, operator)
    assert version == 1
    change_set = diff_description_versions(store, desc_id, 0, 1)
    assert change_set["addedNodes"] == [] and change_set["removedNodes"] == []

    patch = {"op": "insertActivity", "parentPath": "", "name": "Clean",
             "before": "Inspect", "definition": wf.node_to_doc(act())}
    store.edit_live_workflow(template.id, patch, operator)
    version = promote_instance_workflow(store, template.id, desc_id, operator)
    assert version == 2
    promoted = describe(store, desc_id, 2).workflow_doc
    assert promoted == wf.graph_to_doc(store.item(template.id).workflow.graph)
    # the new version's lineage names the source item
    child = instantiate_item(store, desc_id, ("pinned", 2), "panel-9", operator)
    chain = store.lineage(child.id)
    assert chain[0]["promotedFrom"] == template.id
    # and the template records the promotion link
    promos = store.item(template.id).collections["Promotions"].members
    assert desc_id in {m.child_id for m in promos}


def test_promotion_strips_states_and_iterations(store, operator):
    body = wf.chain(("Work", act()))
    graph = wf.Graph(
        {"L": wf.loop(body, {"op": "==", "left": {"ref": "property", "name": "done"},
                             "right": {"lit": True}}), "End": act()},
        (("L", "End"),), "L", frozenset({"End"}),
    )
    desc_id, _ = register_description(
        store, "Loopy", DescriptionDefs(wf.graph_to_doc(graph), (Property("done", False),)),
        operator)
    item = instantiate_item(store, desc_id, ("viewpoint", "last"), "l-1", operator)
    store.apply_transition(item.id, "L[0]/Work", Transition.START, None, operator)
    store.apply_transition(item.id, "L[0]/Work", Transition.COMPLETE, None, operator)
    version = promote_instance_workflow(store, item.id, desc_id, operator)
    assert describe(store, desc_id, version).workflow_doc == wf.graph_to_doc(graph)


def test_diff_mirror_and_composition(store, operator):
    """diff(v1,v2) mirrors diff(v2,v1); added-node sets compose across a chain
    of disjoint edits."""
    rng = random.Random(3)
    desc_id, _ = register_description(store, "Widget", simple_defs("base"), operator)
    names = [[f"n{i}_{k}" for k in range(rng.randint(1, 3))] for i in range(4)]
    grown: list[str] = ["base"]
    for i, new_names in enumerate(names):
        grown = grown + new_names  # disjoint growth only
        add_description_version(store, desc_id, simple_defs(*grown), operator)
    for v1 in range(5):
        for v2 in range(5):
            d12 = diff_description_versions(store, desc_id, v1, v2)
            d21 = diff_description_versions(store, desc_id, v2, v1)
            assert d12["addedNodes"] == d21["removedNodes"]
            assert d12["removedNodes"] == d21["addedNodes"]
    # composition over the chain: added(0,k) == union of stepwise additions
    for k in range(1, 5):
        stepwise = set()
        for i in range(k):
            stepwise |= set(diff_description_versions(store, desc_id, i, i + 1)["addedNodes"])
        assert set(diff_description_versions(store, desc_id, 0, k)["addedNodes"]) == stepwise
    with pytest.raises(UnknownVersion):
        diff_description_versions(store, desc_id, 0, 99)


def test_rerun_uses_original_version_and_overrides(store, operator):
    desc_id, _ = register_description(
        store, "Analysis",
        DescriptionDefs(wf.graph_to_doc(wf.chain(("Run", act()))),
                        (Property("threshold", 5), Property("fixed", "x", mutable=False))),
        operator)
    source = instantiate_item(store, desc_id, ("viewpoint", "last"), "a-1", operator)
    store.apply_transition(source.id, "Run", Transition.START, None, operator)
    store.apply_transition(source.id, "Run", Transition.COMPLETE, None, operator)
    for _ in range(3):
        add_description_version(store, desc_id, simple_defs("Run", "Extra"), operator)

    clone = rerun_item(store, source.id, [Property("threshold", 7)], "a-1-rerun", operator)
    assert clone.origin.version == 0  # original version, not latest
    assert clone.origin.source_item_id == source.id
    assert clone.properties["threshold"].value == 7
    assert clone.outcomes == {}  # fresh execution state, no copied results
    assert clone.workflow.states == {}
    events = store.query_history(clone.id)
    assert len(events) == 1 and events[0].kind.value == "Created"
    chain = store.lineage(clone.id)
    assert chain[0]["sourceItemId"] == source.id
    with pytest.raises(ImmutableProperty):
        rerun_item(store, source.id, [Property("fixed", "y")], "nope", operator)
    # source untouched
    assert store.item(source.id).properties["threshold"].value == 5


def test_registry_mutations_are_all_events(store, operator):
    """Same-model check: every registry operation shows up as Item events."""
    counts_before = {i: store.item(i).last_event_seq for i in store.item_ids()}
    desc_id, _ = register_description(store, "Widget", simple_defs("A"), operator)
    item = instantiate_item(store, desc_id, ("viewpoint", "last"), "w", operator)
    for item_id in store.item_ids():
        seq = store.item(item_id).last_event_seq
        replayed = store.replay_item(item_id)
        assert replayed.last_event_seq == seq
        assert replayed == store.item(item_id)
    # the new description gained exactly its Created + define-iteration events
    assert store.item(desc_id).last_event_seq == 7  # Created + 6 transitions + no extras?
    events = store.query_history(desc_id)
    assert events[0].kind.value == "Created"


def test_archive_export_import_roundtrip(tmp_path, store, operator):
    register_schema(store, "R", {"v": {"type": "integer", "required": True}}, operator)
    graph = wf.chain(("A", act("op", ("R", 0))), ("B", act("qa")))
    desc_id, _ = register_description(store, "Widget",
                                      DescriptionDefs(wf.graph_to_doc(graph)), operator)
    add_description_version(store, desc_id, simple_defs("A", "B", "C"), operator)
    archive_path = tmp_path / "widget.json"
    export_description(store, desc_id, archive_path)

    other = open_store(tmp_path / "other", create=True)
    agent2 = system_agent(other)
    new_id, latest = import_description(other, archive_path, agent2)
    assert latest == 1
    for v in range(2):
        assert describe(other, new_id, v).workflow_doc == describe(store, desc_id, v).workflow_doc
    other.close()
