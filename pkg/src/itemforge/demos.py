"""Built-in end-to-end scenarios. Each runs against a fresh store and asserts
its expected outcomes inline, so the demos double as acceptance checks:

    sparkplug   two product-type versions coexisting; instances of each run
                their own workflow to completion and keep full histories.
    solarpanel  a running instance is unaffected by a later type version that
                was produced by live-editing a template instance (insert a
                "Clean" step) and promoting its workflow.
"""

from __future__ import annotations

from . import workflow
from .errors import InvalidRequest
from .model import Transition
from .registry import (
    DescriptionDefs,
    create_agent,
    diff_description_versions,
    instantiate_item,
    promote_instance_workflow,
    register_description,
    register_schema,
    system_agent,
)
from .store import Store, open_store

DEMOS = ("sparkplug", "solarpanel")


class DemoAssertion(AssertionError):
    pass


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise DemoAssertion(message)


def _fresh_store(path) -> Store:
    store = open_store(path, create=True)
    if len(store.item_ids()) != 4:  # bootstrap set only
        raise InvalidRequest("demos require a fresh store")
    return store


def _run_steps(store: Store, item_id: str, steps: list[tuple[str, dict | None]], agent,
               purpose: str = "") -> None:
    for path, outcome in steps:
        store.apply_transition(item_id, path, Transition.START, None, agent, purpose)
        store.apply_transition(item_id, path, Transition.COMPLETE, outcome, agent, purpose)


def run_sparkplug(path) -> None:
    store = _fresh_store(path)
    sysagent = system_agent(store)
    planner = create_agent(store, "planner", ["modeler"], "Human", sysagent)
    operator = create_agent(store, "operator-7", ["tester", "fitter"], "Human", sysagent)

    register_schema(store, "PlugTest", {
        "resistance": {"type": "number", "required": True, "min": 0},
        "grade": {"type": "enum", "values": ["A", "B"], "required": True},
    }, planner)
    register_schema(store, "MountReport", {
        "torque": {"type": "number", "required": True},
        "engine": {"type": "string", "required": True},
    }, planner)
    register_schema(store, "GapReport", {
        "gap": {"type": "number", "required": True, "min": 0, "max": 2},
    }, planner)

    v0_graph = workflow.chain(
        ("TestPlug", workflow.activity("tester", ("PlugTest", 0))),
        ("Mount", workflow.activity("fitter", ("MountReport", 0))),
    )
    desc_id, version = register_description(
        store, "SparkPlugType", DescriptionDefs(workflow.graph_to_doc(v0_graph)),
        planner, "initial spark plug type",
    )
    _check(version == 0, "first registration must yield version 0")

    plug_123 = instantiate_item(store, desc_id, ("viewpoint", "last"), "#123",
                                operator, "production run")
    _run_steps(store, plug_123.id, [
        ("TestPlug", {"resistance": 4.5, "grade": "A"}),
        ("Mount", {"torque": 12.5, "engine": "EN-001"}),
    ], operator, "production run")

    v1_graph = workflow.chain(
        ("TestPlug", workflow.activity("tester", ("PlugTest", 0))),
        ("GapCheck", workflow.activity("tester", ("GapReport", 0))),
        ("Mount", workflow.activity("fitter", ("MountReport", 0))),
    )
    from .registry import add_description_version

    v1 = add_description_version(
        store, desc_id, DescriptionDefs(workflow.graph_to_doc(v1_graph)),
        planner, "improved spark plug type",
    )
    _check(v1 == 1, "second registration must yield version 1")

    plug_124 = instantiate_item(store, desc_id, ("viewpoint", "last"), "#124",
                                operator, "production run")
    _run_steps(store, plug_124.id, [
        ("TestPlug", {"resistance": 4.2, "grade": "A"}),
        ("GapCheck", {"gap": 0.8}),
        ("Mount", {"torque": 12.0, "engine": "EN-002"}),
    ], operator, "production run")

    # both versions coexist; each instance carries its own graph and history
    found = store.query_items([("Type", "==", "SparkPlugType")])
    _check(found == {plug_123.id, plug_124.id}, "query must find exactly #123 and #124")
    for plug, expect_gap in ((plug_123, False), (plug_124, True)):
        snapshot = store.item(plug.id)
        ev = workflow.Evaluator(snapshot.workflow)
        _check(ev.subgraph_finished(ev.top_frame()), f"{snapshot.name} must be complete")
        steps = {e.step_path for e in store.query_history(plug.id, kind="Transition")}
        _check(("GapCheck" in steps) == expect_gap,
               f"{snapshot.name} gap-check history is wrong")
        _check(store.replay_item(plug.id) == snapshot,
               f"{snapshot.name} replay must equal live state")
    _check(store.item(plug_123.id).origin.version == 0, "#123 must anchor to v0")
    _check(store.item(plug_124.id).origin.version == 1, "#124 must anchor to v1")
    from .registry import describe

    _check(describe(store, desc_id, 0).workflow_doc == workflow.graph_to_doc(v0_graph),
           "version 0 must remain bit-identical after v1 is added")
    _check(store.verify_integrity() == [], "store must verify clean")
    store.close()


def run_solarpanel(path) -> None:
    store = _fresh_store(path)
    sysagent = system_agent(store)
    paula = create_agent(store, "paula", ["modeler", "operator"], "Human", sysagent)

    register_schema(store, "DepositReport", {
        "thickness": {"type": "number", "required": True, "min": 0},
    }, paula)
    register_schema(store, "InspectReport", {
        "passed": {"type": "boolean", "required": True},
    }, paula)
    register_schema(store, "CleanReport", {
        "method": {"type": "enum", "values": ["rinse", "plasma"], "required": True},
    }, paula)

    v0_graph = workflow.chain(
        ("Deposit1", workflow.activity("operator", ("DepositReport", 0))),
        ("Deposit2", workflow.activity("operator", ("DepositReport", 0))),
        ("Inspect", workflow.activity("operator", ("InspectReport", 0))),
    )
    desc_id, _ = register_description(
        store, "PanelType", DescriptionDefs(workflow.graph_to_doc(v0_graph)),
        paula, "panel fabrication v0",
    )

    panel_a = instantiate_item(store, desc_id, ("viewpoint", "last"), "panel-A",
                               paula, "production")
    store.apply_transition(panel_a.id, "Deposit1", Transition.START, None, paula)
    store.apply_transition(panel_a.id, "Deposit1", Transition.COMPLETE,
                           {"thickness": 1.5}, paula)

    # the paper's template loop: edit one test item, promote it as the new type
    template = instantiate_item(store, desc_id, ("viewpoint", "last"), "panel-template",
                                paula, "process improvement trial")
    patch = {
        "op": "insertActivity",
        "parentPath": "",
        "name": "Clean",
        "before": "Deposit2",
        "definition": workflow.node_to_doc(
            workflow.activity("operator", ("CleanReport", 0))
        ),
    }
    store.edit_live_workflow(template.id, patch, paula, "add cleaning step")
    edits = store.query_history(template.id, kind="WorkflowEdited")
    _check(len(edits) == 1, "template history must show the live edit")
    v1 = promote_instance_workflow(store, template.id, desc_id, paula,
                                   "roll out cleaning step")
    _check(v1 == 1, "promotion must produce version 1")

    panel_b = instantiate_item(store, desc_id, ("viewpoint", "last"), "panel-B",
                               paula, "production")
    _run_steps(store, panel_a.id, [
        ("Deposit2", {"thickness": 1.4}),
        ("Inspect", {"passed": True}),
    ], paula, "production")
    _run_steps(store, panel_b.id, [
        ("Deposit1", {"thickness": 1.6}),
        ("Clean", {"method": "plasma"}),
        ("Deposit2", {"thickness": 1.5}),
        ("Inspect", {"passed": True}),
    ], paula, "production")

    for panel in (panel_a, panel_b):
        snapshot = store.item(panel.id)
        ev = workflow.Evaluator(snapshot.workflow)
        _check(ev.subgraph_finished(ev.top_frame()), f"{snapshot.name} must be complete")
        _check(store.replay_item(panel.id) == snapshot,
               f"{snapshot.name} replay must equal live state")
    a_clean = [e for e in store.query_history(panel_a.id) if "Clean" in (e.step_path or "")]
    _check(a_clean == [], "panel-A must have zero Clean events")
    b_clean = [
        e for e in store.query_history(panel_b.id, kind="Transition")
        if e.step_path == "Clean" and e.transition == Transition.COMPLETE
    ]
    _check(len(b_clean) == 1, "panel-B must have exactly one Clean completion")

    change_set = diff_description_versions(store, desc_id, 0, 1)
    _check(change_set["addedNodes"] == ["Clean"], "diff must report exactly the added Clean")
    _check(change_set["removedNodes"] == [], "diff must report no removals")
    _check(change_set["changedParams"] == [], "diff must report no param changes")
    _check(change_set["propertyDefChanges"] == {"added": [], "removed": [], "changed": []},
           "diff must report no property template changes")
    _check(change_set["collectionDefChanges"] == {"added": [], "removed": [], "changed": []},
           "diff must report no collection template changes")
    _check(change_set["changedEdges"] == {
        "added": [["", "Clean", "Deposit2"], ["", "Deposit1", "Clean"]],
        "removed": [["", "Deposit1", "Deposit2"]],
    }, "diff must report exactly the Clean rewiring")
    _check(store.verify_integrity() == [], "store must verify clean")
    store.close()


def run_demo(name: str, path) -> None:
    if name == "sparkplug":
        run_sparkplug(path)
    elif name == "solarpanel":
        run_solarpanel(path)
    else:
        raise KeyError(name)
