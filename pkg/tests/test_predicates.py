"""Routing predicates against an independently written interpreter."""

import random

import pytest

from itemforge import predicates
from itemforge import workflow as wf
from itemforge.errors import RoutingError, UnresolvedReference
from itemforge.model import (
    ItemSnapshot,
    Outcome,
    Property,
    Viewpoint,
    ViewpointTarget,
)
from oracles import oracle_evaluate

PROP_POOL = ["grade", "count", "flag", "missing1"]
SCHEMA_POOL = ["Data", "Ghost"]
FIELD_POOL = ["v", "tag", "nope"]
VIEWPOINT_POOL = ["last", "pinned0", "nowhere"]


def make_item(rng: random.Random):
    """Build the same random item as an engine snapshot and an oracle doc."""
    properties = {}
    for name in PROP_POOL[:3]:
        if rng.random() < 0.8:
            value = {
                "grade": lambda: rng.choice(["A", "B"]),
                "count": lambda: rng.randint(0, 5),
                "flag": lambda: rng.random() < 0.5,
            }[name]()
            properties[name] = Property(name, value)
    outcomes = {}
    oracle_outcomes = {}
    if rng.random() < 0.8:
        versions = []
        for v in range(rng.randint(1, 3)):
            content = {"v": rng.randint(0, 9)}
            if rng.random() < 0.6:
                content["tag"] = rng.choice(["x", "y"])
            versions.append(Outcome("i", "Data", 0, v, content, v))
        outcomes["Data"] = tuple(versions)
        oracle_outcomes["Data"] = [o.content for o in versions]
    viewpoints = {}
    oracle_viewpoints = {}
    if "Data" in outcomes and rng.random() < 0.6:
        pin = rng.randrange(len(outcomes["Data"]))
        viewpoints[("Data", "pinned0")] = Viewpoint("Data", "pinned0",
                                                    ViewpointTarget("pinned", pin))
        oracle_viewpoints[("Data", "pinned0")] = pin
    graph = wf.chain(("A", wf.activity("op")))
    snapshot = ItemSnapshot(
        id="i", properties=properties, collections={}, outcomes=outcomes,
        viewpoints=viewpoints, workflow=wf.new_instance(graph), origin=None,
        last_event_seq=0, last_timestamp=0,
    )
    oracle_doc = {
        "properties": {n: p.value for n, p in properties.items()},
        "outcomes": oracle_outcomes,
        "viewpoints": oracle_viewpoints,
    }
    return snapshot, oracle_doc


def make_term(rng: random.Random):
    roll = rng.random()
    if roll < 0.4:
        return {"lit": rng.choice([True, False, 0, 3, "A", "B", 1.5])}
    if roll < 0.75:
        return {"ref": "property", "name": rng.choice(PROP_POOL)}
    return {"ref": "outcomeField", "schema": rng.choice(SCHEMA_POOL),
            "viewpoint": rng.choice(VIEWPOINT_POOL), "field": rng.choice(FIELD_POOL)}


def make_predicate(rng: random.Random, depth: int = 0) -> dict:
    roll = rng.random()
    if depth >= 3 or roll < 0.45:
        return {"op": rng.choice(predicates.COMPARISONS),
                "left": make_term(rng), "right": make_term(rng)}
    if roll < 0.6:
        return {"op": "not", "arg": make_predicate(rng, depth + 1)}
    if roll < 0.8:
        return {"op": "and", "args": [make_predicate(rng, depth + 1)
                                      for _ in range(rng.randint(2, 3))]}
    if roll < 0.92:
        return {"op": "or", "args": [make_predicate(rng, depth + 1)
                                     for _ in range(rng.randint(2, 3))]}
    return {"lit": rng.choice([True, False])}


def _item_with_grade(value="A"):
    rng = random.Random(0)
    while True:
        snapshot, _ = make_item(rng)
        if "grade" in snapshot.properties:
            break
    from dataclasses import replace

    props = dict(snapshot.properties)
    props["grade"] = Property("grade", value)
    return replace(snapshot, properties=props)


def test_literal_comparison():
    snapshot = _item_with_grade("A")
    assert predicates.evaluate(predicates.prop_equals("grade", "A"), snapshot) is True
    assert predicates.evaluate(predicates.prop_equals("grade", "B"), snapshot) is False


def test_missing_reference_raises():
    snapshot = _item_with_grade()
    with pytest.raises(UnresolvedReference):
        predicates.evaluate(predicates.prop_equals("missing1", 1), snapshot)


@pytest.mark.parametrize("seed", range(6))
def test_matches_independent_interpreter(seed):
    rng = random.Random(seed)
    agree_ok = agree_err = 0
    for _ in range(400):
        snapshot, oracle_doc = make_item(rng)
        predicate = make_predicate(rng)
        if predicates.check_predicate_doc(predicate):
            continue
        try:
            engine = ("ok", predicates.evaluate(predicate, snapshot))
        except RoutingError:
            engine = ("error",)
        oracle = oracle_evaluate(predicate, oracle_doc)
        assert engine == oracle, f"{predicate} on {oracle_doc}: {engine} != {oracle}"
        if engine == ("error",):
            agree_err += 1
        else:
            agree_ok += 1
    assert agree_ok > 50 and agree_err > 50  # both regimes well exercised
