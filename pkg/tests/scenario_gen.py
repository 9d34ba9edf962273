"""Randomized scenario machinery: valid-by-construction workflow graphs and
seeded operation streams driven against a Store.

Graphs are assembled from nested blocks (sequence / parallel / exclusive /
loop / composite) so every generated graph passes validation by construction;
operation streams pick from the currently enabled jobs plus property,
collection, viewpoint, edit, version and re-run operations.
"""

from __future__ import annotations

import random

from itemforge import DescriptionDefs, create_agent, register_schema, system_agent
from itemforge import registry, workflow
from itemforge.errors import ItemForgeError
from itemforge.model import Property, Transition
from itemforge.predicates import prop_equals
from itemforge.workflow import Graph, Node, XorBranch, activity

ROLES = ("op", "qa")

SCHEMAS = {
    "Data": {
        "v": {"type": "number", "required": True, "min": 0, "max": 100},
        "tag": {"type": "enum", "values": ["x", "y"], "required": False},
    },
    "Note": {
        "text": {"type": "string", "required": True},
    },
}

TEMPLATE_PROPS = (
    Property("flag", False),
    Property("done", False),
    Property("count", 0),
    Property("grade", "B"),
)


class _Names:
    def __init__(self):
        self.n = 0

    def next(self, prefix: str) -> str:
        self.n += 1
        return f"{prefix}{self.n}"


def _activity(rng: random.Random) -> Node:
    role = rng.choice(ROLES)
    schema = rng.choice([None, ("Data", 0), ("Note", 0)])
    return activity(role, schema)


def _block(rng: random.Random, names: _Names, depth: int):
    """Returns (nodes, edges, entry, exit) for one block."""
    weights = ["act"] * 10 + ["xor"] * 4 + ["and"] * 3
    if depth < 2:
        weights += ["loop"] * 2 + ["comp"] * 2
    kind = rng.choice(weights)
    if kind == "act":
        name = names.next("a")
        return {name: _activity(rng)}, [], name, name
    if kind == "comp":
        name = names.next("c")
        return {name: workflow.composite(_chain_graph(rng, names, depth + 1))}, [], name, name
    if kind == "loop":
        name = names.next("l")
        exit_pred = rng.choice([
            prop_equals("done", True),
            {"op": ">=", "left": {"ref": "property", "name": "count"},
             "right": {"lit": rng.randint(1, 3)}},
        ])
        return {name: workflow.loop(_chain_graph(rng, names, depth + 1), exit_pred)}, [], name, name
    if kind == "and":
        split, join = names.next("s"), names.next("j")
        nodes = {split: Node(workflow.AND_SPLIT), join: Node(workflow.AND_JOIN)}
        edges = []
        for _ in range(rng.randint(2, 3)):
            name = names.next("a")
            nodes[name] = _activity(rng)
            edges += [(split, name), (name, join)]
        return nodes, edges, split, join
    # xor: first branch guarded by a property, last branch is the default
    split, join = names.next("x"), names.next("j")
    nodes = {join: Node(workflow.XOR_JOIN)}
    edges = []
    branches = []
    n_branches = rng.randint(2, 3)
    for i in range(n_branches):
        name = names.next("a")
        nodes[name] = _activity(rng)
        edges += [(split, name), (name, join)]
        if i == n_branches - 1:
            predicate = {"lit": True}
        elif i == 0:
            predicate = prop_equals("flag", True)
        else:
            predicate = prop_equals("grade", "A")
        branches.append(XorBranch(predicate, name))
    nodes[split] = Node(workflow.XOR_SPLIT, branches=tuple(branches))
    return nodes, edges, split, join


def _chain_graph(rng: random.Random, names: _Names, depth: int) -> Graph:
    nodes: dict[str, Node] = {}
    edges: list[tuple[str, str]] = []
    entries_exits = []
    for _ in range(rng.randint(1, 3 if depth else 4)):
        b_nodes, b_edges, entry, exit_ = _block(rng, names, depth)
        nodes.update(b_nodes)
        edges.extend(b_edges)
        entries_exits.append((entry, exit_))
    for (_, prev_exit), (nxt_entry, _) in zip(entries_exits, entries_exits[1:]):
        edges.append((prev_exit, nxt_entry))
    return Graph(nodes, tuple(edges), entries_exits[0][0],
                 frozenset({entries_exits[-1][1]}))


def random_graph(rng: random.Random) -> Graph:
    graph = _chain_graph(rng, _Names(), 0)
    assert workflow.validate_graph(graph) == [], "generator must emit valid graphs"
    return graph


def make_outcome(rng: random.Random, schema_ref) -> dict | None:
    if schema_ref is None:
        return None
    name = schema_ref[0]
    if name == "Data":
        doc = {"v": rng.randint(0, 100)}
        if rng.random() < 0.5:
            doc["tag"] = rng.choice(["x", "y"])
        return doc
    if name == "Note":
        return {"text": rng.choice(["ok", "redo", "fine", "n/a"])}
    return {"completed": True}


class Scenario:
    """A seeded operation stream against one store."""

    def __init__(self, store, seed: int, agents=None):
        self.store = store
        self.rng = random.Random(seed)
        sysagent = system_agent(store)
        if agents is None:
            seed_tag = seed % 100_000
            agents = [
                create_agent(store, f"op-{seed_tag}", ["op", "modeler"], "Human", sysagent),
                create_agent(store, f"qa-{seed_tag}", ["qa", "op"], "Human", sysagent),
            ]
        self.agents = agents
        for name, definition in SCHEMAS.items():
            if not store.schema_exists(name):
                register_schema(store, name, definition, agents[0])
        defs = DescriptionDefs(
            workflow.graph_to_doc(random_graph(self.rng)),
            TEMPLATE_PROPS,
            ({"name": "Parts"},),
        )
        self.desc_id, _ = registry.register_description(
            store, f"Thing-{seed}", defs, agents[0]
        )
        self.items: list[str] = []
        for i in range(self.rng.randint(1, 3)):
            self._instantiate(f"thing-{seed}-{i}")

    def _instantiate(self, name: str) -> None:
        agent = self.rng.choice(self.agents)
        versions = registry.description_versions(self.store, self.desc_id)
        selector = ("pinned", self.rng.randrange(versions))
        snapshot = registry.instantiate_item(self.store, self.desc_id, selector,
                                             name, agent, "scenario")
        self.items.append(snapshot.id)

    def step(self) -> None:
        roll = self.rng.random()
        agent = self.rng.choice(self.agents)
        item_id = self.rng.choice(self.items)
        try:
            if roll < 0.60:
                jobs = self.store.enabled_jobs(roles=agent.roles)
                jobs = [j for j in jobs if j.item_id in self.items]
                if not jobs:
                    return
                job = self.rng.choice(jobs)
                outcome = None
                if job.transition == Transition.COMPLETE:
                    outcome = make_outcome(self.rng, job.schema_ref)
                    if job.schema_ref and self.rng.random() < 0.05:
                        outcome = {"bogus": "field"}  # must be rejected atomically
                self.store.apply_transition(job.item_id, job.step_path, job.transition,
                                            outcome, agent, "scenario step")
            elif roll < 0.75:
                name, value = self.rng.choice([
                    ("flag", self.rng.random() < 0.5),
                    ("done", self.rng.random() < 0.5),
                    ("count", self.rng.randint(0, 5)),
                    ("grade", self.rng.choice(["A", "B"])),
                    (f"p{self.rng.randint(0, 3)}", self.rng.randint(0, 9)),
                ])
                self.store.set_property(item_id, name, value, agent, "scenario")
            elif roll < 0.80:
                other = self.rng.choice(self.items)
                op = self.rng.choice(["add", "remove"])
                self.store.update_collection(item_id, "Parts", op, other,
                                             agent=agent, purpose="scenario")
            elif roll < 0.85:
                snapshot = self.store.item(item_id)
                pools = [(s, len(v)) for s, v in snapshot.outcomes.items() if v]
                if not pools:
                    return
                schema, count = self.rng.choice(pools)
                from itemforge.model import pinned

                self.store.set_viewpoint(item_id, schema,
                                         f"vp{self.rng.randint(0, 3)}",
                                         pinned(self.rng.randrange(count)),
                                         agent=agent, purpose="scenario")
            elif roll < 0.92:
                self._random_edit(item_id, agent)
            elif roll < 0.97:
                if len(self.items) < 8:
                    if self.rng.random() < 0.5:
                        self._instantiate(f"extra-{len(self.items)}")
                    else:
                        clone = registry.rerun_item(
                            self.store, item_id,
                            [Property("count", self.rng.randint(0, 5))],
                            f"clone-{len(self.items)}", agent, "re-run",
                        )
                        self.items.append(clone.id)
            else:
                defs = DescriptionDefs(
                    workflow.graph_to_doc(random_graph(self.rng)),
                    TEMPLATE_PROPS, ({"name": "Parts"},),
                )
                registry.add_description_version(self.store, self.desc_id, defs,
                                                 self.agents[0], "scenario revision")
        except ItemForgeError:
            pass  # rejected operations must leave no trace; asserted in tests

    def _random_edit(self, item_id: str, agent) -> None:
        snapshot = self.store.item(item_id)
        paths = [
            p for p, doc in workflow.walk_paths(snapshot.workflow.graph).items()
            if doc["kind"] == workflow.ACTIVITY
        ]
        if not paths:
            return
        target = self.rng.choice(paths)
        choice = self.rng.random()
        if choice < 0.5:
            segments = target.rsplit("/", 1)
            parent = segments[0] if len(segments) == 2 else ""
            patch = {
                "op": "insertActivity",
                "parentPath": parent,
                "name": f"ins{self.rng.randint(0, 999)}",
                "before": segments[-1],
                "definition": workflow.node_to_doc(_activity(self.rng)),
            }
        elif choice < 0.8:
            patch = {"op": "removeActivity", "path": target}
        else:
            patch = {
                "op": "setActivityParams",
                "path": target,
                "params": [Property("hint", self.rng.choice(["fast", "slow"])).to_doc()],
            }
        self.store.edit_live_workflow(item_id, patch, agent, "scenario edit")

    def run(self, n_ops: int) -> None:
        for _ in range(n_ops):
            self.step()
