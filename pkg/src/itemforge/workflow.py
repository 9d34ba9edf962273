"""Workflow graphs and their execution semantics.

A graph is a directed arrangement of nodes:

    activity   one executable step (role-constrained, optional outcome schema)
    composite  a named subgraph
    loop       a named body subgraph re-run until its exit predicate holds
    andSplit / andJoin    parallel fork/join
    xorSplit / xorJoin    exclusive choice (predicate per branch) and merge

Graph validity rules (checked by validate_graph, mirrored verbatim by the
brute-force oracle in the test suite):

    R1 shape        start/ends/edges reference known nodes; ends non-empty,
                    every end is a sink; no duplicate or self edges; xorSplit
                    branches correspond one-to-one with its outgoing edges;
                    node names contain no '/', '[' or ']'.
    R2 start        the start node has no incoming edges.
    R3 reachability every node is reachable from start, and from every node
                    at least one end is reachable.
    R4 acyclic      the graph contains no directed cycle (loop bodies are
                    nested subgraphs, so there are no back-edges to ignore).
    R5 degrees      activity/composite/loop: in<=1 and out<=1; splits:
                    in<=1 and out>=2; joins: in>=2 and out<=1.
    R6 nesting      every split has exactly one matching join of the same
                    family forming a single-entry/single-exit region: branch
                    regions are disjoint, entered only from the split and
                    left only toward the join, with one join edge per branch;
                    every join is the match of exactly one split; every
                    xorSplit branch region holds at least one stateful node
                    (otherwise the recorded choice could not be reconstructed
                    from events).
    R7 recursion    composite subgraphs and loop bodies validate recursively;
                    loop exit predicates and xor branch predicates are
                    well-formed.

Activity state machine: WAITING -Start-> STARTED -Complete-> COMPLETED,
STARTED -Suspend-> SUSPENDED -Resume-> STARTED, and the engine-internal
WAITING -Skip-> SKIPPED on unchosen XOR branches.

Step paths are '/'-joined container names plus the node name, with an "[i]"
iteration suffix on loop segments, e.g. "Assemble/Deposit[2]/Clean".
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum

from . import predicates
from .errors import InvalidRequest, JobNotEnabled
from .model import Property, Transition

# ---------------------------------------------------------------------------
# Node and graph types
# ---------------------------------------------------------------------------

ACTIVITY = "activity"
COMPOSITE = "composite"
LOOP = "loop"
AND_SPLIT = "andSplit"
AND_JOIN = "andJoin"
XOR_SPLIT = "xorSplit"
XOR_JOIN = "xorJoin"

STATEFUL_KINDS = (ACTIVITY, COMPOSITE, LOOP)
SPLIT_KINDS = (AND_SPLIT, XOR_SPLIT)
JOIN_KINDS = (AND_JOIN, XOR_JOIN)

_NAME_BAD = re.compile(r"[/\[\]]")
_ITER_SUFFIX = re.compile(r"\[\d+\]")


class ActivityState(str, Enum):
    WAITING = "WAITING"
    STARTED = "STARTED"
    COMPLETED = "COMPLETED"
    SUSPENDED = "SUSPENDED"
    SKIPPED = "SKIPPED"


LEGAL_TRANSITIONS: dict[tuple[ActivityState, Transition], ActivityState] = {
    (ActivityState.WAITING, Transition.START): ActivityState.STARTED,
    (ActivityState.STARTED, Transition.COMPLETE): ActivityState.COMPLETED,
    (ActivityState.STARTED, Transition.SUSPEND): ActivityState.SUSPENDED,
    (ActivityState.SUSPENDED, Transition.RESUME): ActivityState.STARTED,
    (ActivityState.WAITING, Transition.SKIP): ActivityState.SKIPPED,
}


@dataclass(frozen=True)
class ActivityDef:
    role: str
    schema_ref: tuple[str, int] | None = None
    mode: str = "manual"  # "manual" | "mechanical"
    params: tuple[Property, ...] = ()


@dataclass(frozen=True)
class XorBranch:
    predicate: dict
    to: str


@dataclass(frozen=True)
class Node:
    kind: str
    activity: ActivityDef | None = None
    subgraph: "Graph | None" = None
    branches: tuple[XorBranch, ...] = ()  # xorSplit only
    exit_predicate: dict | None = None  # loop only


@dataclass(frozen=True)
class Graph:
    nodes: dict[str, Node]
    edges: tuple[tuple[str, str], ...]
    start: str
    ends: frozenset[str]

    def __post_init__(self):
        # canonical edge order: every construction path yields equal graphs
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        if not isinstance(self.ends, frozenset):
            object.__setattr__(self, "ends", frozenset(self.ends))

    def successors(self, name: str) -> list[str]:
        return [v for u, v in self.edges if u == name]

    def predecessors(self, name: str) -> list[str]:
        return [u for u, v in self.edges if v == name]


def activity(role: str, schema: tuple[str, int] | None = None, mode: str = "manual",
             params: tuple[Property, ...] = ()) -> Node:
    return Node(ACTIVITY, activity=ActivityDef(role, schema, mode, params))


def composite(subgraph: Graph) -> Node:
    return Node(COMPOSITE, subgraph=subgraph)


def loop(body: Graph, exit_predicate: dict) -> Node:
    return Node(LOOP, subgraph=body, exit_predicate=exit_predicate)


def chain(*named: tuple[str, Node]) -> Graph:
    """Convenience: a straight-line graph from an ordered list of nodes."""
    nodes = dict(named)
    names = [n for n, _ in named]
    edges = tuple((names[i], names[i + 1]) for i in range(len(names) - 1))
    return Graph(nodes, edges, names[0], frozenset({names[-1]}))


# ---------------------------------------------------------------------------
# Document round-trip
# ---------------------------------------------------------------------------

def node_to_doc(node: Node) -> dict:
    if node.kind == ACTIVITY:
        a = node.activity
        doc: dict = {"kind": ACTIVITY, "role": a.role, "mode": a.mode,
                     "params": [p.to_doc() for p in a.params]}
        doc["schema"] = (
            {"name": a.schema_ref[0], "version": a.schema_ref[1]} if a.schema_ref else None
        )
        return doc
    if node.kind == COMPOSITE:
        return {"kind": COMPOSITE, "graph": graph_to_doc(node.subgraph)}
    if node.kind == LOOP:
        return {"kind": LOOP, "graph": graph_to_doc(node.subgraph), "exit": node.exit_predicate}
    if node.kind == XOR_SPLIT:
        return {"kind": XOR_SPLIT,
                "branches": [{"predicate": b.predicate, "to": b.to} for b in node.branches]}
    return {"kind": node.kind}


def node_from_doc(doc: dict) -> Node:
    kind = doc.get("kind")
    if kind == ACTIVITY:
        schema = doc.get("schema")
        return Node(ACTIVITY, activity=ActivityDef(
            role=doc["role"],
            schema_ref=(schema["name"], int(schema["version"])) if schema else None,
            mode=doc.get("mode", "manual"),
            params=tuple(Property.from_doc(p) for p in doc.get("params", [])),
        ))
    if kind == COMPOSITE:
        return Node(COMPOSITE, subgraph=graph_from_doc(doc["graph"]))
    if kind == LOOP:
        return Node(LOOP, subgraph=graph_from_doc(doc["graph"]), exit_predicate=doc["exit"])
    if kind == XOR_SPLIT:
        return Node(XOR_SPLIT, branches=tuple(
            XorBranch(b["predicate"], b["to"]) for b in doc.get("branches", [])
        ))
    if kind in (AND_SPLIT, AND_JOIN, XOR_JOIN):
        return Node(kind)
    raise InvalidRequest(f"unknown node kind {kind!r}")


def graph_to_doc(graph: Graph) -> dict:
    return {
        "nodes": {name: node_to_doc(n) for name, n in sorted(graph.nodes.items())},
        "edges": sorted([list(e) for e in graph.edges]),
        "start": graph.start,
        "ends": sorted(graph.ends),
    }


def graph_from_doc(doc: dict) -> Graph:
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise InvalidRequest("workflow document must declare nodes")
    return Graph(
        nodes={name: node_from_doc(nd) for name, nd in doc["nodes"].items()},
        edges=tuple((e[0], e[1]) for e in doc.get("edges", [])),
        start=doc.get("start", ""),
        ends=frozenset(doc.get("ends", [])),
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphViolation:
    node: str
    code: str
    message: str

    def to_doc(self) -> dict:
        return {"node": self.node, "code": self.code, "message": self.message}


def validate_graph(graph: Graph) -> list[GraphViolation]:
    """Check every graph rule, recursively; empty result means valid."""
    return _validate(graph, "")


def _validate(graph: Graph, prefix: str) -> list[GraphViolation]:
    out: list[GraphViolation] = []

    def bad(node: str, code: str, message: str) -> None:
        out.append(GraphViolation(prefix + node, code, message))

    names = set(graph.nodes)
    if not names:
        return [GraphViolation(prefix or "/", "empty", "graph has no nodes")]
    for name in names:
        if not name or _NAME_BAD.search(name):
            bad(name, "bad_name", f"illegal node name {name!r}")
    if graph.start not in names:
        bad(graph.start, "bad_start", "start node is not in the graph")
        return out
    if not graph.ends:
        bad("", "no_ends", "graph declares no end nodes")
    for e in graph.ends:
        if e not in names:
            bad(e, "bad_end", "end node is not in the graph")
            return out
    seen_edges = set()
    for u, v in graph.edges:
        if u not in names or v not in names:
            bad(u if u not in names else v, "bad_edge", f"edge ({u},{v}) references unknown node")
            return out
        if u == v:
            bad(u, "self_edge", "self edge")
        if (u, v) in seen_edges:
            bad(u, "duplicate_edge", f"duplicate edge ({u},{v})")
        seen_edges.add((u, v))

    outgoing: dict[str, list[str]] = {n: [] for n in names}
    incoming: dict[str, list[str]] = {n: [] for n in names}
    for u, v in graph.edges:
        outgoing[u].append(v)
        incoming[v].append(u)

    # R1: ends are sinks
    for e in graph.ends:
        if outgoing[e]:
            bad(e, "end_not_sink", "end node has outgoing edges")
    # R2
    if incoming[graph.start]:
        bad(graph.start, "start_has_incoming", "start node has incoming edges")

    # R5 degrees
    for name, node in graph.nodes.items():
        ind, outd = len(incoming[name]), len(outgoing[name])
        if node.kind in STATEFUL_KINDS:
            if ind > 1:
                bad(name, "degree", "stateful node with more than one incoming edge")
            if outd > 1:
                bad(name, "degree", "stateful node with more than one outgoing edge")
        elif node.kind in SPLIT_KINDS:
            if ind > 1:
                bad(name, "degree", "split with more than one incoming edge")
            if outd < 2:
                bad(name, "degree", "split with fewer than two outgoing edges")
        elif node.kind in JOIN_KINDS:
            if ind < 2:
                bad(name, "degree", "join with fewer than two incoming edges")
            if outd > 1:
                bad(name, "degree", "join with more than one outgoing edge")
        if node.kind == XOR_SPLIT:
            targets = [b.to for b in node.branches]
            if sorted(targets) != sorted(outgoing[name]):
                bad(name, "branch_mismatch", "xorSplit branches do not match outgoing edges")

    # R4 acyclicity (DFS coloring)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in names}
    acyclic = True

    def visit(n: str) -> bool:
        color[n] = GRAY
        for m in outgoing[n]:
            if color[m] == GRAY:
                return False
            if color[m] == WHITE and not visit(m):
                return False
        color[n] = BLACK
        return True

    for n in sorted(names):
        if color[n] == WHITE and not visit(n):
            acyclic = False
            break
    if not acyclic:
        bad("", "cycle", "graph contains a directed cycle")
        return out  # reachability/nesting analysis assumes a DAG

    # R3 reachability
    reached = set()
    stack = [graph.start]
    while stack:
        n = stack.pop()
        if n in reached:
            continue
        reached.add(n)
        stack.extend(outgoing[n])
    for n in sorted(names - reached):
        bad(n, "unreachable", f"node {n} is not reachable from start")
    # co-reachability: some end reachable from every node
    co = set(graph.ends)
    changed = True
    while changed:
        changed = False
        for u, v in graph.edges:
            if v in co and u not in co:
                co.add(u)
                changed = True
    for n in sorted(names - co):
        bad(n, "no_completion_path", f"no completion path from {n}")

    if out:
        return out  # nesting analysis is meaningless on malformed graphs

    # R6 well-nesting
    sinks = {n for n in names if not outgoing[n]}
    matched_joins: dict[str, str] = {}
    for name in sorted(names):
        node = graph.nodes[name]
        if node.kind not in SPLIT_KINDS:
            continue
        join_kind = AND_JOIN if node.kind == AND_SPLIT else XOR_JOIN
        join = _matching_join(name, join_kind, graph, outgoing, sinks)
        if join is None:
            bad(name, "unmatched_split", f"no matching {join_kind} for split {name}")
            continue
        problems = _check_region(name, join, graph, outgoing, incoming)
        for p in problems:
            bad(name, "region", p)
        if not problems:
            if join in matched_joins:
                bad(join, "join_shared", f"join {join} matches both {matched_joins[join]} and {name}")
            matched_joins[join] = name
            if node.kind == XOR_SPLIT:
                for b in outgoing[name]:
                    region = _branch_region(b, join, outgoing)
                    if not any(graph.nodes[r].kind in STATEFUL_KINDS for r in region):
                        bad(name, "empty_xor_branch",
                            f"xor branch via {b} holds no stateful node")
    for name in sorted(names):
        if graph.nodes[name].kind in JOIN_KINDS and name not in matched_joins:
            bad(name, "unmatched_join", f"join {name} is not matched by any split")

    if out:
        return out

    # R7 recursion and predicate well-formedness
    for name in sorted(names):
        node = graph.nodes[name]
        if node.kind in (COMPOSITE, LOOP):
            out.extend(_validate(node.subgraph, prefix + name + "/"))
        if node.kind == LOOP:
            for p in predicates.check_predicate_doc(node.exit_predicate):
                bad(name, "bad_predicate", f"exit predicate: {p}")
        if node.kind == XOR_SPLIT:
            for b in node.branches:
                for p in predicates.check_predicate_doc(b.predicate):
                    bad(name, "bad_predicate", f"branch to {b.to}: {p}")
    return out


def _reach_avoiding(sources: list[str], avoid: str | None, outgoing: dict[str, list[str]]) -> set:
    seen: set[str] = set()
    stack = [s for s in sources if s != avoid]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(m for m in outgoing[n] if m != avoid)
    return seen


def _matching_join(split: str, join_kind: str, graph: Graph,
                   outgoing: dict[str, list[str]], sinks: set) -> str | None:
    """The nearest node of join_kind through which every path from the split passes."""
    reach = _reach_avoiding(outgoing[split], None, outgoing)
    candidates = []
    for j in sorted(reach):
        if graph.nodes[j].kind != join_kind:
            continue
        # unavoidable: avoiding j, no sink is reachable from the split
        if not (_reach_avoiding(outgoing[split], j, outgoing) & sinks):
            candidates.append(j)
    if not candidates:
        return None
    # unavoidable nodes form a chain; the match is the one that reaches all others
    for j in candidates:
        rest = _reach_avoiding(outgoing[j], None, outgoing) | {j}
        if all(c in rest for c in candidates):
            return j
    return None


def _branch_region(head: str, join: str, outgoing: dict[str, list[str]]) -> set:
    if head == join:
        return set()
    return _reach_avoiding([head], join, outgoing)


def _check_region(split: str, join: str, graph: Graph,
                  outgoing: dict[str, list[str]], incoming: dict[str, list[str]]) -> list[str]:
    problems: list[str] = []
    heads = outgoing[split]
    regions = {b: _branch_region(b, join, outgoing) for b in heads}
    all_region: dict[str, str] = {}
    for b, region in regions.items():
        for n in region:
            if n in all_region and all_region[n] != b:
                problems.append(f"branches share node {n}")
            all_region[n] = b
    region_nodes = set(all_region)
    if split in region_nodes or join in region_nodes:
        problems.append("split or join inside its own region")
    for u, v in graph.edges:
        if v in region_nodes and u not in region_nodes and u != split:
            problems.append(f"edge ({u},{v}) enters a branch region from outside")
        if u in region_nodes and v not in region_nodes and v != join:
            problems.append(f"edge ({u},{v}) leaves a branch region bypassing the join")
        if u == split and v not in region_nodes and v != join:
            problems.append(f"split edge ({u},{v}) escapes its region")
    # one join edge per branch (an empty branch contributes the split->join edge)
    if len(incoming[join]) != len(heads):
        problems.append("join arity differs from branch count")
    return problems


# ---------------------------------------------------------------------------
# Instance state
# ---------------------------------------------------------------------------

def strip_iterations(path: str) -> str:
    return _ITER_SUFFIX.sub("", path)


@dataclass(frozen=True)
class WorkflowInstance:
    """A graph plus per-step states and loop iteration counters."""

    graph: Graph
    states: dict[str, ActivityState] = field(default_factory=dict)
    iterations: dict[str, int] = field(default_factory=dict)

    def state(self, path: str) -> ActivityState:
        return self.states.get(path, ActivityState.WAITING)

    def to_doc(self) -> dict:
        return {
            "graph": graph_to_doc(self.graph),
            "states": {p: s.value for p, s in sorted(self.states.items())},
            "iterations": dict(sorted(self.iterations.items())),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "WorkflowInstance":
        return cls(
            graph=graph_from_doc(doc["graph"]),
            states={p: ActivityState(s) for p, s in doc.get("states", {}).items()},
            iterations={p: int(i) for p, i in doc.get("iterations", {}).items()},
        )


def new_instance(graph: Graph) -> WorkflowInstance:
    return WorkflowInstance(graph=graph)


@dataclass(frozen=True)
class Job:
    item_id: str
    step_path: str
    transition: Transition
    required_role: str
    schema_ref: tuple[str, int] | None = None
    mode: str = "manual"

    def to_doc(self) -> dict:
        return {
            "itemId": self.item_id,
            "stepPath": self.step_path,
            "transition": self.transition.value,
            "requiredRole": self.required_role,
            "schema": (
                {"name": self.schema_ref[0], "version": self.schema_ref[1]}
                if self.schema_ref
                else None
            ),
            "mode": self.mode,
        }


# resolution values for nodes/edges while evaluating enabling conditions
_C = "C"  # completed / fired
_S = "S"  # skipped
_P = "P"  # pending


@dataclass(frozen=True)
class _Frame:
    prefix: str  # runtime path prefix, "" at top level ("A/" inside composite A)
    graph: Graph
    entry: str  # resolution the start node sees


class Evaluator:
    """Pure derivation of enabling/completion facts from an instance."""

    def __init__(self, instance: WorkflowInstance):
        self.inst = instance
        self._edge_memo: dict[tuple[str, str, str], str] = {}

    # -- frames ------------------------------------------------------------

    def top_frame(self) -> _Frame:
        return _Frame("", self.inst.graph, _C)

    def child_frame(self, frame: _Frame, name: str) -> _Frame:
        """Frame of a composite's subgraph or a loop's current-iteration body."""
        node = frame.graph.nodes[name]
        path = frame.prefix + name
        if node.kind == COMPOSITE:
            mark = self.inst.states.get(path)
            entry = _S if mark == ActivityState.SKIPPED else self.incoming(frame, name)
            return _Frame(path + "/", node.subgraph, entry)
        if node.kind == LOOP:
            mark = self.inst.states.get(path)
            it = self.inst.iterations.get(path, 0)
            entry = _S if mark == ActivityState.SKIPPED else self.incoming(frame, name)
            return _Frame(f"{path}[{it}]/", node.subgraph, entry)
        raise ValueError(f"{name} has no subframe")

    def iter_frames(self, frame: _Frame | None = None):
        frame = frame or self.top_frame()
        yield frame
        for name in sorted(frame.graph.nodes):
            if frame.graph.nodes[name].kind in (COMPOSITE, LOOP):
                yield from self.iter_frames(self.child_frame(frame, name))

    # -- resolution --------------------------------------------------------

    def node_res(self, frame: _Frame, name: str) -> str:
        node = frame.graph.nodes[name]
        path = frame.prefix + name
        if node.kind in STATEFUL_KINDS:
            state = self.inst.states.get(path, ActivityState.WAITING)
            if state == ActivityState.COMPLETED:
                return _C
            if state == ActivityState.SKIPPED:
                return _S
            return _P
        if node.kind in (AND_SPLIT, XOR_SPLIT):
            return self.incoming(frame, name)
        preds = frame.graph.predecessors(name)
        results = [self.edge_res(frame, u, name) for u in preds]
        if node.kind == AND_JOIN:
            if all(r == _C for r in results):
                return _C
            if all(r == _S for r in results):
                return _S
            return _P
        # XOR_JOIN
        if any(r == _C for r in results):
            return _C
        if results and all(r == _S for r in results):
            return _S
        return _P

    def incoming(self, frame: _Frame, name: str) -> str:
        if name == frame.graph.start:
            return frame.entry
        preds = frame.graph.predecessors(name)
        if not preds:
            return _P
        return self.edge_res(frame, preds[0], name)

    def edge_res(self, frame: _Frame, u: str, v: str) -> str:
        key = (frame.prefix, u, v)
        if key in self._edge_memo:
            return self._edge_memo[key]
        node = frame.graph.nodes[u]
        if node.kind == XOR_SPLIT:
            inc = self.incoming(frame, u)
            if inc != _C:
                result = inc if inc == _S else _P
            else:
                chosen = self.chosen_branch(frame, u)
                if chosen is None:
                    result = _P
                else:
                    result = _C if v == chosen else _S
        elif node.kind == AND_SPLIT:
            result = self.incoming(frame, u)
        else:
            result = self.node_res(frame, u)
        self._edge_memo[key] = result
        return result

    def chosen_branch(self, frame: _Frame, split: str) -> str | None:
        """The decided target of a fired xorSplit, or None while undecided."""
        graph = frame.graph
        outgoing = {n: graph.successors(n) for n in graph.nodes}
        join = _matching_join(split, XOR_JOIN, graph, outgoing,
                              {n for n in graph.nodes if not outgoing[n]})
        live = []
        decided = False
        for head in graph.nodes[split].branches:
            region = _branch_region(head.to, join, outgoing) if join else {head.to}
            stateful = [n for n in region if graph.nodes[n].kind in STATEFUL_KINDS]
            skipped = stateful and all(
                self.inst.states.get(frame.prefix + n) == ActivityState.SKIPPED
                for n in stateful
            )
            if skipped:
                decided = True
            else:
                live.append(head.to)
        if decided and len(live) == 1:
            return live[0]
        return None

    # -- derived questions ---------------------------------------------------

    def subgraph_finished(self, frame: _Frame) -> bool:
        results = [self.node_res(frame, e) for e in sorted(frame.graph.ends)]
        return bool(results) and all(r in (_C, _S) for r in results) and _C in results

    def ready_to_start(self, frame: _Frame, name: str) -> bool:
        return self.incoming(frame, name) == _C

    def enabled_jobs(self, item_id: str) -> list[Job]:
        jobs: list[Job] = []
        for frame in self.iter_frames():
            for name in sorted(frame.graph.nodes):
                node = frame.graph.nodes[name]
                if node.kind != ACTIVITY:
                    continue
                path = frame.prefix + name
                state = self.inst.states.get(path, ActivityState.WAITING)
                a = node.activity
                if state == ActivityState.WAITING and self.ready_to_start(frame, name):
                    jobs.append(Job(item_id, path, Transition.START, a.role, a.schema_ref, a.mode))
                elif state == ActivityState.STARTED:
                    jobs.append(Job(item_id, path, Transition.COMPLETE, a.role, a.schema_ref, a.mode))
                    jobs.append(Job(item_id, path, Transition.SUSPEND, a.role, a.schema_ref, a.mode))
                elif state == ActivityState.SUSPENDED:
                    jobs.append(Job(item_id, path, Transition.RESUME, a.role, a.schema_ref, a.mode))
        jobs.sort(key=lambda j: (j.step_path, j.transition.value))
        return jobs

    def find_activity(self, step_path: str):
        """Locate (frame, name, node) for a runtime activity path, or None."""
        for frame in self.iter_frames():
            for name, node in frame.graph.nodes.items():
                if node.kind == ACTIVITY and frame.prefix + name == step_path:
                    return frame, name, node
        return None

    # -- xor decisions -------------------------------------------------------

    def pending_decisions(self) -> list[tuple[_Frame, str]]:
        """Fired xorSplits whose branch choice is not yet recorded."""
        found: list[tuple[_Frame, str]] = []
        for frame in self.iter_frames():
            for name in sorted(frame.graph.nodes):
                if frame.graph.nodes[name].kind != XOR_SPLIT:
                    continue
                if self.incoming(frame, name) == _C and self.chosen_branch(frame, name) is None:
                    found.append((frame, name))
        return found

    def skip_paths(self, frame: _Frame, split: str, chosen: str) -> list[str]:
        """Runtime paths of every stateful node on unchosen branches, recursive."""
        graph = frame.graph
        outgoing = {n: graph.successors(n) for n in graph.nodes}
        join = _matching_join(split, XOR_JOIN, graph, outgoing,
                              {n for n in graph.nodes if not outgoing[n]})
        paths: list[str] = []
        for branch in graph.nodes[split].branches:
            if branch.to == chosen:
                continue
            region = _branch_region(branch.to, join, outgoing) if join else {branch.to}
            for n in sorted(region):
                node = graph.nodes[n]
                if node.kind in STATEFUL_KINDS:
                    paths.extend(self._skip_paths_under(frame.prefix + n, node))
        return sorted(paths)

    def _skip_paths_under(self, path: str, node: Node) -> list[str]:
        paths = [path]
        if node.kind == COMPOSITE:
            prefix = path + "/"
        elif node.kind == LOOP:
            prefix = f"{path}[{self.inst.iterations.get(path, 0)}]/"
        else:
            return paths
        for n in sorted(node.subgraph.nodes):
            child = node.subgraph.nodes[n]
            if child.kind in STATEFUL_KINDS:
                paths.extend(self._skip_paths_under(prefix + n, child))
        return paths


# ---------------------------------------------------------------------------
# Instance mutation primitives (used by the event fold)
# ---------------------------------------------------------------------------

def with_state(instance: WorkflowInstance, path: str, state: ActivityState) -> WorkflowInstance:
    states = dict(instance.states)
    states[path] = state
    return replace(instance, states=states)


def mark_transition(instance: WorkflowInstance, path: str, transition: Transition) -> WorkflowInstance:
    current = instance.state(path)
    target = LEGAL_TRANSITIONS.get((current, transition))
    if target is None:
        raise JobNotEnabled(f"{transition.value} is not legal from {current.value} at {path}")
    return with_state(instance, path, target)


def settle(instance: WorkflowInstance, item) -> WorkflowInstance:
    """Deterministic cascade after each event fold: materialize composite
    completion marks, evaluate loop exits, bump iterations.

    ``item`` is the item snapshot predicates evaluate against; identical at
    fold time and replay time, which is what makes loop decisions replayable.
    """
    while True:
        ev = Evaluator(instance)
        change: tuple | None = None
        for frame in ev.iter_frames():
            for name in sorted(frame.graph.nodes):
                node = frame.graph.nodes[name]
                path = frame.prefix + name
                if node.kind == COMPOSITE:
                    if instance.states.get(path) is None and ev.subgraph_finished(
                        ev.child_frame(frame, name)
                    ):
                        change = ("complete", path)
                        break
                elif node.kind == LOOP:
                    mark = instance.states.get(path)
                    if mark in (ActivityState.COMPLETED, ActivityState.SKIPPED):
                        continue
                    if ev.subgraph_finished(ev.child_frame(frame, name)):
                        if predicates.evaluate(node.exit_predicate, item):
                            change = ("complete", path)
                        else:
                            change = ("iterate", path)
                        break
            if change:
                break
        if not change:
            return instance
        op, path = change
        if op == "complete":
            instance = with_state(instance, path, ActivityState.COMPLETED)
        else:
            iterations = dict(instance.iterations)
            iterations[path] = iterations.get(path, 0) + 1
            instance = replace(instance, iterations=iterations)


# ---------------------------------------------------------------------------
# Live-edit patches
# ---------------------------------------------------------------------------

PATCH_OPS = ("insertActivity", "removeActivity", "replaceSubgraph", "setActivityParams")


def _split_path(path: str) -> list[str]:
    return [seg for seg in path.split("/") if seg] if path else []


def _container_at(graph: Graph, segments: list[str]) -> Graph:
    g = graph
    for seg in segments:
        node = g.nodes.get(seg)
        if node is None or node.kind not in (COMPOSITE, LOOP):
            raise InvalidRequest(f"no container at {'/'.join(segments)}")
        g = node.subgraph
    return g


def _rebuild(graph: Graph, segments: list[str], new_sub: Graph) -> Graph:
    if not segments:
        return new_sub
    head, rest = segments[0], segments[1:]
    node = graph.nodes.get(head)
    if node is None or node.kind not in (COMPOSITE, LOOP):
        raise InvalidRequest(f"no container at {head}")
    child = _rebuild(node.subgraph, rest, new_sub)
    nodes = dict(graph.nodes)
    nodes[head] = replace(node, subgraph=child)
    return replace(graph, nodes=nodes)


def apply_patch(graph: Graph, patch: dict) -> Graph:
    """Apply a patch document to a graph; structural errors raise InvalidRequest.

    The caller revalidates the result and checks touched-node states.
    """
    op = patch.get("op")
    if op == "insertActivity":
        parent = _split_path(patch.get("parentPath", ""))
        g = _container_at(graph, parent)
        name = patch.get("name", "")
        if not name or name in g.nodes:
            raise InvalidRequest(f"cannot insert node named {name!r}")
        node = node_from_doc(patch["definition"])
        if node.kind != ACTIVITY:
            raise InvalidRequest("insertActivity requires an activity definition")
        anchor = patch.get("before") or patch.get("after")
        if anchor not in g.nodes or ("before" in patch) == ("after" in patch):
            raise InvalidRequest("insertActivity requires exactly one of before/after")
        nodes = dict(g.nodes)
        nodes[name] = node
        if "before" in patch:
            edges = tuple(
                (u, name) if v == anchor else (u, v) for u, v in g.edges
            ) + ((name, anchor),)
            start = name if g.start == anchor else g.start
            sub = Graph(nodes, edges, start, g.ends)
        else:
            edges = tuple(
                (name, v) if u == anchor else (u, v) for u, v in g.edges
            ) + ((anchor, name),)
            ends = frozenset(e for e in g.ends if e != anchor) | (
                {name} if anchor in g.ends else set()
            )
            sub = Graph(nodes, edges, g.start, ends)
        return _rebuild(graph, parent, sub)

    if op == "removeActivity":
        segments = _split_path(patch.get("path", ""))
        if not segments:
            raise InvalidRequest("removeActivity requires a node path")
        parent, name = segments[:-1], segments[-1]
        g = _container_at(graph, parent)
        node = g.nodes.get(name)
        if node is None:
            raise InvalidRequest(f"no node at {patch['path']}")
        if node.kind != ACTIVITY:
            raise InvalidRequest("removeActivity only removes activities")
        preds = g.predecessors(name)
        succs = g.successors(name)
        nodes = {n: nd for n, nd in g.nodes.items() if n != name}
        if not nodes:
            raise InvalidRequest("cannot remove the last node")
        edges = tuple((u, v) for u, v in g.edges if u != name and v != name)
        edges += tuple((u, v) for u in preds for v in succs if (u, v) not in edges)
        start = succs[0] if g.start == name and succs else (g.start if g.start != name else "")
        ends = frozenset(e for e in g.ends if e != name) | (
            set(preds) if name in g.ends else set()
        )
        return _rebuild(graph, parent, Graph(nodes, edges, start, ends))

    if op == "setActivityParams":
        segments = _split_path(patch.get("path", ""))
        if not segments:
            raise InvalidRequest("setActivityParams requires a node path")
        parent, name = segments[:-1], segments[-1]
        g = _container_at(graph, parent)
        node = g.nodes.get(name)
        if node is None or node.kind != ACTIVITY:
            raise InvalidRequest(f"no activity at {patch['path']}")
        params = tuple(Property.from_doc(p) for p in patch.get("params", []))
        nodes = dict(g.nodes)
        nodes[name] = replace(node, activity=replace(node.activity, params=params))
        return _rebuild(graph, parent, replace(g, nodes=nodes))

    if op == "replaceSubgraph":
        segments = _split_path(patch.get("path", ""))
        new_sub = graph_from_doc(patch["graph"])
        if not segments:
            return new_sub
        parent, name = segments[:-1], segments[-1]
        g = _container_at(graph, parent)
        node = g.nodes.get(name)
        if node is None or node.kind not in (COMPOSITE, LOOP):
            raise InvalidRequest(f"no composite or loop at {patch['path']}")
        nodes = dict(g.nodes)
        nodes[name] = replace(node, subgraph=new_sub)
        return _rebuild(graph, parent, replace(g, nodes=nodes))

    raise InvalidRequest(f"unknown patch op {patch.get('op')!r}")


def touched_graph_paths(graph: Graph, patch: dict) -> list[str]:
    """Graph paths (no iteration suffixes) whose runtime state must be WAITING."""
    op = patch.get("op")
    if op == "insertActivity":
        parent = patch.get("parentPath", "")
        prefix = parent + "/" if parent else ""
        anchor = patch.get("before")
        if anchor is not None:
            return [prefix + anchor]
        # inserting after: the anchor's former successors see new inflow
        g = _container_at(graph, _split_path(parent))
        return [prefix + v for v in g.successors(patch["after"])]
    if op in ("removeActivity", "setActivityParams"):
        return [patch["path"]]
    if op == "replaceSubgraph":
        path = patch.get("path", "")
        if not path:
            return sorted(walk_paths(graph))
        segments = _split_path(path)
        g = _container_at(graph, segments)
        return sorted(path + "/" + p for p in walk_paths(g)) + [path]
    raise InvalidRequest(f"unknown patch op {op!r}")


def prune_states(instance: WorkflowInstance, new_graph: Graph) -> WorkflowInstance:
    """Drop default-state entries for paths gone from the edited graph.

    Executed residue (COMPLETED/SKIPPED marks from removed or replaced nodes)
    is kept: history never loses what actually happened.
    """
    valid = set(walk_paths(new_graph))
    states = {
        p: s
        for p, s in instance.states.items()
        if strip_iterations(p) in valid or s != ActivityState.WAITING
    }
    return WorkflowInstance(new_graph, states, dict(instance.iterations))


# ---------------------------------------------------------------------------
# Structural walks (diff, promotion, patch targeting)
# ---------------------------------------------------------------------------

def walk_paths(graph: Graph, prefix: str = "") -> dict[str, dict]:
    """Map of graph path -> node summary doc (subgraphs elided), recursive."""
    out: dict[str, dict] = {}
    for name in sorted(graph.nodes):
        node = graph.nodes[name]
        path = prefix + name
        doc = node_to_doc(node)
        doc.pop("graph", None)
        out[path] = doc
        if node.kind in (COMPOSITE, LOOP):
            out.update(walk_paths(node.subgraph, path + "/"))
    return out


def walk_edges(graph: Graph, prefix: str = "") -> set[tuple[str, str, str]]:
    out = {(prefix.rstrip("/"), u, v) for u, v in graph.edges}
    for name in sorted(graph.nodes):
        node = graph.nodes[name]
        if node.kind in (COMPOSITE, LOOP):
            out |= walk_edges(node.subgraph, prefix + name + "/")
    return out


def diff_graphs(old: Graph, new: Graph) -> dict:
    """Node/edge/param difference between two graphs, by graph path."""
    old_paths, new_paths = walk_paths(old), walk_paths(new)
    added = sorted(set(new_paths) - set(old_paths))
    removed = sorted(set(old_paths) - set(new_paths))
    changed = []
    for path in sorted(set(old_paths) & set(new_paths)):
        if old_paths[path] != new_paths[path]:
            fields = sorted(
                set(old_paths[path]) | set(new_paths[path]),
            )
            deltas = {
                f: [old_paths[path].get(f), new_paths[path].get(f)]
                for f in fields
                if old_paths[path].get(f) != new_paths[path].get(f)
            }
            changed.append({"path": path, "changes": deltas})
    old_edges, new_edges = walk_edges(old), walk_edges(new)
    return {
        "addedNodes": added,
        "removedNodes": removed,
        "changedParams": changed,
        "changedEdges": {
            "added": sorted(list(e) for e in new_edges - old_edges),
            "removed": sorted(list(e) for e in old_edges - new_edges),
        },
    }
