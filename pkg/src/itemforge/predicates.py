"""Routing predicates: small boolean expressions over item state.

Document form (canonical JSON):

    {"lit": true}
    {"ref": "property", "name": "grade"}
    {"ref": "outcomeField", "schema": "PlugTest", "viewpoint": "last", "field": "grade"}
    {"op": "==", "left": <term>, "right": <term>}      also != < <= > >=
    {"op": "and", "args": [<pred>, ...]}               also "or"
    {"op": "not", "arg": <pred>}

Comparisons require same-kind operands (int/float interchangeable); boolean
connectives require boolean operands. Missing properties, schemas, viewpoints
or fields raise UnresolvedReference.
"""

from __future__ import annotations

from typing import Any

from .errors import NotFound, PredicateTypeError, UnresolvedReference
from .model import ItemSnapshot, resolve_viewpoint

COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")


def check_predicate_doc(doc: Any) -> list[str]:
    """Structural well-formedness; returns problems, empty if fine."""
    problems: list[str] = []
    _check(doc, problems, boolean_context=True)
    return problems


def _check(doc: Any, problems: list[str], boolean_context: bool) -> None:
    if not isinstance(doc, dict):
        problems.append(f"predicate node must be an object, got {type(doc).__name__}")
        return
    if "lit" in doc:
        value = doc["lit"]
        if boolean_context and not isinstance(value, bool):
            problems.append("literal in boolean position must be true/false")
        elif not isinstance(value, (str, int, float, bool)):
            problems.append("literals must be scalar")
        return
    if "ref" in doc:
        if boolean_context:
            # A bare reference is allowed as a predicate only if it yields a bool
            # at evaluation time; structurally fine.
            pass
        if doc["ref"] == "property":
            if not isinstance(doc.get("name"), str) or not doc.get("name"):
                problems.append("property ref requires a name")
        elif doc["ref"] == "outcomeField":
            for key in ("schema", "viewpoint", "field"):
                if not isinstance(doc.get(key), str) or not doc.get(key):
                    problems.append(f"outcomeField ref requires {key}")
        else:
            problems.append(f"unknown ref kind {doc.get('ref')!r}")
        return
    op = doc.get("op")
    if op in COMPARISONS:
        if "left" not in doc or "right" not in doc:
            problems.append(f"{op} requires left and right")
            return
        for side in (doc["left"], doc["right"]):
            if not isinstance(side, dict) or not ("lit" in side or "ref" in side):
                problems.append(f"{op} operands must be literals or references")
            else:
                _check(side, problems, boolean_context=False)
    elif op in ("and", "or"):
        args = doc.get("args")
        if not isinstance(args, list) or len(args) < 2:
            problems.append(f"{op} requires at least two args")
            return
        for a in args:
            _check(a, problems, boolean_context=True)
    elif op == "not":
        if "arg" not in doc:
            problems.append("not requires arg")
            return
        _check(doc["arg"], problems, boolean_context=True)
    else:
        problems.append(f"unknown predicate op {op!r}")


def predicate_references(doc: Any, out: set | None = None) -> set:
    """Collect (kind, ...) reference tuples used by a predicate."""
    refs: set = out if out is not None else set()
    if not isinstance(doc, dict):
        return refs
    if doc.get("ref") == "property":
        refs.add(("property", doc.get("name")))
    elif doc.get("ref") == "outcomeField":
        refs.add(("outcomeField", doc.get("schema"), doc.get("viewpoint"), doc.get("field")))
    for key in ("left", "right", "arg"):
        if key in doc:
            predicate_references(doc[key], refs)
    for a in doc.get("args", ()):
        predicate_references(a, refs)
    return refs


def _term_value(doc: dict, item: ItemSnapshot) -> Any:
    if "lit" in doc:
        return doc["lit"]
    ref = doc.get("ref")
    if ref == "property":
        name = doc["name"]
        prop = item.properties.get(name)
        if prop is None:
            raise UnresolvedReference(f"item {item.id} has no property {name!r}")
        return prop.value
    if ref == "outcomeField":
        schema, viewpoint, fname = doc["schema"], doc["viewpoint"], doc["field"]
        try:
            version = resolve_viewpoint(item, schema, viewpoint)
            content = item.outcome(schema, version).content
        except NotFound as e:
            raise UnresolvedReference(str(e)) from e
        if fname not in content:
            raise UnresolvedReference(f"outcome {schema} v{version} has no field {fname!r}")
        return content[fname]
    raise UnresolvedReference(f"unresolvable term {doc!r}")


def _kind(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, (int, float)):
        return "number"
    if isinstance(value, str):
        return "string"
    raise PredicateTypeError(f"unsupported value {value!r}")


def evaluate(doc: dict, item: ItemSnapshot) -> bool:
    """Evaluate a predicate document against an item snapshot."""
    result = _evaluate_node(doc, item)
    if not isinstance(result, bool):
        raise PredicateTypeError("predicate did not evaluate to a boolean")
    return result


def _evaluate_node(doc: dict, item: ItemSnapshot) -> Any:
    if not isinstance(doc, dict):
        raise PredicateTypeError(f"invalid predicate node {doc!r}")
    if "lit" in doc or "ref" in doc:
        return _term_value(doc, item)
    op = doc.get("op")
    if op in COMPARISONS:
        left = _term_value(doc["left"], item)
        right = _term_value(doc["right"], item)
        lk, rk = _kind(left), _kind(right)
        if lk != rk:
            raise PredicateTypeError(f"cannot compare {lk} with {rk}")
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        if lk == "boolean":
            raise PredicateTypeError("ordered comparison on booleans")
        if op == "<":
            return left < right
        if op == "<=":
            return left <= right
        if op == ">":
            return left > right
        return left >= right
    # Connectives are strict: every operand is evaluated so reference errors
    # always surface regardless of operand order.
    if op == "and":
        values = [_require_bool(_evaluate_node(a, item)) for a in doc["args"]]
        return all(values)
    if op == "or":
        values = [_require_bool(_evaluate_node(a, item)) for a in doc["args"]]
        return any(values)
    if op == "not":
        return not _require_bool(_evaluate_node(doc["arg"], item))
    raise PredicateTypeError(f"unknown predicate op {op!r}")


def _require_bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise PredicateTypeError("boolean connective over non-boolean operand")
    return value


TRUE = {"lit": True}


def prop_equals(name: str, value) -> dict:
    return {"op": "==", "left": {"ref": "property", "name": name}, "right": {"lit": value}}


def outcome_field(schema: str, viewpoint: str, fname: str) -> dict:
    return {"ref": "outcomeField", "schema": schema, "viewpoint": viewpoint, "field": fname}
