"""XML import/export of flat outcome documents.

The document element is named after the schema, with one child element per
field. Types are recovered on import through the schema, so the round trip
with the canonical JSON form is lossless.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

from .errors import InvalidRequest
from .model import OutcomeSchema


def outcome_to_xml(content: dict, schema_name: str) -> str:
    root = ET.Element(schema_name)
    for fname in sorted(content):
        value = content[fname]
        child = ET.SubElement(root, fname)
        if isinstance(value, bool):
            child.text = "true" if value else "false"
        else:
            child.text = str(value)
    return ET.tostring(root, encoding="unicode")


def outcome_from_xml(text: str, schema: OutcomeSchema) -> dict:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise InvalidRequest(f"unparseable outcome XML: {e}") from e
    if root.tag != schema.name:
        raise InvalidRequest(f"document element {root.tag!r} does not match schema {schema.name!r}")
    content: dict = {}
    for child in root:
        spec = schema.fields.get(child.tag)
        text_value = child.text or ""
        if spec is None:
            content[child.tag] = text_value  # validation will flag it
            continue
        if spec.type == "boolean":
            content[child.tag] = text_value == "true"
        elif spec.type == "integer":
            content[child.tag] = int(text_value)
        elif spec.type == "number":
            as_float = float(text_value)
            content[child.tag] = int(as_float) if as_float.is_integer() and "." not in text_value else as_float
        else:
            content[child.tag] = text_value
    return content
