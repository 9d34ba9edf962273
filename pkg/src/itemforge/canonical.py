"""Canonical JSON form shared by events, outcomes, schemas and documents.

The canonical form is UTF-8 JSON with lexicographically sorted keys and no
insignificant whitespace. Floats serialize with Python's shortest
round-trip repr, so identical values always produce identical bytes; this is
what makes event lines hashable/CRC-able across platforms.
"""

from __future__ import annotations

import json
import zlib


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(doc) -> bytes:
    return canonical_json(doc).encode("utf-8")


def crc32_hex(data: bytes) -> str:
    return format(zlib.crc32(data) & 0xFFFFFFFF, "08x")


def event_line(doc) -> bytes:
    """One NDJSON log line: canonical JSON, a tab, the CRC32 of those bytes."""
    body = canonical_bytes(doc)
    return body + b"\t" + crc32_hex(body).encode("ascii") + b"\n"


def parse_event_line(line: bytes):
    """Return the decoded doc, or None if the line is torn or corrupt."""
    if not line.endswith(b"\n"):
        return None
    tab = line.rfind(b"\t")
    if tab < 0:
        return None
    body, crc = line[:tab], line[tab + 1 : -1]
    if crc != crc32_hex(body).encode("ascii"):
        return None
    try:
        return json.loads(body.decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        return None
