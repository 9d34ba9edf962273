"""Durable on-disk layout: append-only event logs, outcome files, snapshots.

Layout under the store root:

    store.meta                                {"formatVersion":1,"createdAt":ms,"bootstrapped":bool}
    index/properties.json                     property index cache (rebuilt when stale)
    items/<itemId>/events.ndjson              one event per line: <canonical json>\\t<crc32 hex>\\n
    items/<itemId>/outcomes/<schema>/<v>.json outcome payloads, written before their event
    items/<itemId>/snapshot.json              optional replay cache {"upToSeq":n,"item":doc}

Commit ordering (write-ahead): outcome files are written and flushed before
the event lines that reference them; the lines of one commit are appended in
a single write whose final line carries batchEnd=true. Recovery on open
truncates a torn final line (CRC mismatch), then a trailing incomplete batch,
then deletes orphan outcome files no surviving event references.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path
from typing import Callable, Optional

from .canonical import canonical_bytes, event_line, parse_event_line
from .errors import (
    CorruptLayout,
    FormatVersionMismatch,
    IoFailure,
    StaleSnapshot,
    UnknownItem,
)
from .model import Event, ItemSnapshot
from .replay import apply_event, replay

FORMAT_VERSION = 1


class SimulatedCrash(BaseException):
    """Raised by fault-injection hooks; derives from BaseException so it
    cannot be swallowed by ordinary error handling."""


# hook(point, path, data) -> None to proceed, or a byte count to tear the write
FaultHook = Callable[[str, Optional[str], Optional[bytes]], Optional[int]]


class FileStore:
    def __init__(self, root: str | os.PathLike, create: bool = False,
                 fault_hook: FaultHook | None = None, fsync: bool = True):
        self.root = Path(root)
        self._fault = fault_hook
        self._fsync = fsync
        self.quarantined: dict[str, str] = {}
        self._tail: dict[str, tuple[int, int]] = {}  # item -> (event count, byte size)
        self._handles: dict[str, object] = {}  # append-handle cache, LRU by insertion
        self._handle_lock = threading.Lock()
        self._known_dirs: set[str] = set()
        self._events_paths: dict[str, Path] = {}
        self._outcome_dirs: dict[tuple[str, str], Path] = {}
        meta_path = self.root / "store.meta"
        if not meta_path.exists():
            if not create:
                raise CorruptLayout(f"{self.root} is not a store (no store.meta)")
            self.root.mkdir(parents=True, exist_ok=True)
            (self.root / "items").mkdir(exist_ok=True)
            (self.root / "index").mkdir(exist_ok=True)
            self.meta = {
                "formatVersion": FORMAT_VERSION,
                "createdAt": int(time.time() * 1000),
                "bootstrapped": False,
            }
            self._write_atomic(meta_path, canonical_bytes(self.meta))
        else:
            try:
                self.meta = json.loads(meta_path.read_text("utf-8"))
            except ValueError as e:
                raise CorruptLayout(f"unreadable store.meta: {e}") from e
            if self.meta.get("formatVersion") != FORMAT_VERSION:
                raise FormatVersionMismatch(
                    f"store format {self.meta.get('formatVersion')!r}, engine supports {FORMAT_VERSION}"
                )
            (self.root / "items").mkdir(exist_ok=True)
            (self.root / "index").mkdir(exist_ok=True)
        self._recover()

    # -- paths ---------------------------------------------------------------

    def item_dir(self, item_id: str) -> Path:
        return self.root / "items" / item_id

    def events_path(self, item_id: str) -> Path:
        path = self._events_paths.get(item_id)
        if path is None:
            path = self._events_paths[item_id] = self.item_dir(item_id) / "events.ndjson"
        return path

    def outcome_path(self, item_id: str, schema: str, version: int) -> Path:
        return self.item_dir(item_id) / "outcomes" / schema / f"{version}.json"

    def _outcome_dir(self, item_id: str, schema: str) -> Path:
        key = (item_id, schema)
        path = self._outcome_dirs.get(key)
        if path is None:
            path = self.item_dir(item_id) / "outcomes" / schema
            os.makedirs(path, exist_ok=True)
            self._outcome_dirs[key] = path
        return path

    def snapshot_path(self, item_id: str) -> Path:
        return self.item_dir(item_id) / "snapshot.json"

    # -- recovery --------------------------------------------------------------

    def _recover(self) -> None:
        for item_id in self.item_ids():
            self._recover_item(item_id)

    def _recover_item(self, item_id: str) -> None:
        path = self.events_path(item_id)
        if not path.exists():
            self._drop_item_dir(item_id)  # first commit never landed
            return
        raw = path.read_bytes()
        docs: list[dict] = []
        offsets: list[int] = []
        pos = 0
        torn_at: int | None = None
        corrupt_at: int | None = None
        while pos < len(raw):
            nl = raw.find(b"\n", pos)
            if nl < 0:
                torn_at = pos  # a torn append never ends with a newline
                break
            line = raw[pos : nl + 1]
            doc = parse_event_line(line)
            if doc is None:
                corrupt_at = pos  # complete line failing its checksum
                break
            docs.append(doc)
            offsets.append(pos)
            pos = nl + 1
        if corrupt_at is not None:
            self.quarantined[item_id] = f"corrupt event line at byte {corrupt_at}"
            self._tail[item_id] = (len(docs), corrupt_at)
            return
        if torn_at is not None:
            self._truncate(path, torn_at)
            raw = raw[:torn_at]
        # drop a trailing incomplete batch
        last_ok = len(docs)
        while last_ok > 0 and not docs[last_ok - 1].get("batchEnd", True):
            last_ok -= 1
        if last_ok < len(docs):
            cut = offsets[last_ok]
            self._truncate(path, cut)
            docs = docs[:last_ok]
            raw = raw[:cut]
        if not docs:
            self._drop_item_dir(item_id)  # Created never committed
            return
        # contiguity
        for i, doc in enumerate(docs):
            if doc.get("seq") != i or doc.get("itemId") != item_id:
                self.quarantined[item_id] = f"sequence discontinuity at line {i}"
                self._tail[item_id] = (len(docs), len(raw))
                return
        self._tail[item_id] = (len(docs), len(raw))
        self._gc_orphan_outcomes(item_id, docs)

    def _drop_item_dir(self, item_id: str) -> None:
        import shutil

        shutil.rmtree(self.item_dir(item_id), ignore_errors=True)
        self._tail.pop(item_id, None)

    def _gc_orphan_outcomes(self, item_id: str, docs: list[dict]) -> None:
        referenced = set()
        for doc in docs:
            ref = doc.get("outcomeRef")
            if ref:
                referenced.add((ref["schema"], int(ref["version"])))
        out_root = self.item_dir(item_id) / "outcomes"
        if not out_root.exists():
            return
        for schema_dir in out_root.iterdir():
            if not schema_dir.is_dir():
                continue
            for f in schema_dir.iterdir():
                if f.suffix != ".json":
                    continue
                try:
                    version = int(f.stem)
                except ValueError:
                    continue
                if (schema_dir.name, version) not in referenced:
                    f.unlink()

    @staticmethod
    def _truncate(path: Path, size: int) -> None:
        with open(path, "r+b") as f:
            f.truncate(size)

    # -- basic reads -----------------------------------------------------------

    def item_ids(self) -> list[str]:
        items = self.root / "items"
        return sorted(p.name for p in items.iterdir() if p.is_dir()) if items.exists() else []

    def has_item(self, item_id: str) -> bool:
        return self.events_path(item_id).exists()

    def last_seq(self, item_id: str) -> int:
        count = self._tail.get(item_id, (0, 0))[0]
        return count - 1

    def read_event_docs(self, item_id: str) -> list[dict]:
        if item_id in self.quarantined:
            raise CorruptLayout(f"item {item_id} quarantined: {self.quarantined[item_id]}")
        path = self.events_path(item_id)
        if not path.exists():
            raise UnknownItem(f"no item {item_id}")
        docs = []
        with open(path, "rb") as f:
            for line in f:
                doc = parse_event_line(line)
                if doc is None:
                    raise CorruptLayout(f"corrupt event line in {item_id}")
                docs.append(doc)
        return docs

    def read_events(self, item_id: str) -> list[Event]:
        return [Event.from_doc(d) for d in self.read_event_docs(item_id)]

    def outcome_content(self, item_id: str, schema: str, version: int) -> dict:
        path = self.outcome_path(item_id, schema, version)
        if not path.exists():
            raise CorruptLayout(f"missing outcome file {path}")
        return json.loads(path.read_text("utf-8"))

    def outcome_provider(self, item_id: str):
        return lambda schema, version: self.outcome_content(item_id, schema, version)

    # -- commits -----------------------------------------------------------------

    def commit_events(
        self,
        item_id: str,
        events: list[Event],
        payloads: dict[tuple[str, int], dict] | None = None,
    ) -> None:
        """Durably commit one atomic batch: outcome payloads first, then the
        event lines in a single append whose last line closes the batch."""
        if not events:
            return
        payloads = payloads or {}
        docs = [e.to_doc() for e in events]
        for d in docs:
            d["batchEnd"] = False
        docs[-1]["batchEnd"] = True
        block = b"".join(event_line(d) for d in docs)
        try:
            if item_id not in self._known_dirs:
                self.item_dir(item_id).mkdir(parents=True, exist_ok=True)
                self._known_dirs.add(item_id)
            for (schema, version), content in sorted(payloads.items()):
                path = self._outcome_dir(item_id, schema) / f"{version}.json"
                self._hook("outcome.before", str(path), None)
                self._write_file(path, canonical_bytes(content), "outcome.write")
                self._hook("outcome.synced", str(path), None)
            path = self.events_path(item_id)
            self._hook("log.before", str(path), None)
            self._append_log(item_id, path, block, "log.append")
            self._hook("log.synced", str(path), None)
        except SimulatedCrash:
            raise
        except OSError as e:
            raise IoFailure(f"commit failed for {item_id}: {e}") from e
        count, size = self._tail.get(item_id, (0, 0))
        self._tail[item_id] = (count + len(events), size + len(block))
        self._hook("commit.done", item_id, None)

    def _hook(self, point: str, path: str | None, data: bytes | None) -> int | None:
        if self._fault is None:
            return None
        return self._fault(point, path, data)

    def _write_file(self, path: Path, data: bytes, point: str) -> None:
        cut = self._hook(point, str(path), data)
        with open(path, "wb", buffering=0) as f:
            if cut is not None:
                f.write(data[:cut])
                raise SimulatedCrash(point)
            f.write(data)
            if self._fsync:
                os.fsync(f.fileno())

    def _append_log(self, item_id: str, path: Path, data: bytes, point: str) -> None:
        """Append via a cached handle, leased out of the cache for the write so
        eviction can never close a handle mid-use (per-item writer locks
        upstream keep each handle single-writer)."""
        cut = self._hook(point, str(path), data)
        with self._handle_lock:
            f = self._handles.pop(item_id, None)
        if f is None:
            f = open(path, "ab", buffering=0)
        try:
            if cut is not None:
                f.write(data[:cut])
                raise SimulatedCrash(point)
            f.write(data)
            if self._fsync:
                os.fsync(f.fileno())
        finally:
            with self._handle_lock:
                self._handles[item_id] = f  # most recently used last
                if len(self._handles) > 192:
                    for old in list(self._handles)[:64]:
                        self._handles.pop(old).close()

    def close(self) -> None:
        with self._handle_lock:
            for f in self._handles.values():
                try:
                    os.fsync(f.fileno())
                finally:
                    f.close()
            self._handles.clear()
        if not self._fsync:
            os.sync()  # buffered mode: one hard durability point at close

    def _write_atomic(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as f:
            f.write(data)
            f.flush()
            if self._fsync:
                os.fsync(f.fileno())
        os.replace(tmp, path)

    # -- meta and index ------------------------------------------------------------

    def set_bootstrapped(self) -> None:
        self.meta["bootstrapped"] = True
        self._write_atomic(self.root / "store.meta", canonical_bytes(self.meta))

    @property
    def bootstrapped(self) -> bool:
        return bool(self.meta.get("bootstrapped"))

    def write_index(self, doc: dict) -> None:
        self._write_atomic(self.root / "index" / "properties.json", canonical_bytes(doc))

    def read_index(self) -> dict | None:
        path = self.root / "index" / "properties.json"
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text("utf-8"))
        except ValueError:
            return None

    # -- snapshots --------------------------------------------------------------------

    def write_snapshot(self, item_id: str, snapshot: ItemSnapshot) -> None:
        if not self.has_item(item_id):
            raise UnknownItem(f"no item {item_id}")
        doc = {"upToSeq": snapshot.last_event_seq, "item": snapshot.to_doc()}
        self._write_atomic(self.snapshot_path(item_id), canonical_bytes(doc))

    def load_item(self, item_id: str) -> ItemSnapshot:
        """Snapshot cache plus tail replay; falls back to a full replay."""
        if not self.has_item(item_id):
            raise UnknownItem(f"no item {item_id}")
        path = self.snapshot_path(item_id)
        if path.exists():
            try:
                doc = json.loads(path.read_text("utf-8"))
                cached = ItemSnapshot.from_doc(doc["item"])
                up_to = int(doc["upToSeq"])
                if up_to > self.last_seq(item_id) or cached.last_event_seq != up_to:
                    raise StaleSnapshot(f"snapshot of {item_id} is ahead of its log")
                snapshot = cached
                provider = self.outcome_provider(item_id)
                for event in self.read_events(item_id)[up_to + 1 :]:
                    snapshot = apply_event(snapshot, event, provider)
                return snapshot
            except (StaleSnapshot, ValueError, KeyError):
                path.unlink(missing_ok=True)  # discard and rebuild below
        return self.replay_item(item_id)

    def replay_item(self, item_id: str, up_to: int | None = None) -> ItemSnapshot:
        events = self.read_events(item_id)
        if not events:
            raise UnknownItem(f"item {item_id} has no events")
        if up_to is not None:
            if not 0 <= up_to <= events[-1].seq:
                from .errors import SeqOutOfRange

                raise SeqOutOfRange(f"seq {up_to} outside 0..{events[-1].seq}")
            events = events[: up_to + 1]
        return replay(events, self.outcome_provider(item_id))

    # -- integrity ------------------------------------------------------------------

    def verify_integrity(self) -> list[dict]:
        """Report defects without repairing anything."""
        defects: list[dict] = []

        def defect(item_id: str, seq: int | None, kind: str, detail: str) -> None:
            defects.append({"itemId": item_id, "seq": seq, "defect": kind, "detail": detail})

        for item_id, why in sorted(self.quarantined.items()):
            defect(item_id, None, "quarantined", why)
        for item_id in self.item_ids():
            if item_id in self.quarantined:
                continue
            path = self.events_path(item_id)
            if not path.exists():
                defect(item_id, None, "missing_log", "item directory without events.ndjson")
                continue
            docs: list[dict] = []
            ok = True
            with open(path, "rb") as f:
                for i, line in enumerate(f):
                    doc = parse_event_line(line)
                    if doc is None:
                        defect(item_id, i, "crc_mismatch", f"line {i} fails its checksum")
                        ok = False
                        break
                    docs.append(doc)
            if not ok:
                continue
            referenced = set()
            for i, doc in enumerate(docs):
                if doc.get("seq") != i:
                    defect(item_id, i, "discontiguous_seq", f"line {i} has seq {doc.get('seq')}")
                if not doc.get("agentId") or not doc.get("role"):
                    defect(item_id, i, "missing_agent", "event without agent or role")
                if doc.get("kind") == "Transition" and doc.get("transition") == "Complete":
                    if not doc.get("outcomeRef"):
                        defect(item_id, i, "missing_outcome_ref", "Complete without outcomeRef")
                ref = doc.get("outcomeRef")
                if ref:
                    referenced.add((ref["schema"], int(ref["version"])))
                    opath = self.outcome_path(item_id, ref["schema"], int(ref["version"]))
                    if not opath.exists():
                        defect(item_id, i, "dangling_outcome", f"missing {opath.name}")
                    else:
                        try:
                            json.loads(opath.read_text("utf-8"))
                        except ValueError:
                            defect(item_id, i, "corrupt_outcome", f"unparseable {opath.name}")
            out_root = self.item_dir(item_id) / "outcomes"
            if out_root.exists():
                for schema_dir in sorted(out_root.iterdir()):
                    if not schema_dir.is_dir():
                        continue
                    for f in sorted(schema_dir.iterdir()):
                        try:
                            version = int(f.stem)
                        except ValueError:
                            continue
                        if (schema_dir.name, version) not in referenced:
                            defect(item_id, None, "orphan_outcome", str(f))
            spath = self.snapshot_path(item_id)
            if spath.exists():
                try:
                    doc = json.loads(spath.read_text("utf-8"))
                    up_to = int(doc["upToSeq"])
                    if up_to >= len(docs):
                        defect(item_id, up_to, "stale_snapshot", "snapshot ahead of log")
                    else:
                        cached = ItemSnapshot.from_doc(doc["item"])
                        if cached != self.replay_item(item_id, up_to):
                            defect(item_id, up_to, "snapshot_mismatch",
                                   "snapshot differs from replay of its prefix")
                except (ValueError, KeyError) as e:
                    defect(item_id, None, "corrupt_snapshot", str(e))
        return defects



