"""Versioned artifact store.

Every ``put_artifacts`` call publishes a new immutable version. Three kinds
accumulate (``references``, ``comparison_space``, ``edges``: a version sees
the union of all earlier puts, keyed by identity, and a key may never be
rebound to different content). ``partition`` and ``profiles`` are
state kinds: each put replaces what later versions see, because a
partition cannot be unioned with its own refinement.

Backends:

* :class:`ReferenceStore` keeps everything in memory.
* :class:`FileStore` additionally appends each put to ``store.log`` (one
  checksummed JSON record per line, a ``commit`` record closing each version)
  and rewrites ``index.json``. Reopening replays the log; an unfinished tail
  is dropped, so a crash leaves the store at its last committed version.
"""
from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

from .core import (
    EntityProfile,
    EntityReference,
    MatchEdge,
    canonical_json,
    cluster_from_dict,
    cluster_to_dict,
    group_from_dict,
    group_to_dict,
)
from .errors import ConflictError, NotFound, RestoreError, StoreError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
ACCUMULATING = ("references", "comparison_space", "edges")
REPLACING = ("partition", "profiles")
KINDS = ACCUMULATING + REPLACING

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def _hex(h: int) -> str:
    return f"{h:016x}"


# (key, to_dict, from_dict) per kind
_CODECS = {
    "references": (lambda r: r.ref_id, lambda r: r.to_dict(), EntityReference.from_dict),
    "comparison_space": (lambda g: tuple(g), group_to_dict, group_from_dict),
    "edges": (lambda e: (e.a, e.b), lambda e: e.to_dict(), MatchEdge.from_dict),
    "partition": (lambda c: tuple(c), cluster_to_dict, cluster_from_dict),
    "profiles": (lambda p: p.profile_id, lambda p: p.to_dict(), EntityProfile.from_dict),
}


def _check_kind(kind: str) -> None:
    if kind not in KINDS:
        raise NotFound(f"unknown artifact kind {kind!r}")


@dataclass(frozen=True)
class StoreVersion:
    version: int
    created_at: str
    counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"version": self.version, "created_at": self.created_at, "counts": dict(self.counts)}

    @classmethod
    def from_dict(cls, d) -> "StoreVersion":
        return cls(int(d["version"]), str(d["created_at"]), {k: int(v) for k, v in d["counts"].items()})


class ReferenceStore:
    """In-memory versioned store; readers may run concurrently with one writer."""

    def __init__(self):
        self._lock = threading.RLock()
        self._versions: list = []
        # accumulating kinds: list of (version, key, line) plus key -> line
        self._entries = {k: [] for k in ACCUMULATING}
        self._index = {k: {} for k in ACCUMULATING}
        # replacing kinds: list of (version, [(key, line), ...])
        self._sets = {k: [] for k in REPLACING}
        self._decoded: dict = {}

    # -- reads ---------------------------------------------------------------

    @property
    def latest(self) -> int:
        return len(self._versions)

    def versions(self) -> list:
        with self._lock:
            return list(self._versions)

    def _resolve_version(self, at_version: Optional[int]) -> int:
        latest = self.latest
        if at_version is None:
            return latest
        if isinstance(at_version, bool) or not isinstance(at_version, int) or not 0 <= at_version <= latest:
            raise NotFound(f"unknown store version {at_version!r}")
        return at_version

    def _lines(self, kind: str, version: int) -> list:
        if kind in ACCUMULATING:
            entries = self._entries[kind]
            if version == self.latest:
                return [(key, line) for _, key, line in entries]
            return [(key, line) for v, key, line in entries if v <= version]
        visible = []
        for v, items in self._sets[kind]:
            if v > version:
                break
            visible = items
        return list(visible)

    def get_artifacts(self, kind: str, at_version: Optional[int] = None) -> list:
        _check_kind(kind)
        with self._lock:
            version = self._resolve_version(at_version)
            lines = self._lines(kind, version)
        lines.sort(key=lambda kl: kl[0])
        decode = _CODECS[kind][2]
        out = []
        for _, line in lines:
            item = self._decoded.get((kind, line))
            if item is None:
                item = decode(json.loads(line))
                self._decoded[kind, line] = item
            out.append(item)
        return out

    # -- writes --------------------------------------------------------------

    def put_artifacts(self, kind: str, items: Iterable) -> StoreVersion:
        _check_kind(kind)
        key_of, to_dict, _ = _CODECS[kind]
        with self._lock:
            encoded = []
            batch = {}
            for item in items:
                key = key_of(item)
                line = canonical_json(to_dict(item))
                prior = self._index[kind].get(key) if kind in ACCUMULATING else None
                prior = batch.get(key, prior)
                if prior is not None and prior != line:
                    raise ConflictError(f"{kind}: {key!r} already stored with different content")
                if key in batch or (kind in ACCUMULATING and prior is not None):
                    continue
                batch[key] = line
                encoded.append((key, line))
            version = self.latest + 1
            counts = dict(self._versions[-1].counts) if self._versions else {}
            if kind in ACCUMULATING:
                counts[kind] = counts.get(kind, 0) + len(encoded)
            else:
                counts[kind] = len(encoded)
            sv = StoreVersion(version, datetime.now(timezone.utc).isoformat(), counts)
            try:
                self._persist(sv, kind, encoded)
            except OSError as exc:
                raise StoreError(f"failed to persist version {version}: {exc}") from exc
            self._apply(sv, kind, encoded)
            return sv

    def _persist(self, sv: StoreVersion, kind: str, encoded: list) -> None:
        pass

    def _apply(self, sv: StoreVersion, kind: str, encoded: list) -> None:
        if kind in ACCUMULATING:
            for key, line in encoded:
                self._entries[kind].append((sv.version, key, line))
                self._index[kind][key] = line
        else:
            self._sets[kind].append((sv.version, encoded))
        self._versions.append(sv)

    # -- snapshots -----------------------------------------------------------

    def snapshot(self, path) -> Path:
        return snapshot(self, path)


def _entry_lines(store: ReferenceStore, kind: str):
    """Yield ``(version, [lines])`` for each put of ``kind`` that added items."""
    if kind in ACCUMULATING:
        by_version: dict = {}
        for v, _, line in store._entries[kind]:
            by_version.setdefault(v, []).append(line)
        yield from sorted(by_version.items())
    else:
        for v, items in store._sets[kind]:
            yield v, [line for _, line in items]


def snapshot(store: ReferenceStore, path) -> Path:
    """Write every version of ``store`` to ``path``.

    Layout: a ``{"format_version": 1}`` header, the version list, one segment
    per artifact kind, and a trailing line holding the FNV-1a 64 checksum of
    all preceding bytes. The file is written to a temporary name and renamed.
    """
    path = Path(path)
    with store._lock:
        lines = [canonical_json({"format_version": FORMAT_VERSION})]
        versions = store._versions
        lines.append(canonical_json({"segment": "versions", "count": len(versions)}))
        lines.extend(canonical_json(v.to_dict()) for v in versions)
        for kind in KINDS:
            puts = list(_entry_lines(store, kind))
            lines.append(canonical_json({"segment": kind, "count": len(puts)}))
            for v, items in puts:
                lines.append('{"items":[' + ",".join(items) + '],"v":' + str(v) + "}")
    body = ("\n".join(lines) + "\n").encode("utf-8")
    trailer = canonical_json({"checksum": _hex(fnv1a64(body))}).encode("utf-8") + b"\n"
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(body + trailer)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


def restore(path, into: Optional[ReferenceStore] = None) -> ReferenceStore:
    """Rebuild a store from a snapshot; nothing is returned on a bad file."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise RestoreError(f"cannot read snapshot {path}: {exc}") from exc
    if not data.endswith(b"\n"):
        raise RestoreError("snapshot is truncated: missing final newline")
    body, sep, trailer = data[:-1].rpartition(b"\n")
    if not sep:
        raise RestoreError("snapshot is truncated: no checksum line")
    body += b"\n"
    try:
        expected = json.loads(trailer)["checksum"]
    except (ValueError, KeyError, TypeError):
        raise RestoreError("snapshot is truncated: missing checksum line") from None
    actual = _hex(fnv1a64(body))
    if actual != expected:
        raise RestoreError(f"snapshot checksum mismatch: expected {expected}, computed {actual}")
    try:
        return _load_snapshot_body(body.decode("utf-8").splitlines(), into)
    except RestoreError:
        raise
    except (ValueError, KeyError, TypeError, StoreError) as exc:
        raise RestoreError(f"malformed snapshot: {exc}") from exc


def _load_snapshot_body(lines: list, into: Optional[ReferenceStore]) -> ReferenceStore:
    it = iter(lines)
    header = json.loads(next(it))
    if header.get("format_version") != FORMAT_VERSION:
        raise RestoreError(f"unsupported snapshot format {header!r}")

    def segment(name):
        seg = json.loads(next(it))
        if seg.get("segment") != name:
            raise RestoreError(f"expected segment {name!r}, found {seg!r}")
        return [json.loads(next(it)) for _ in range(seg["count"])]

    versions = [StoreVersion.from_dict(d) for d in segment("versions")]
    puts: dict = {}
    for kind in KINDS:
        key_of, to_dict, from_dict = _CODECS[kind]
        for rec in segment(kind):
            encoded = []
            for item in rec["items"]:
                obj = from_dict(item)
                encoded.append((key_of(obj), canonical_json(to_dict(obj))))
            puts[int(rec["v"])] = (kind, encoded)
    store = ReferenceStore() if into is None else into
    if store.latest:
        raise RestoreError("restore target must be empty")
    for sv in versions:
        kind, encoded = puts.get(sv.version, (None, []))
        if kind is None:
            kind = _empty_put_kind(sv, store)
        store._persist(sv, kind, encoded)
        store._apply(sv, kind, encoded)
    return store


def _empty_put_kind(sv: StoreVersion, store: ReferenceStore) -> str:
    """Kind of a put that added nothing (only its counts moved, or nothing did)."""
    prev = store._versions[-1].counts if store._versions else {}
    for kind in KINDS:
        if kind in sv.counts and sv.counts[kind] != prev.get(kind):
            return kind
    return "references"


class FileStore(ReferenceStore):
    """Append-only, checksummed log on disk with an in-memory read model."""

    LOG = "store.log"
    INDEX = "index.json"

    def __init__(self, directory):
        super().__init__()
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.log_path = self.directory / self.LOG
        self.index_path = self.directory / self.INDEX
        self._replay()

    @staticmethod
    def _frame(rec: dict) -> str:
        body = canonical_json(rec)
        return canonical_json({"crc": _hex(fnv1a64(body.encode("utf-8"))), "rec": rec}) + "\n"

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        data = self.log_path.read_bytes()
        good_end = 0
        pos = 0
        pending: list = []
        bad_line = None
        line_no = 0
        while pos < len(data):
            nl = data.find(b"\n", pos)
            end = len(data) if nl < 0 else nl + 1
            raw = data[pos:end]
            line_no += 1
            pos = end
            rec = self._unframe(raw) if nl >= 0 else None
            if rec is None:
                if bad_line is None:
                    bad_line = line_no
                continue
            if bad_line is not None:
                raise StoreError(f"{self.log_path}: checksum mismatch at line {bad_line} before committed data")
            if rec["t"] == "commit":
                sv = StoreVersion.from_dict(rec["version"])
                if sv.version != self.latest + 1:
                    raise StoreError(f"{self.log_path}: version {sv.version} out of sequence at line {line_no}")
                kind, encoded = rec["kind"], []
                key_of, to_dict, from_dict = _CODECS[kind]
                for item in pending:
                    obj = from_dict(item)
                    encoded.append((key_of(obj), canonical_json(to_dict(obj))))
                self._apply(sv, kind, encoded)
                pending = []
                good_end = pos
            else:
                pending.extend(rec["items"])
        if good_end < len(data):
            log.warning("%s: dropping %d bytes of uncommitted tail", self.log_path, len(data) - good_end)
            with open(self.log_path, "r+b") as fh:
                fh.truncate(good_end)
        self._write_index(good_end, self.latest)

    @staticmethod
    def _unframe(raw: bytes):
        try:
            frame = json.loads(raw)
            rec = frame["rec"]
            if frame["crc"] != _hex(fnv1a64(canonical_json(rec).encode("utf-8"))):
                return None
            return rec
        except (ValueError, KeyError, TypeError):
            return None

    def _persist(self, sv: StoreVersion, kind: str, encoded: list) -> None:
        chunks = []
        items = [json.loads(line) for _, line in encoded]
        for i in range(0, len(items), 512):
            chunks.append(self._frame({"t": "items", "items": items[i:i + 512]}))
        chunks.append(self._frame({"t": "commit", "kind": kind, "version": sv.to_dict()}))
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write("".join(chunks))
            fh.flush()
            os.fsync(fh.fileno())
            size = fh.tell()
        self._write_index(size, sv.version)

    def _write_index(self, log_bytes: int, versions: int) -> None:
        tmp = self.index_path.with_name(self.INDEX + ".tmp")
        tmp.write_text(canonical_json({"format_version": FORMAT_VERSION, "versions": versions, "log_bytes": log_bytes}))
        os.replace(tmp, self.index_path)


def open_store(backend: str = "memory", path=None) -> ReferenceStore:
    if backend == "memory":
        return ReferenceStore()
    if backend == "file":
        if path is None:
            raise StoreError("file store needs a path")
        return FileStore(path)
    raise StoreError(f"unknown store backend {backend!r}")
