"""Turn raw source files into cleaned, structured entity references.

Sources are opened through small adapters (CSV, JSONL, canonical reference
JSONL). Each record is cleaned, then run through a chain of extractors whose
outputs are unioned into the reference's attribute map.
"""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .core import (
    EntityProfile,
    EntityReference,
    InformationRecord,
    SourceDescriptor,
    SourceKind,
    canonical_json,
    make_reference_id,
)
from .errors import ConfigError, ERError, InvalidArgument, LoadError, RecordError, SourceNotFound

log = logging.getLogger(__name__)

DEFAULT_NULL_MARKERS = frozenset({"", "NULL", "N/A", "-"})
_WS = re.compile(r"\s+")


@dataclass
class ExtractionStats:
    records_read: int = 0
    record_errors: int = 0
    dropped_empty: int = 0
    number_skips: int = 0
    collisions: int = 0

    def merge(self, other: "ExtractionStats") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


# -- sources ---------------------------------------------------------------

def open_source(
    desc: SourceDescriptor,
    on_error: str = "abort",
    stats: Optional[ExtractionStats] = None,
    seq: Optional[Iterator[int]] = None,
) -> Iterator[InformationRecord]:
    """Yield the records of a csv or jsonl source in file order.

    ``on_error`` is ``"abort"`` (raise :class:`RecordError`) or ``"skip"``
    (count the bad record in ``stats.record_errors`` and continue).
    """
    if on_error not in ("abort", "skip"):
        raise ConfigError(f"unknown error policy {on_error!r}", "extraction.error_policy")
    stats = stats if stats is not None else ExtractionStats()
    seq = seq if seq is not None else itertools.count()
    try:
        fh = open(desc.location, encoding="utf-8", newline="")
    except OSError:
        raise SourceNotFound(desc.source_id, desc.location) from None
    with fh:
        if desc.kind is SourceKind.CSV:
            rows = _csv_payloads(desc, fh)
        elif desc.kind is SourceKind.JSONL:
            rows = _jsonl_payloads(desc, fh)
        else:
            raise InvalidArgument(f"open_source cannot read {desc.kind.value} sources; use passthrough_load")
        for ordinal, payload in rows:
            if isinstance(payload, RecordError):
                if on_error == "abort":
                    raise payload
                stats.record_errors += 1
                log.warning("skipping %s", payload)
                continue
            stats.records_read += 1
            yield InformationRecord(desc.source_id, ordinal, payload, next(seq))


def _csv_payloads(desc, fh):
    reader = csv.reader(fh)
    header = desc.field_names
    if header is None:
        header = next(reader, None)
        if header is None:
            return
    header = list(header)
    for ordinal, row in enumerate(reader):
        if not row:
            continue
        if len(row) != len(header):
            yield ordinal, RecordError(desc.source_id, ordinal, f"expected {len(header)} fields, got {len(row)}")
            continue
        yield ordinal, dict(zip(header, row))


def _jsonl_payloads(desc, fh):
    for ordinal, line in enumerate(fh):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            yield ordinal, RecordError(desc.source_id, ordinal, f"invalid JSON: {exc.msg}")
            continue
        try:
            yield ordinal, payload_from_object(obj)
        except InvalidArgument as exc:
            yield ordinal, RecordError(desc.source_id, ordinal, str(exc))


def payload_from_object(obj) -> dict:
    """Flatten a decoded JSON object into a string payload (nulls dropped)."""
    if not isinstance(obj, dict):
        raise InvalidArgument("record must be a JSON object")
    payload = {}
    for k, v in obj.items():
        if not k:
            raise InvalidArgument("empty field name")
        if v is None:
            continue
        if isinstance(v, bool):
            payload[k] = "true" if v else "false"
        elif isinstance(v, (str, int, float)):
            payload[k] = v if isinstance(v, str) else json.dumps(v)
        else:
            raise InvalidArgument(f"field {k!r} is not a flat scalar")
    return payload


# -- cleaning --------------------------------------------------------------

@dataclass(frozen=True)
class CleaningRules:
    trim_whitespace: bool = True
    lowercase: bool = False
    collapse_internal_whitespace: bool = False
    null_markers: frozenset = DEFAULT_NULL_MARKERS

    def __post_init__(self):
        object.__setattr__(self, "null_markers", frozenset(self.null_markers))

    def clean_value(self, value: str) -> Optional[str]:
        if self.trim_whitespace:
            value = value.strip()
        if self.collapse_internal_whitespace:
            value = _WS.sub(" ", value)
        if value in self.null_markers:
            return None
        if self.lowercase:
            value = value.lower()
            if value in self.null_markers:
                return None
        return value


def clean_record(r: InformationRecord, rules: CleaningRules) -> InformationRecord:
    payload = {}
    for k, v in r.payload.items():
        cleaned = rules.clean_value(v)
        if cleaned is not None:
            payload[k] = cleaned
    return InformationRecord(r.source_id, r.record_ordinal, payload, r.ingest_seq)


# -- extractors ------------------------------------------------------------

EXTRACTOR_KINDS = ("copy_field", "concat_fields", "tokenize_field", "parse_number", "composite")


@dataclass(frozen=True)
class Extractor:
    name: str
    kind: str
    source: Optional[str] = None
    sources: tuple = ()
    output: Optional[str] = None
    separator: str = " "
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in EXTRACTOR_KINDS:
            raise ConfigError(f"unknown extractor kind {self.kind!r}", f"extractor {self.name}")
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "children", tuple(self.children))
        if self.kind == "composite":
            if not self.children:
                raise ConfigError("composite extractor needs children", f"extractor {self.name}")
            return
        if not self.output:
            raise ConfigError("output attribute name required", f"extractor {self.name}")
        if self.kind == "concat_fields":
            if not self.sources:
                raise ConfigError("concat_fields needs 'sources'", f"extractor {self.name}")
        elif not self.source:
            raise ConfigError(f"{self.kind} needs 'source'", f"extractor {self.name}")

    def outputs(self) -> list:
        if self.kind == "composite":
            return [o for c in self.children for o in c.outputs()]
        return [self.output]

    @classmethod
    def from_dict(cls, d: dict) -> "Extractor":
        d = dict(d)
        children = tuple(cls.from_dict(c) for c in d.pop("children", ()))
        allowed = {"name", "kind", "source", "sources", "output", "separator"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", f"extractor {d.get('name', '?')}")
        d.setdefault("name", d.get("output") or d.get("kind", "extractor"))
        return cls(children=children, **d)


def tokenize(text: str) -> frozenset:
    return frozenset(t.lower() for t in text.split() if t)


def apply_extractor(e: Extractor, records: Sequence[InformationRecord], stats: Optional[ExtractionStats] = None) -> dict:
    """Attributes contributed by ``e`` over one or more cleaned records.

    When several records are given, fields from later records override
    earlier ones. Composite extractors union their children's output; on a
    name collision the later child wins and the collision is logged.
    """
    if not records:
        raise InvalidArgument("apply_extractor needs at least one record")
    stats = stats if stats is not None else ExtractionStats()
    if e.kind == "composite":
        out: dict = {}
        for child in e.children:
            for name, value in apply_extractor(child, records, stats).items():
                if name in out:
                    stats.collisions += 1
                    log.info("attribute %r from extractor %r overrides an earlier value", name, child.name)
                out[name] = value
        return out

    if len(records) == 1:
        fields = records[0].payload
    else:
        fields = {}
        for r in records:
            fields.update(r.payload)

    if e.kind == "copy_field":
        v = fields.get(e.source)
        return {e.output: v} if v is not None else {}
    if e.kind == "concat_fields":
        parts = [fields[s] for s in e.sources if s in fields]
        return {e.output: e.separator.join(parts)} if parts else {}
    if e.kind == "tokenize_field":
        v = fields.get(e.source)
        toks = tokenize(v) if v is not None else None
        return {e.output: toks} if toks else {}
    # parse_number
    v = fields.get(e.source)
    if v is None:
        return {}
    try:
        num = float(v)
    except ValueError:
        num = math.nan
    if not math.isfinite(num):
        stats.number_skips += 1
        return {}
    return {e.output: num}


def extract_attributes(chain: Sequence[Extractor], records: Sequence[InformationRecord], stats: Optional[ExtractionStats] = None) -> dict:
    return apply_extractor(Extractor("chain", "composite", children=tuple(chain)), records, stats)


def check_chain(chain: Sequence[Extractor]) -> None:
    seen = Counter(o for e in chain for o in e.outputs())
    dupes = sorted(k for k, n in seen.items() if n > 1)
    if dupes:
        raise ConfigError(f"output attribute names must be unique, duplicated: {dupes}", "extraction.extractors")


def reference_from_record(record: InformationRecord, chain: Sequence[Extractor], stats: Optional[ExtractionStats] = None) -> Optional[EntityReference]:
    """Build one reference from a cleaned record; ``None`` when nothing was extracted."""
    attrs = extract_attributes(chain, [record], stats)
    if not attrs:
        return None
    return EntityReference(
        make_reference_id(record.source_id, record.record_ordinal),
        record.source_id,
        attrs,
        ((record.source_id, record.record_ordinal),),
    )


def build_references(
    desc: SourceDescriptor,
    rules: CleaningRules,
    chain: Sequence[Extractor],
    on_error: str = "abort",
    stats: Optional[ExtractionStats] = None,
    seq: Optional[Iterator[int]] = None,
) -> list:
    stats = stats if stats is not None else ExtractionStats()
    if desc.kind is SourceKind.REFERENCE_PASSTHROUGH:
        refs = passthrough_load(desc)
        stats.records_read += len(refs)
        return refs
    if not chain:
        raise ConfigError("extractor chain must be non-empty", f"extraction.chains.{desc.source_id}")
    refs = []
    for record in open_source(desc, on_error, stats, seq):
        ref = reference_from_record(clean_record(record, rules), chain, stats)
        if ref is None:
            stats.dropped_empty += 1
            continue
        refs.append(ref)
    return refs


def passthrough_load(desc: SourceDescriptor) -> list:
    """Reload canonical reference JSONL, or merged-profile JSONL as references."""
    from .profiles import profiles_to_references

    try:
        fh = open(desc.location, encoding="utf-8")
    except OSError:
        raise SourceNotFound(desc.source_id, desc.location) from None
    refs = []
    seen = set()
    with fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "profile_id" in obj:
                    (ref,) = profiles_to_references([EntityProfile.from_dict(obj)], source_id=desc.source_id)
                else:
                    ref = EntityReference.from_dict(obj)
            except (ValueError, KeyError, TypeError, ERError) as exc:
                raise LoadError(desc.location, line_no, f"invalid reference: {exc}") from None
            if ref.ref_id in seen:
                raise LoadError(desc.location, line_no, f"duplicate ref_id {ref.ref_id!r}")
            seen.add(ref.ref_id)
            refs.append(ref)
    return refs


def references_to_jsonl(refs: Iterable[EntityReference]) -> str:
    return "".join(canonical_json(r.to_dict()) + "\n" for r in refs)
