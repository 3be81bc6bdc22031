"""Shared domain types and their canonical JSON form.

Every type here is immutable after construction. Attribute values use plain
Python objects so they stay cheap to compare and hash:

* text       -> ``str``
* number     -> ``float`` (finite)
* token_set  -> ``frozenset[str]`` of non-empty lowercase tokens

Canonical serialization is one JSON object per line with keys sorted, no
insignificant whitespace and token sets written as sorted lists, so equal
objects always produce identical bytes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, NamedTuple, Optional, Union

from .errors import InvalidArgument, InvalidInput

AttributeValue = Union[str, float, frozenset]
Provenance = tuple  # tuple[tuple[str, int], ...]
CandidateGroup = tuple  # tuple[str, ...], sorted, >= 2 distinct members

REF_SEPARATOR = ":"


class SourceKind(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"
    REFERENCE_PASSTHROUGH = "reference_passthrough"


class Label(str, Enum):
    MATCH = "match"
    POSSIBLE = "possible"
    NON_MATCH = "non_match"


class Representation(str, Enum):
    PAIR = "pair"
    PARTITION = "partition"
    MERGED = "merged"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def make_reference_id(source_id: str, record_ordinal: int) -> str:
    """Build the stable ``"<source_id>:<ordinal>"`` identifier.

    >>> make_reference_id("cust", 41)
    'cust:41'
    """
    if not isinstance(source_id, str) or not source_id:
        raise InvalidArgument("source_id must be a non-empty string")
    if REF_SEPARATOR in source_id:
        raise InvalidArgument(f"source_id {source_id!r} must not contain {REF_SEPARATOR!r}")
    if isinstance(record_ordinal, bool) or not isinstance(record_ordinal, int) or record_ordinal < 0:
        raise InvalidArgument(f"record_ordinal must be a non-negative integer, got {record_ordinal!r}")
    return f"{source_id}{REF_SEPARATOR}{record_ordinal}"


# -- attribute values -------------------------------------------------------

def check_value(value: Any) -> AttributeValue:
    """Validate (and normalize) one attribute value."""
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        raise InvalidArgument("booleans are not attribute values")
    if isinstance(value, (int, float)):
        value = float(value)
        if not math.isfinite(value):
            raise InvalidArgument("number attribute must be finite")
        return value
    if isinstance(value, (set, frozenset)):
        if not value:
            raise InvalidArgument("token_set must be non-empty")
        for tok in value:
            if not isinstance(tok, str) or not tok or tok != tok.lower():
                raise InvalidArgument(f"invalid token {tok!r}: tokens are non-empty lowercase strings")
        return frozenset(value)
    raise InvalidArgument(f"unsupported attribute value {value!r}")


def value_kind(value: AttributeValue) -> str:
    if isinstance(value, str):
        return "text"
    if isinstance(value, float):
        return "number"
    return "token_set"


def value_to_json(value: AttributeValue) -> Any:
    if isinstance(value, frozenset):
        return sorted(value)
    return value


def value_from_json(raw: Any) -> AttributeValue:
    if isinstance(raw, list):
        return check_value(frozenset(raw)) if raw else check_value(frozenset())
    return check_value(raw)


def _attrs_from_json(raw: Mapping[str, Any]) -> dict:
    return {k: value_from_json(v) for k, v in raw.items()}


def _attrs_to_json(attrs: Mapping[str, AttributeValue]) -> dict:
    return {k: value_to_json(v) for k, v in attrs.items()}


def _provenance(items: Iterable) -> tuple:
    out = []
    for item in items:
        sid, ordinal = item
        if not isinstance(sid, str) or isinstance(ordinal, bool) or not isinstance(ordinal, int):
            raise InvalidArgument(f"bad provenance entry {item!r}")
        out.append((sid, ordinal))
    return tuple(out)


# -- records and references ------------------------------------------------

@dataclass(frozen=True)
class SourceDescriptor:
    source_id: str
    kind: SourceKind
    location: str
    field_names: Optional[tuple] = None

    def __post_init__(self):
        if not self.source_id or REF_SEPARATOR in self.source_id:
            raise InvalidArgument(f"invalid source_id {self.source_id!r}")
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if self.field_names is not None:
            object.__setattr__(self, "field_names", tuple(self.field_names))

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "kind": self.kind.value,
            "location": self.location,
            "field_names": list(self.field_names) if self.field_names is not None else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SourceDescriptor":
        return cls(d["source_id"], d["kind"], d["location"], d.get("field_names"))


@dataclass(frozen=True)
class InformationRecord:
    source_id: str
    record_ordinal: int
    payload: Mapping[str, str]
    ingest_seq: int = 0

    def __post_init__(self):
        for k, v in self.payload.items():
            if not isinstance(k, str) or not k:
                raise InvalidArgument("payload keys must be non-empty strings")
            if not isinstance(v, str):
                raise InvalidArgument(f"payload value for {k!r} must be a string")

    def to_dict(self) -> dict:
        return {
            "source_id": self.source_id,
            "record_ordinal": self.record_ordinal,
            "payload": dict(self.payload),
            "ingest_seq": self.ingest_seq,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "InformationRecord":
        return cls(d["source_id"], d["record_ordinal"], dict(d["payload"]), d.get("ingest_seq", 0))


@dataclass(frozen=True)
class EntityReference:
    ref_id: str
    source_id: str
    attributes: Mapping[str, AttributeValue]
    provenance: Provenance

    def __post_init__(self):
        if not isinstance(self.ref_id, str) or not self.ref_id:
            raise InvalidArgument("ref_id must be a non-empty string")
        attrs = {}
        for name in sorted(self.attributes):
            if not isinstance(name, str) or not name:
                raise InvalidArgument("attribute names must be non-empty strings")
            attrs[name] = check_value(self.attributes[name])
        object.__setattr__(self, "attributes", attrs)
        prov = _provenance(self.provenance)
        if not prov:
            raise InvalidArgument(f"reference {self.ref_id!r} has empty provenance")
        object.__setattr__(self, "provenance", prov)

    def to_dict(self) -> dict:
        return {
            "ref_id": self.ref_id,
            "source_id": self.source_id,
            "attributes": _attrs_to_json(self.attributes),
            "provenance": [list(p) for p in self.provenance],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EntityReference":
        return cls(d["ref_id"], d["source_id"], _attrs_from_json(d["attributes"]), d["provenance"])

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


# -- comparison space -------------------------------------------------------

def candidate_group(member_ids: Iterable[str]) -> CandidateGroup:
    """Canonical group: distinct members, sorted ascending."""
    members = tuple(sorted(member_ids))
    if len(members) < 2:
        raise InvalidArgument("a candidate group needs at least two members")
    if len(set(members)) != len(members):
        raise InvalidArgument(f"duplicate members in group {list(members)}")
    return members


def group_to_dict(group: CandidateGroup) -> dict:
    return {"member_ids": list(group)}


def group_from_dict(d: Mapping) -> CandidateGroup:
    group = candidate_group(d["member_ids"])
    if list(group) != list(d["member_ids"]):
        raise InvalidArgument("member_ids must be sorted")
    return group


@dataclass
class SpaceStats:
    total_references: int
    group_count: int
    missing_keys: int = 0
    filtered_out: int = 0

    def to_dict(self) -> dict:
        return {
            "total_references": self.total_references,
            "group_count": self.group_count,
            "missing_keys": self.missing_keys,
            "filtered_out": self.filtered_out,
        }


@dataclass(frozen=True)
class ComparisonSpace:
    """Sorted, duplicate-free candidate groups plus bookkeeping counts."""

    groups: list
    stats: SpaceStats

    def __len__(self):
        return len(self.groups)

    @classmethod
    def build(cls, groups: Iterable[CandidateGroup], total_references: int, **extra) -> "ComparisonSpace":
        groups = sorted(set(groups))
        return cls(groups, SpaceStats(total_references, len(groups), **extra))

    def to_jsonl(self) -> str:
        return "".join(canonical_json(group_to_dict(g)) + "\n" for g in self.groups)


# -- matching --------------------------------------------------------------

class MatchEdge(NamedTuple):
    a: str
    b: str
    score: float
    label: Label
    field_scores: Mapping[str, float]

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "score": self.score,
            "label": Label(self.label).value,
            "field_scores": dict(self.field_scores),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MatchEdge":
        a, b = d["a"], d["b"]
        if not a < b:
            raise InvalidArgument(f"edge endpoints must satisfy a < b, got {a!r}, {b!r}")
        score = float(d["score"])
        if not 0.0 <= score <= 1.0:
            raise InvalidArgument(f"edge score {score} outside [0, 1]")
        return cls(a, b, score, Label(d["label"]), {k: float(v) for k, v in d["field_scores"].items()})


# -- clustering -------------------------------------------------------------

@dataclass(frozen=True)
class ClusterPartition:
    """Disjoint clusters covering ``universe``.

    Clusters are kept as sorted tuples, ordered by their smallest member, so
    two equal partitions compare (and serialize) identically.
    """

    clusters: tuple
    universe: frozenset

    @classmethod
    def from_clusters(cls, clusters: Iterable[Iterable[str]], universe: Optional[Iterable[str]] = None) -> "ClusterPartition":
        canon = sorted(tuple(sorted(c)) for c in clusters)
        covered = frozenset(m for c in canon for m in c)
        part = cls(tuple(canon), covered if universe is None else frozenset(universe))
        part.validate()
        return part

    def validate(self) -> None:
        seen = set()
        for c in self.clusters:
            if not c:
                raise InvalidInput("empty cluster in partition")
            for m in c:
                if m in seen:
                    raise InvalidInput(f"reference {m!r} appears in two clusters")
                seen.add(m)
        if seen != self.universe:
            raise InvalidInput("clusters do not cover the universe exactly")

    def cluster_of(self) -> dict:
        return {m: c for c in self.clusters for m in c}

    def to_jsonl(self) -> str:
        return "".join(canonical_json(cluster_to_dict(c)) + "\n" for c in self.clusters)


def cluster_to_dict(cluster: tuple) -> dict:
    return {"members": list(cluster)}


def cluster_from_dict(d: Mapping) -> tuple:
    members = tuple(d["members"])
    if not members or list(members) != sorted(set(members)):
        raise InvalidArgument("cluster members must be non-empty, distinct and sorted")
    return members


# -- profiles ---------------------------------------------------------------

@dataclass(frozen=True)
class EntityProfile:
    profile_id: str
    representation: Representation
    member_ids: tuple
    provenance: Provenance
    merged_attributes: Optional[Mapping[str, AttributeValue]] = None

    def __post_init__(self):
        rep = Representation(self.representation)
        object.__setattr__(self, "representation", rep)
        object.__setattr__(self, "member_ids", tuple(self.member_ids))
        object.__setattr__(self, "provenance", _provenance(self.provenance))
        if not self.member_ids:
            raise InvalidArgument("profile needs at least one member")
        if rep is Representation.PAIR and len(self.member_ids) != 2:
            raise InvalidArgument("pair profiles have exactly two members")
        if (self.merged_attributes is not None) != (rep is Representation.MERGED):
            raise InvalidArgument("merged_attributes present iff representation is merged")
        if self.merged_attributes is not None:
            attrs = {k: check_value(self.merged_attributes[k]) for k in sorted(self.merged_attributes)}
            object.__setattr__(self, "merged_attributes", attrs)

    def to_dict(self) -> dict:
        d = {
            "profile_id": self.profile_id,
            "representation": self.representation.value,
            "member_ids": list(self.member_ids),
            "provenance": [list(p) for p in self.provenance],
        }
        if self.merged_attributes is not None:
            d["merged_attributes"] = _attrs_to_json(self.merged_attributes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "EntityProfile":
        merged = d.get("merged_attributes")
        return cls(
            d["profile_id"],
            d["representation"],
            d["member_ids"],
            d["provenance"],
            _attrs_from_json(merged) if merged is not None else None,
        )

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def profiles_to_jsonl(profiles: Iterable[EntityProfile]) -> str:
    return "".join(p.to_json() + "\n" for p in profiles)


# -- ground truth -----------------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    """Either a set of matching pairs or a ref_id -> cluster label map."""

    match_pairs: Optional[frozenset] = None
    labels: Optional[Mapping[str, str]] = None

    def __post_init__(self):
        if (self.match_pairs is None) == (self.labels is None):
            raise InvalidArgument("ground truth must have exactly one of match_pairs or labels")
        if self.match_pairs is not None:
            pairs = set()
            for p in self.match_pairs:
                a, b = sorted(p)
                if a == b:
                    raise InvalidArgument(f"self-pair {a!r} in ground truth")
                pairs.add((a, b))
            object.__setattr__(self, "match_pairs", frozenset(pairs))

    @property
    def universe(self) -> Optional[frozenset]:
        return frozenset(self.labels) if self.labels is not None else None

    def pairs(self) -> frozenset:
        """Truth as unordered pairs; cluster labels expand to within-cluster pairs."""
        if self.match_pairs is not None:
            return self.match_pairs
        by_label: dict = {}
        for ref, label in self.labels.items():
            by_label.setdefault(label, []).append(ref)
        out = set()
        for members in by_label.values():
            members.sort()
            for i, a in enumerate(members):
                for b in members[i + 1:]:
                    out.add((a, b))
        return frozenset(out)

    def partition(self) -> ClusterPartition:
        if self.labels is None:
            raise InvalidArgument("pair-form ground truth has no universe; use cluster labels")
        by_label: dict = {}
        for ref, label in self.labels.items():
            by_label.setdefault(label, []).append(ref)
        return ClusterPartition.from_clusters(by_label.values())
