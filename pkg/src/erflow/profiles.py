"""Entity profile assembly (pairs, partitions, merged records) and feedback."""
from __future__ import annotations

from collections import Counter
from typing import Iterable, Mapping, Optional

from .core import (
    ClusterPartition,
    EntityProfile,
    EntityReference,
    Label,
    MatchEdge,
    Representation,
    canonical_json,
    value_to_json,
)
from .errors import InvalidInput, UnsupportedRepresentation


def _provenance_of(member_ids, refs: Mapping[str, EntityReference]) -> tuple:
    prov = set()
    for m in member_ids:
        try:
            prov.update(refs[m].provenance)
        except KeyError:
            raise InvalidInput(f"profile member {m!r} is not a known reference") from None
    return tuple(sorted(prov))


def _as_map(refs) -> Mapping[str, EntityReference]:
    return refs if isinstance(refs, Mapping) else {r.ref_id: r for r in refs}


def assemble_pairs(edges: Iterable[MatchEdge], refs) -> list:
    """One pair profile per match-labeled edge, ``"p:<a>+<b>"``."""
    refs = _as_map(refs)
    out = [
        EntityProfile(f"p:{e.a}+{e.b}", Representation.PAIR, (e.a, e.b), _provenance_of((e.a, e.b), refs))
        for e in edges
        if e.label == Label.MATCH
    ]
    out.sort(key=lambda p: p.member_ids)
    return out


def assemble_partitions(p: ClusterPartition, refs) -> list:
    refs = _as_map(refs)
    return [
        EntityProfile(f"p:{c[0]}", Representation.PARTITION, c, _provenance_of(c, refs))
        for c in p.clusters
    ]


def merge_attributes(members: Iterable[EntityReference]) -> dict:
    """Majority vote per attribute; ties go to the smallest canonical serialization."""
    votes: dict = {}
    values: dict = {}
    for ref in members:
        for name, value in ref.attributes.items():
            key = canonical_json(value_to_json(value))
            votes.setdefault(name, Counter())[key] += 1
            values[name, key] = value
    merged = {}
    for name, counter in votes.items():
        key = min(counter.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merged[name] = values[name, key]
    return merged


def assemble_merged(p: ClusterPartition, refs) -> list:
    refs = _as_map(refs)
    out = []
    for c in p.clusters:
        members = [refs[m] for m in c]
        out.append(
            EntityProfile(
                f"p:{c[0]}",
                Representation.MERGED,
                c,
                _provenance_of(c, refs),
                merge_attributes(members),
            )
        )
    return out


def profiles_to_references(profiles: Iterable[EntityProfile], source_id: str = "profiles") -> list:
    """Feed merged profiles back as references (``ref_id = profile_id``)."""
    out = []
    for p in profiles:
        if p.representation is not Representation.MERGED:
            raise UnsupportedRepresentation(
                f"profile {p.profile_id!r} has representation {p.representation.value!r}; only merged profiles can become references"
            )
        out.append(EntityReference(p.profile_id, source_id, dict(p.merged_attributes), p.provenance))
    return out


def assemble(representation, partition: Optional[ClusterPartition], edges, refs) -> list:
    rep = Representation(representation)
    if rep is Representation.PAIR:
        return assemble_pairs(edges, refs)
    if partition is None:
        raise InvalidInput(f"{rep.value} profiles need a cluster partition")
    if rep is Representation.PARTITION:
        return assemble_partitions(partition, refs)
    return assemble_merged(partition, refs)
