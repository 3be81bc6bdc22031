"""Batch and incremental orchestration of the resolution stages.

Batch: extraction -> comparison space -> matching -> clustering -> assembly,
with matching or clustering optional (at least one is required). Artifacts
are written to the store only after the stage producing them completes.

Incremental: :class:`IncrementalResolver` keeps a union-find over all
ingested references and compares each new reference only against stored
references that share its block key. For connected components the final
partition equals the batch partition regardless of ingestion order.
"""
from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional

from .clustering import IncrementalClusterer, connected_components, unique_mapping
from .comparison import (
    block_by_key,
    block_keys_for,
    filter_cross_source,
    filter_shared_tokens,
    full_space,
    pairs_from_blocks,
    sorted_neighborhood,
)
from .config import RuntimeConfig
from .core import (
    ClusterPartition,
    ComparisonSpace,
    EntityReference,
    InformationRecord,
    Label,
    Representation,
    SourceKind,
    SpaceStats,
)
from .errors import ConfigError, ConflictError, ERError, InvalidInput, NotFound, RecordError, StageError
from .extraction import ExtractionStats, build_references, clean_record, reference_from_record
from .matching import match_space, scorer_for
from .profiles import assemble, assemble_merged, assemble_pairs, assemble_partitions
from .store import ReferenceStore, open_store

log = logging.getLogger(__name__)

STAGES = ("extraction", "comparison", "matching", "clustering", "assembly")


@dataclass
class RunReport:
    counts: dict = field(default_factory=dict)
    seconds: dict = field(default_factory=dict)
    store_version: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "counts": dict(self.counts),
            "seconds": {k: round(v, 6) for k, v in self.seconds.items()},
            "store_version": self.store_version,
        }


@dataclass
class BatchResult:
    profiles: list
    report: RunReport
    references: dict
    space: ComparisonSpace
    edges: list
    partition: Optional[ClusterPartition]
    store: Optional[ReferenceStore]


@contextmanager
def _stage(name: str, report: RunReport):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except (ERError, OSError, ValueError) as exc:
        raise StageError(name, exc) from exc
    finally:
        report.seconds[name] = report.seconds.get(name, 0.0) + time.perf_counter() - start


def build_space(cfg: RuntimeConfig, refs: dict) -> tuple:
    """Arrange, generate and filter. Returns ``(space, generated_count)``."""
    c = cfg.comparison
    ordered = [refs[k] for k in sorted(refs)]
    if c.strategy == "full":
        space = full_space(ordered)
    elif c.strategy == "block_key":
        space = pairs_from_blocks(block_by_key(ordered, c.key_attribute, c.key_transform, c.k))
    else:
        space = sorted_neighborhood(ordered, c.key_attribute, c.window)
    generated = len(space)
    if c.cross_source_only:
        space = filter_cross_source(space, refs)
    if cfg.filter is not None:
        space = filter_shared_tokens(space, cfg.filter.attribute, cfg.filter.min_shared, refs)
    return space, generated


def run_batch(cfg: RuntimeConfig, store: Optional[ReferenceStore] = None, workers: Optional[int] = None) -> BatchResult:
    if cfg.mode != "batch":
        raise ConfigError("run_batch needs mode = batch", "mode")
    workers = cfg.workers if workers is None else workers
    report = RunReport()
    counts = report.counts
    persist = set(cfg.store.persist)
    if store is None and persist:
        with _stage("store", report):
            store = open_store(cfg.store.backend, cfg.store.path)

    def save(kind, items):
        if store is not None and kind in persist:
            report.store_version = store.put_artifacts(kind, items).version

    with _stage("extraction", report):
        stats = ExtractionStats()
        seq = itertools.count()
        refs: dict = {}
        for desc in cfg.sources:
            chain = cfg.chain(desc.source_id)
            try:
                built = build_references(desc, chain.cleaning, chain.extractors, cfg.error_policy, stats, seq)
            except ERError as exc:
                raise StageError("extraction", exc) from exc
            for ref in built:
                if ref.ref_id in refs:
                    raise InvalidInput(f"duplicate ref_id {ref.ref_id!r} across sources")
                refs[ref.ref_id] = ref
        counts.update(stats.to_dict())
        counts["references_built"] = len(refs)
        save("references", (refs[k] for k in sorted(refs)))

    with _stage("comparison", report):
        space, generated = build_space(cfg, refs)
        counts["groups_generated"] = generated
        counts["groups_after_filter"] = len(space)
        counts["groups_removed"] = generated - len(space)
        counts["missing_block_keys"] = space.stats.missing_keys
        save("comparison_space", space.groups)

    with _stage("matching", report):
        edges = match_space(space, cfg.matcher, refs, workers) if cfg.matcher is not None else []
        by_label = Counter(Label(e.label).value for e in edges)
        counts["pairs_scored"] = len(edges)
        counts["edges"] = {lab.value: by_label.get(lab.value, 0) for lab in Label}
        save("edges", edges)

    partition = None
    with _stage("clustering", report):
        if cfg.clusterer == "connected_components":
            partition = connected_components(sorted(refs), edges)
        elif cfg.clusterer == "unique_mapping":
            partition = unique_mapping((refs[k] for k in sorted(refs)), edges)
        counts["clusters"] = len(partition.clusters) if partition is not None else 0
        if partition is not None:
            save("partition", partition.clusters)

    with _stage("assembly", report):
        profiles = assemble(cfg.representation, partition, edges, refs)
        counts["profiles"] = len(profiles)
        save("profiles", profiles)

    return BatchResult(profiles, report, refs, space, edges, partition, store)


class IncrementalResolver:
    """Long-lived resolution state; ingestions are serialized, reads are safe
    to call from other threads."""

    def __init__(self, cfg: RuntimeConfig, store: Optional[ReferenceStore] = None):
        if cfg.mode != "incremental":
            raise ConfigError("IncrementalResolver needs mode = incremental", "mode")
        self.cfg = cfg
        self.store = store if store is not None else open_store(cfg.store.backend, cfg.store.path)
        self._lock = threading.RLock()
        self.refs: dict = {}
        self.clusters = IncrementalClusterer()
        self._blocks: dict = {}
        self._match_edges: dict = {}
        self._score = scorer_for(cfg.matcher) if cfg.matcher is not None else None
        self.counts = Counter()
        self._seq = itertools.count()
        self._resume()

    # -- state ---------------------------------------------------------------

    def _resume(self) -> None:
        if not self.store.latest:
            return
        refs = self.store.get_artifacts("references")
        edges = self.store.get_artifacts("edges")
        for ref in refs:
            self._index(ref)
        self._absorb(edges)
        self.counts["references"] = len(refs)
        self.counts["resumed_from_version"] = self.store.latest
        self._seq = itertools.count(len(refs))

    def _block_key(self, ref: EntityReference):
        c = self.cfg.comparison
        if c.strategy == "full":
            return ""
        return block_keys_for(ref, c.key_attribute, c.key_transform, c.k)

    def _index(self, ref: EntityReference) -> None:
        self.refs[ref.ref_id] = ref
        self.clusters.add(ref.ref_id)
        key = self._block_key(ref)
        if key is not None:
            self._blocks.setdefault(key, []).append(ref.ref_id)

    def _absorb(self, edges) -> None:
        matches = [e for e in edges if e.label == Label.MATCH]
        for e in matches:
            self._match_edges.setdefault(e.a, []).append(e)
            self._match_edges.setdefault(e.b, []).append(e)
        self.clusters.merge(matches)

    # -- ingestion -----------------------------------------------------------

    def extract(self, record: InformationRecord) -> Optional[EntityReference]:
        desc = self.cfg.source(record.source_id)
        if desc.kind is SourceKind.REFERENCE_PASSTHROUGH:
            raise RecordError(record.source_id, record.record_ordinal, "passthrough sources do not accept raw records")
        chain = self.cfg.chain(record.source_id)
        stats = ExtractionStats()
        ref = reference_from_record(clean_record(record, chain.cleaning), chain.extractors, stats)
        self.counts["number_skips"] += stats.number_skips
        return ref

    def candidates(self, ref: EntityReference) -> list:
        key = self._block_key(ref)
        if key is None:
            self.counts["missing_block_keys"] += 1
            return []
        pairs = sorted(
            (other, ref.ref_id) if other < ref.ref_id else (ref.ref_id, other)
            for other in self._blocks.get(key, ())
            if other != ref.ref_id
        )
        self.counts["groups_generated"] += len(pairs)
        lookup = {m: ref if m == ref.ref_id else self.refs[m] for g in pairs for m in g}
        space = ComparisonSpace(pairs, SpaceStats(len(self.refs) + 1, len(pairs)))
        if self.cfg.comparison.cross_source_only:
            space = filter_cross_source(space, lookup)
        if self.cfg.filter is not None:
            space = filter_shared_tokens(space, self.cfg.filter.attribute, self.cfg.filter.min_shared, lookup)
        self.counts["groups_after_filter"] += len(space)
        return space.groups

    def ingest(self, record: InformationRecord) -> list:
        """Resolve one record; returns the profiles containing its reference."""
        with self._lock:
            record = InformationRecord(record.source_id, record.record_ordinal, record.payload, next(self._seq))
            ref = self.extract(record)
            self.counts["records_read"] += 1
            if ref is None:
                self.counts["dropped_empty"] += 1
                return []
            existing = self.refs.get(ref.ref_id)
            if existing is not None:
                if existing.to_json() != ref.to_json():
                    raise ConflictError(f"reference {ref.ref_id!r} already ingested with different content")
                return self._profiles_for(ref.ref_id)
            groups = self.candidates(ref)
            edges = []
            if self._score is not None:
                for a, b in groups:
                    x = ref if a == ref.ref_id else self.refs[a]
                    y = ref if b == ref.ref_id else self.refs[b]
                    edges.append(self._score(self.cfg.matcher, x, y))
            persist = set(self.cfg.store.persist)
            if "references" in persist:
                self.store.put_artifacts("references", [ref])
            if "comparison_space" in persist and groups:
                self.store.put_artifacts("comparison_space", groups)
            if "edges" in persist and edges:
                self.store.put_artifacts("edges", edges)
            self._index(ref)
            self._absorb(edges)
            for e in edges:
                self.counts[f"edges_{Label(e.label).value}"] += 1
            self.counts["references"] += 1
            if "partition" in persist:
                self.store.put_artifacts("partition", self.clusters.partition().clusters)
            if "profiles" in persist:
                self.store.put_artifacts("profiles", self.all_profiles())
            return self._profiles_for(ref.ref_id)

    # -- queries -------------------------------------------------------------

    def partition(self) -> ClusterPartition:
        with self._lock:
            return self.clusters.partition()

    def _profiles_for(self, ref_id: str) -> list:
        rep = self.cfg.representation
        if rep is Representation.PAIR:
            return assemble_pairs(self._match_edges.get(ref_id, ()), self.refs)
        part = ClusterPartition.from_clusters([self.clusters.cluster(ref_id)])
        if rep is Representation.MERGED:
            return assemble_merged(part, self.refs)
        return assemble_partitions(part, self.refs)

    def all_profiles(self) -> list:
        with self._lock:
            edges = {(e.a, e.b): e for es in self._match_edges.values() for e in es}
            return assemble(self.cfg.representation, self.clusters.partition(), [edges[k] for k in sorted(edges)], self.refs)

    def query_profiles(self, ref_id: Optional[str] = None, attr: Optional[str] = None, value: Optional[str] = None) -> list:
        """Profiles containing ``ref_id``, or containing a reference whose
        attribute ``attr`` equals ``value``."""
        with self._lock:
            if ref_id is not None:
                if ref_id not in self.refs:
                    raise NotFound(f"unknown ref_id {ref_id!r}")
                targets = [ref_id]
            elif attr is not None:
                targets = [rid for rid in sorted(self.refs) if _attr_equals(self.refs[rid].attributes.get(attr), value)]
            else:
                raise InvalidInput("query needs ref_id or attr/value")
            seen = {}
            for rid in targets:
                for p in self._profiles_for(rid):
                    seen.setdefault(p.profile_id, p)
            return [seen[k] for k in sorted(seen)]

    def report(self) -> dict:
        with self._lock:
            out = dict(self.counts)
            out["clusters"] = len(self.clusters.partition().clusters) if self.refs else 0
            out["store_version"] = self.store.latest
            return out


def _attr_equals(stored, value) -> bool:
    if stored is None or value is None:
        return False
    if isinstance(stored, str):
        return stored == value
    if isinstance(stored, float):
        try:
            return stored == float(value)
        except ValueError:
            return False
    return value in stored
