"""Clustering engines over match-labeled edges."""
from __future__ import annotations

from typing import Iterable, Mapping, Optional

from .core import ClusterPartition, EntityReference, Label, MatchEdge
from .errors import ConfigError, InvalidInput


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, items: Iterable[str] = ()):
        self.parent: dict = {}
        self.size: dict = {}
        for item in items:
            self.add(item)

    def __contains__(self, item) -> bool:
        return item in self.parent

    def __len__(self) -> int:
        return len(self.parent)

    def add(self, item: str) -> None:
        if item not in self.parent:
            self.parent[item] = item
            self.size[item] = 1

    def find(self, item: str) -> str:
        parent = self.parent
        root = item
        while parent[root] != root:
            root = parent[root]
        while parent[item] != root:
            parent[item], item = root, parent[item]
        return root

    def union(self, x: str, y: str) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return True

    def groups(self) -> list:
        out: dict = {}
        for item in self.parent:
            out.setdefault(self.find(item), []).append(item)
        return list(out.values())

    def partition(self) -> ClusterPartition:
        return ClusterPartition.from_clusters(self.groups(), self.parent.keys())

    def copy(self) -> "UnionFind":
        uf = UnionFind()
        uf.parent = dict(self.parent)
        uf.size = dict(self.size)
        return uf


def _ref_ids(refs) -> list:
    return [r.ref_id if isinstance(r, EntityReference) else r for r in refs]


def _match_edges(edges: Iterable[MatchEdge]):
    return (e for e in edges if e.label == Label.MATCH)


def connected_components(refs, edges: Iterable[MatchEdge]) -> ClusterPartition:
    """Refs share a cluster iff a path of match-labeled edges joins them."""
    uf = UnionFind(_ref_ids(refs))
    incremental_merge(uf, edges)
    return uf.partition()


def incremental_merge(state: UnionFind, new_edges: Iterable[MatchEdge]) -> ClusterPartition:
    """Union the endpoints of match-labeled ``new_edges`` into ``state`` (in place)."""
    for e in _match_edges(new_edges):
        if e.a not in state or e.b not in state:
            missing = e.a if e.a not in state else e.b
            raise InvalidInput(f"edge ({e.a}, {e.b}) names unknown reference {missing!r}")
        state.union(e.a, e.b)
    return state.partition()


def unique_mapping(refs: Iterable[EntityReference], edges: Iterable[MatchEdge]) -> ClusterPartition:
    """Greedy one-to-one linkage for two-source record linkage.

    Match-labeled edges are taken by descending score (ties by ``a``, then
    ``b``); an edge is accepted when neither endpoint is linked yet.
    """
    refs = list(refs)
    source_of = {r.ref_id: r.source_id for r in refs}
    candidates = []
    for e in _match_edges(edges):
        if e.a not in source_of or e.b not in source_of:
            missing = e.a if e.a not in source_of else e.b
            raise InvalidInput(f"edge ({e.a}, {e.b}) names unknown reference {missing!r}")
        if source_of[e.a] == source_of[e.b]:
            raise ConfigError(
                f"unique_mapping needs cross-source edges, ({e.a}, {e.b}) are both from {source_of[e.a]!r}",
                "clusterer.strategy",
            )
        candidates.append(e)
    candidates.sort(key=lambda e: (-e.score, e.a, e.b))
    linked: dict = {}
    for e in candidates:
        if e.a not in linked and e.b not in linked:
            linked[e.a] = e.b
            linked[e.b] = e.a
    clusters = []
    for ref_id in source_of:
        partner = linked.get(ref_id)
        if partner is None:
            clusters.append((ref_id,))
        elif ref_id < partner:
            clusters.append((ref_id, partner))
    return ClusterPartition.from_clusters(clusters, source_of.keys())


class IncrementalClusterer:
    """Single-writer union-find state for incremental resolution."""

    def __init__(self):
        self.state = UnionFind()
        self._members: dict = {}

    def add(self, ref_id: str) -> None:
        if ref_id not in self.state:
            self.state.add(ref_id)
            self._members[ref_id] = [ref_id]

    def merge(self, edges: Iterable[MatchEdge]) -> None:
        for e in _match_edges(edges):
            if e.a not in self.state or e.b not in self.state:
                missing = e.a if e.a not in self.state else e.b
                raise InvalidInput(f"edge ({e.a}, {e.b}) names unknown reference {missing!r}")
            ra, rb = self.state.find(e.a), self.state.find(e.b)
            if ra == rb:
                continue
            self.state.union(ra, rb)
            root = self.state.find(ra)
            other = rb if root == ra else ra
            self._members[root].extend(self._members.pop(other))

    def cluster(self, ref_id: str) -> tuple:
        """Sorted members of the cluster containing ``ref_id``."""
        return tuple(sorted(self._members[self.state.find(ref_id)]))

    def partition(self) -> ClusterPartition:
        return ClusterPartition.from_clusters(self._members.values(), self.state.parent.keys())

    def __contains__(self, ref_id) -> bool:
        return ref_id in self.state
