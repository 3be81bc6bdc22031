"""Quality metrics against ground truth: pairwise, ARI, and blocking."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional

from .core import ClusterPartition, ComparisonSpace, EntityProfile, GroundTruth, Representation
from .errors import InvalidArgument, InvalidInput, LoadError


def _comb2(k: int) -> int:
    return k * (k - 1) // 2


def _norm_pairs(pairs: Iterable) -> set:
    out = set()
    for p in pairs:
        a, b = p
        if a == b:
            continue
        out.add((a, b) if a < b else (b, a))
    return out


@dataclass(frozen=True)
class PairwiseMetrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    unknown: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pairwise_metrics(predicted: Iterable, truth: GroundTruth, unknown_policy: str = "ignore") -> PairwiseMetrics:
    """Precision/recall/F1 of predicted match pairs.

    Empty denominators count as perfect (p = 1 with no predictions, r = 1
    with no true pairs). Predicted pairs naming references outside a
    cluster-form truth are counted in ``unknown`` and, under the ``"fp"``
    policy, also as false positives.
    """
    if unknown_policy not in ("ignore", "fp"):
        raise InvalidArgument(f"unknown_policy must be 'ignore' or 'fp', got {unknown_policy!r}")
    predicted = _norm_pairs(predicted)
    true_pairs = truth.pairs()
    universe = truth.universe
    unknown = 0
    if universe is not None:
        known = {p for p in predicted if p[0] in universe and p[1] in universe}
        unknown = len(predicted) - len(known)
        predicted = known
    tp = len(predicted & true_pairs)
    fp = len(predicted) - tp + (unknown if unknown_policy == "fp" else 0)
    fn = len(true_pairs) - tp
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PairwiseMetrics(precision, recall, f1, tp, fp, fn, unknown)


def adjusted_rand_index(a: ClusterPartition, b: ClusterPartition) -> float:
    """Chance-corrected Rand index from the contingency table of two partitions."""
    if a.universe != b.universe:
        raise InvalidInput("partitions cover different reference sets")
    n = len(a.universe)
    label_b = b.cluster_of()
    cells = Counter()
    for ci, cluster in enumerate(a.clusters):
        for m in cluster:
            cells[ci, label_b[m]] += 1
    index = sum(_comb2(v) for v in cells.values())
    sum_a = sum(_comb2(len(c)) for c in a.clusters)
    sum_b = sum(_comb2(len(c)) for c in b.clusters)
    total = _comb2(n)
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        # both partitions trivial (all singletons or one cluster)
        return 1.0 if index == max_index else 0.0
    return (index - expected) / (max_index - expected)


@dataclass(frozen=True)
class BlockingMetrics:
    reduction_ratio: float
    pair_completeness: float
    candidate_pairs: int
    full_pairs: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def blocking_metrics(space: ComparisonSpace, truth: GroundTruth, n: int) -> BlockingMetrics:
    full = _comb2(n)
    pairs = set(g for g in space.groups if len(g) == 2)
    rr = 1.0 - len(pairs) / full if full else 0.0
    true_pairs = truth.pairs()
    pc = len(pairs & true_pairs) / len(true_pairs) if true_pairs else 1.0
    return BlockingMetrics(rr, pc, len(pairs), full)


# -- helpers for files and profiles ----------------------------------------

def load_ground_truth(path) -> GroundTruth:
    """Parse truth JSONL: all ``{"pair": [a, b]}`` lines or all ``{"ref", "label"}`` lines."""
    pairs = []
    labels: dict = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LoadError(str(path), line_no, f"invalid JSON: {exc.msg}") from None
            if isinstance(obj, dict) and set(obj) == {"pair"}:
                p = obj["pair"]
                if not (isinstance(p, list) and len(p) == 2 and all(isinstance(x, str) for x in p) and p[0] != p[1]):
                    raise LoadError(str(path), line_no, "pair must be two distinct ref_id strings")
                pairs.append(tuple(p))
            elif isinstance(obj, dict) and set(obj) == {"ref", "label"}:
                if not isinstance(obj["ref"], str) or not isinstance(obj["label"], str):
                    raise LoadError(str(path), line_no, "ref and label must be strings")
                if obj["ref"] in labels:
                    raise LoadError(str(path), line_no, f"duplicate ref {obj['ref']!r}")
                labels[obj["ref"]] = obj["label"]
            else:
                raise LoadError(str(path), line_no, 'expected {"pair": [a, b]} or {"ref": id, "label": str}')
            if pairs and labels:
                raise LoadError(str(path), line_no, "pair lines and label lines cannot be mixed")
    if labels:
        return GroundTruth(labels=labels)
    return GroundTruth(match_pairs=frozenset(pairs))


def pairs_from_profiles(profiles: Iterable[EntityProfile]) -> set:
    """Predicted match pairs: every pair of members within a profile."""
    out = set()
    for p in profiles:
        members = sorted(p.member_ids)
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                out.add((a, b))
    return out


def partition_from_profiles(profiles: Iterable[EntityProfile]) -> ClusterPartition:
    profiles = list(profiles)
    if any(p.representation is Representation.PAIR for p in profiles):
        raise InvalidInput("pair profiles do not form a partition")
    return ClusterPartition.from_clusters(p.member_ids for p in profiles)


def metric_family(representation) -> list:
    """Which metric families are meaningful for profiles of this representation."""
    rep = Representation(representation)
    if rep is Representation.PAIR:
        return ["pairwise"]
    return ["pairwise", "cluster"]
