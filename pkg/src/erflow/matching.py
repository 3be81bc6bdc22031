"""Pairwise matchers: weighted rules and Fellegi-Sunter log-likelihood weights."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .core import ComparisonSpace, EntityReference, Label, MatchEdge
from .errors import ConfigError, InvalidArgument, InvalidInput, UnsupportedGroup
from .similarity import SIMILARITY_KINDS, similarity

log = logging.getLogger(__name__)

MATCHER_KINDS = ("rule_weighted", "fellegi_sunter")


@dataclass(frozen=True)
class FieldRule:
    attribute: str
    similarity: str = "exact"
    weight: float = 1.0
    m: Optional[float] = None
    u: Optional[float] = None
    agreement_threshold: Optional[float] = None

    def agreement_weight(self) -> float:
        return math.log2(self.m / self.u)

    def disagreement_weight(self) -> float:
        return math.log2((1.0 - self.m) / (1.0 - self.u))


@dataclass(frozen=True)
class MatcherConfig:
    kind: str
    rules: tuple
    tau_match: float
    tau_possible: float

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        self.validate()

    def validate(self) -> None:
        if self.kind not in MATCHER_KINDS:
            raise ConfigError(f"unknown matcher kind {self.kind!r}", "matcher.kind")
        if not self.rules:
            raise ConfigError("at least one rule is required", "matcher.rules")
        for i, r in enumerate(self.rules):
            where = f"matcher.rules[{i}]"
            if r.similarity not in SIMILARITY_KINDS:
                raise ConfigError(f"unknown similarity {r.similarity!r}", f"{where}.similarity")
            if self.kind == "rule_weighted":
                if not r.weight > 0:
                    raise ConfigError("weight must be > 0", f"{where}.weight")
            else:
                for name in ("m", "u"):
                    v = getattr(r, name)
                    if v is None or not 0.0 < v < 1.0:
                        raise ConfigError(f"{name} must lie in (0, 1), got {v!r}", f"{where}.{name}")
                t = r.agreement_threshold
                if t is None or not 0.0 <= t <= 1.0:
                    raise ConfigError(f"agreement_threshold must lie in [0, 1], got {t!r}", f"{where}.agreement_threshold")
                if r.m <= r.u:
                    log.warning("rule on %r has m <= u; the field is not informative", r.attribute)
        if self.tau_possible > self.tau_match:
            raise ConfigError(
                f"tau_possible ({self.tau_possible}) must not exceed tau_match ({self.tau_match})", "matcher.tau_possible"
            )
        if self.kind == "rule_weighted":
            if self.tau_possible < 0.0:
                raise ConfigError("tau_possible must be >= 0", "matcher.tau_possible")
            if self.tau_match > 1.0:
                # scores never exceed 1, so this disables the match label
                log.warning("tau_match %s > 1: no pair can be labeled match", self.tau_match)

    def label_for(self, value: float) -> Label:
        if value >= self.tau_match:
            return Label.MATCH
        if value >= self.tau_possible:
            return Label.POSSIBLE
        return Label.NON_MATCH

    def weight_bounds(self) -> tuple:
        """Total Fellegi-Sunter weight with every field disagreeing / agreeing."""
        w_min = sum(r.disagreement_weight() for r in self.rules)
        w_max = sum(r.agreement_weight() for r in self.rules)
        return w_min, w_max


def _endpoints(x: EntityReference, y: EntityReference) -> tuple:
    if x.ref_id == y.ref_id:
        raise InvalidArgument(f"cannot score {x.ref_id!r} against itself")
    return (x.ref_id, y.ref_id) if x.ref_id < y.ref_id else (y.ref_id, x.ref_id)


def score_rule_weighted(cfg: MatcherConfig, x: EntityReference, y: EntityReference) -> MatchEdge:
    if cfg.kind != "rule_weighted":
        raise InvalidArgument("score_rule_weighted needs a rule_weighted config")
    a, b = _endpoints(x, y)
    xa, ya = x.attributes, y.attributes
    num = den = 0.0
    field_scores = {}
    for rule in cfg.rules:
        vx = xa.get(rule.attribute)
        vy = ya.get(rule.attribute)
        if vx is None or vy is None:
            continue
        sim = similarity(rule.similarity, vx, vy)
        field_scores[rule.attribute] = sim
        num += rule.weight * sim
        den += rule.weight
    if den == 0.0:
        return MatchEdge(a, b, 0.0, Label.NON_MATCH, field_scores)
    score = min(1.0, max(0.0, num / den))
    return MatchEdge(a, b, score, cfg.label_for(score), field_scores)


def fellegi_sunter_weight(cfg: MatcherConfig, x: EntityReference, y: EntityReference) -> tuple:
    """Return ``(W, field_scores)``: total log2 match weight and per-field similarities."""
    xa, ya = x.attributes, y.attributes
    total = 0.0
    field_scores = {}
    for rule in cfg.rules:
        vx = xa.get(rule.attribute)
        vy = ya.get(rule.attribute)
        if vx is None or vy is None:
            continue
        sim = similarity(rule.similarity, vx, vy)
        field_scores[rule.attribute] = sim
        if sim >= rule.agreement_threshold:
            total += rule.agreement_weight()
        else:
            total += rule.disagreement_weight()
    return total, field_scores


def score_fellegi_sunter(cfg: MatcherConfig, x: EntityReference, y: EntityReference) -> MatchEdge:
    if cfg.kind != "fellegi_sunter":
        raise InvalidArgument("score_fellegi_sunter needs a fellegi_sunter config")
    a, b = _endpoints(x, y)
    w, field_scores = fellegi_sunter_weight(cfg, x, y)
    w_min, w_max = cfg.weight_bounds()
    # every field uninformative: no evidence either way
    score = 0.0 if w_max == w_min else min(1.0, max(0.0, (w - w_min) / (w_max - w_min)))
    return MatchEdge(a, b, score, cfg.label_for(w), field_scores)


def scorer_for(cfg: MatcherConfig):
    return score_rule_weighted if cfg.kind == "rule_weighted" else score_fellegi_sunter


def score_pairs(cfg: MatcherConfig, groups: Sequence[tuple], refs: Mapping[str, EntityReference]) -> list:
    score = scorer_for(cfg)
    out = []
    for group in groups:
        if len(group) != 2:
            raise UnsupportedGroup(group)
        try:
            x, y = refs[group[0]], refs[group[1]]
        except KeyError as exc:
            raise InvalidInput(f"group {list(group)} names unknown reference {exc.args[0]!r}") from None
        out.append(score(cfg, x, y))
    return out


def match_space(
    space: ComparisonSpace,
    cfg: MatcherConfig,
    refs: Mapping[str, EntityReference],
    workers: int = 1,
    chunk_size: int = 4096,
) -> list:
    """Score every pair of ``space``; one edge per pair in canonical group order.

    With ``workers > 1`` chunks are scored on a thread pool; results are
    concatenated in chunk order so the output does not depend on scheduling.
    """
    if not isinstance(refs, Mapping):
        refs = {r.ref_id: r for r in refs}
    groups = space.groups
    for group in groups:
        if len(group) != 2:
            raise UnsupportedGroup(group)
    if workers <= 1 or len(groups) <= chunk_size:
        return score_pairs(cfg, groups, refs)
    chunks = [groups[i:i + chunk_size] for i in range(0, len(groups), chunk_size)]
    edges = []
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(lambda c: score_pairs(cfg, c, refs), chunks):
            edges.extend(part)
    return edges


def rule_from_dict(d: Mapping, where: str = "matcher.rules") -> FieldRule:
    allowed = {"attribute", "similarity", "weight", "m", "u", "agreement_threshold"}
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", where)
    if "attribute" not in d:
        raise ConfigError("missing 'attribute'", where)
    return FieldRule(**d)
