"""Runtime configuration: JSON file -> validated dataclasses.

The file is a JSON object with ``"version": 1`` and one section per field of
:class:`RuntimeConfig`. Unknown keys anywhere are rejected. Relative source
and store paths resolve against the config file's directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .comparison import KEY_TRANSFORMS
from .core import Representation, SourceDescriptor, SourceKind
from .errors import ConfigError
from .extraction import DEFAULT_NULL_MARKERS, CleaningRules, Extractor, check_chain
from .matching import MatcherConfig, rule_from_dict
from .store import KINDS

COMPARISON_STRATEGIES = ("full", "block_key", "sorted_neighborhood")
CLUSTERERS = ("connected_components", "unique_mapping")
DEFAULT_PERSIST = {
    "batch": ("references", "edges", "partition", "profiles"),
    "incremental": ("references", "edges", "partition"),
}


@dataclass(frozen=True)
class ExtractionChain:
    cleaning: CleaningRules = field(default_factory=CleaningRules)
    extractors: tuple = ()


@dataclass(frozen=True)
class ComparisonConfig:
    strategy: str = "full"
    key_attribute: Optional[str] = None
    key_transform: str = "exact"
    k: Optional[int] = None
    window: Optional[int] = None
    cross_source_only: bool = False


@dataclass(frozen=True)
class FilterConfig:
    attribute: str
    min_shared: int = 1


@dataclass(frozen=True)
class StoreConfig:
    backend: str = "memory"
    path: Optional[str] = None
    persist: tuple = DEFAULT_PERSIST["batch"]


@dataclass(frozen=True)
class RuntimeConfig:
    sources: tuple
    chains: dict
    comparison: ComparisonConfig = field(default_factory=ComparisonConfig)
    filter: Optional[FilterConfig] = None
    matcher: Optional[MatcherConfig] = None
    clusterer: Optional[str] = "connected_components"
    representation: Representation = Representation.PARTITION
    store: StoreConfig = field(default_factory=StoreConfig)
    mode: str = "batch"
    error_policy: str = "abort"
    workers: int = 1

    def __post_init__(self):
        validate(self)

    def source(self, source_id: str) -> SourceDescriptor:
        for s in self.sources:
            if s.source_id == source_id:
                return s
        raise ConfigError(f"undeclared source {source_id!r}", "sources")

    def chain(self, source_id: str) -> ExtractionChain:
        return self.chains.get(source_id, ExtractionChain())


def produced_attributes(cfg: RuntimeConfig) -> Optional[set]:
    """Attribute names the extractors can produce; ``None`` if a passthrough
    source makes the set unknowable."""
    if any(s.kind is SourceKind.REFERENCE_PASSTHROUGH for s in cfg.sources):
        return None
    return {o for ch in cfg.chains.values() for e in ch.extractors for o in e.outputs()}


def validate(cfg: RuntimeConfig) -> None:
    ids = [s.source_id for s in cfg.sources]
    if not ids:
        raise ConfigError("at least one source is required", "sources")
    if len(set(ids)) != len(ids):
        raise ConfigError("source_id values must be distinct", "sources")
    for s in cfg.sources:
        ch = cfg.chains.get(s.source_id)
        if s.kind is not SourceKind.REFERENCE_PASSTHROUGH and (ch is None or not ch.extractors):
            raise ConfigError(f"source {s.source_id!r} needs a non-empty extractor chain", f"extraction.chains.{s.source_id}")
        if ch is not None:
            check_chain(ch.extractors)
    for sid in cfg.chains:
        if sid not in ids:
            raise ConfigError(f"chain for undeclared source {sid!r}", f"extraction.chains.{sid}")

    if cfg.mode not in ("batch", "incremental"):
        raise ConfigError(f"mode must be batch or incremental, got {cfg.mode!r}", "mode")
    if cfg.error_policy not in ("abort", "skip"):
        raise ConfigError(f"unknown error policy {cfg.error_policy!r}", "extraction.error_policy")
    if isinstance(cfg.workers, bool) or not isinstance(cfg.workers, int) or cfg.workers < 1:
        raise ConfigError("workers must be a positive integer", "workers")

    c = cfg.comparison
    if c.strategy not in COMPARISON_STRATEGIES:
        raise ConfigError(f"unknown strategy {c.strategy!r}", "comparison.strategy")
    if c.strategy in ("block_key", "sorted_neighborhood") and not c.key_attribute:
        raise ConfigError(f"{c.strategy} needs key_attribute", "comparison.key_attribute")
    if c.strategy == "block_key":
        if c.key_transform not in KEY_TRANSFORMS:
            raise ConfigError(f"unknown key transform {c.key_transform!r}", "comparison.key_transform")
        if c.key_transform == "prefix_k" and (not isinstance(c.k, int) or isinstance(c.k, bool) or c.k < 1):
            raise ConfigError("prefix_k needs an integer k >= 1", "comparison.k")
    if c.strategy == "sorted_neighborhood":
        if not isinstance(c.window, int) or isinstance(c.window, bool) or c.window < 2:
            raise ConfigError(f"window must be an integer >= 2, got {c.window!r}", "comparison.window")
        if cfg.mode == "incremental":
            raise ConfigError("sorted_neighborhood windows are not stable under incremental ingestion", "comparison.strategy")
    if cfg.filter is not None:
        if isinstance(cfg.filter.min_shared, bool) or not isinstance(cfg.filter.min_shared, int) or cfg.filter.min_shared < 1:
            raise ConfigError("min_shared must be an integer >= 1", "filter.min_shared")

    if cfg.clusterer is not None and cfg.clusterer not in CLUSTERERS:
        raise ConfigError(f"unknown clusterer {cfg.clusterer!r}", "clusterer.strategy")
    if cfg.matcher is None and cfg.clusterer is None:
        raise ConfigError("at least one of matcher or clusterer is required", "matcher")
    rep = Representation(cfg.representation)
    if rep is Representation.PAIR and cfg.matcher is None:
        raise ConfigError("pair profiles need a matcher", "assembly.representation")
    if rep is not Representation.PAIR and cfg.clusterer is None:
        raise ConfigError(f"{rep.value} profiles need a clusterer", "assembly.representation")
    if cfg.mode == "incremental" and cfg.clusterer not in (None, "connected_components"):
        raise ConfigError("incremental mode supports the connected_components clusterer only", "clusterer.strategy")

    if cfg.store.backend not in ("memory", "file"):
        raise ConfigError(f"unknown backend {cfg.store.backend!r}", "store.backend")
    if cfg.store.backend == "file" and not cfg.store.path:
        raise ConfigError("file backend needs a path", "store.path")
    for kind in cfg.store.persist:
        if kind not in KINDS:
            raise ConfigError(f"unknown artifact kind {kind!r}", "store.persist")

    attrs = produced_attributes(cfg)
    if attrs is not None:
        used = []
        if c.key_attribute:
            used.append((c.key_attribute, "comparison.key_attribute"))
        if cfg.filter is not None:
            used.append((cfg.filter.attribute, "filter.attribute"))
        if cfg.matcher is not None:
            used.extend((r.attribute, f"matcher.rules[{i}].attribute") for i, r in enumerate(cfg.matcher.rules))
        for name, where in used:
            if name not in attrs:
                raise ConfigError(f"attribute {name!r} is not produced by any extractor", where)


# -- JSON loading -----------------------------------------------------------

def _section(d, name, allowed, required=()):
    if not isinstance(d, dict):
        raise ConfigError("must be an object", name)
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", name)
    for key in required:
        if key not in d:
            raise ConfigError(f"missing required key {key!r}", name)
    return d


def _resolve(base: Optional[Path], location: str) -> str:
    p = Path(location)
    if base is not None and not p.is_absolute():
        p = base / p
    return str(p)


def config_from_dict(raw: dict, base_dir=None) -> RuntimeConfig:
    base = Path(base_dir) if base_dir is not None else None
    top = _section(
        raw,
        "config",
        {"version", "mode", "sources", "extraction", "comparison", "filter", "matcher", "clusterer", "assembly", "store", "workers"},
        ("version", "sources"),
    )
    if top["version"] != 1:
        raise ConfigError(f"unsupported config version {top['version']!r}", "version")

    try:
        sources = []
        for i, s in enumerate(top["sources"]):
            _section(s, f"sources[{i}]", {"source_id", "kind", "location", "field_names"}, ("source_id", "kind", "location"))
            sources.append(SourceDescriptor(s["source_id"], s["kind"], _resolve(base, s["location"]), s.get("field_names")))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "sources") from None

    ext = _section(top.get("extraction", {}), "extraction", {"error_policy", "chains"})
    chains = {}
    for sid, ch in ext.get("chains", {}).items():
        where = f"extraction.chains.{sid}"
        _section(ch, where, {"cleaning", "extractors"})
        clean = _section(
            ch.get("cleaning", {}),
            f"{where}.cleaning",
            {"trim_whitespace", "lowercase", "collapse_internal_whitespace", "null_markers"},
        )
        rules = CleaningRules(
            clean.get("trim_whitespace", True),
            clean.get("lowercase", False),
            clean.get("collapse_internal_whitespace", False),
            frozenset(clean.get("null_markers", DEFAULT_NULL_MARKERS)),
        )
        try:
            extractors = tuple(Extractor.from_dict(e) for e in ch.get("extractors", ()))
        except TypeError as exc:
            raise ConfigError(str(exc), f"{where}.extractors") from None
        chains[sid] = ExtractionChain(rules, extractors)

    comp = _section(
        top.get("comparison", {}),
        "comparison",
        {"strategy", "key_attribute", "key_transform", "k", "window", "cross_source_only"},
    )
    comparison = ComparisonConfig(**comp)

    filt = None
    if top.get("filter") is not None:
        f = _section(top["filter"], "filter", {"attribute", "min_shared"}, ("attribute",))
        filt = FilterConfig(**f)

    matcher = None
    if top.get("matcher") is not None:
        m = _section(top["matcher"], "matcher", {"kind", "rules", "tau_match", "tau_possible"}, ("kind", "rules", "tau_match"))
        rules = tuple(rule_from_dict(r, f"matcher.rules[{i}]") for i, r in enumerate(m["rules"]))
        try:
            matcher = MatcherConfig(m["kind"], rules, float(m["tau_match"]), float(m.get("tau_possible", m["tau_match"])))
        except TypeError as exc:
            raise ConfigError(str(exc), "matcher") from None

    clusterer = "connected_components" if "clusterer" not in top else None
    if top.get("clusterer") is not None:
        cl = _section(top["clusterer"], "clusterer", {"strategy"}, ("strategy",))
        clusterer = cl["strategy"]

    asm = _section(top.get("assembly", {}), "assembly", {"representation"})
    try:
        representation = Representation(asm.get("representation", "partition"))
    except ValueError:
        raise ConfigError(f"unknown representation {asm.get('representation')!r}", "assembly.representation") from None

    st = _section(top.get("store", {}), "store", {"backend", "path", "persist"})
    store = StoreConfig(
        st.get("backend", "memory"),
        _resolve(base, st["path"]) if st.get("path") else None,
        tuple(st.get("persist", DEFAULT_PERSIST.get(top.get("mode", "batch"), ()))),
    )

    return RuntimeConfig(
        sources=tuple(sources),
        chains=chains,
        comparison=comparison,
        filter=filt,
        matcher=matcher,
        clusterer=clusterer,
        representation=representation,
        store=store,
        mode=top.get("mode", "batch"),
        error_policy=ext.get("error_policy", "abort"),
        workers=top.get("workers", 1),
    )


def load_config(path) -> RuntimeConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", "config") from None
    return config_from_dict(raw, path.parent)
