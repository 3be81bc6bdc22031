"""Comparison space generation: arrange candidates, generate pairs, filter.

All generators return a :class:`~erflow.core.ComparisonSpace` whose groups are
sorted pairs ``(a, b)`` with ``a < b``, globally sorted and duplicate free,
so the output is independent of how blocks were processed.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .core import ComparisonSpace, EntityReference, SpaceStats
from .errors import ConfigError

KEY_TRANSFORMS = ("exact", "prefix_k", "soundex_like")

_SOUNDEX_CODES = {}
for _letters, _digit in (("bfpv", "1"), ("cgjkqsxz", "2"), ("dt", "3"), ("l", "4"), ("mn", "5"), ("r", "6")):
    for _c in _letters:
        _SOUNDEX_CODES[_c] = _digit


def soundex(text: str) -> Optional[str]:
    """American Soundex code (letter + 3 digits), or ``None`` if no letters.

    h and w do not separate letters with the same code; vowels do.
    """
    letters = [c for c in text.lower() if "a" <= c <= "z"]
    if not letters:
        return None
    first = letters[0]
    code = [first.upper()]
    prev = _SOUNDEX_CODES.get(first, "")
    for c in letters[1:]:
        digit = _SOUNDEX_CODES.get(c)
        if digit is None:
            if c not in "hw":
                prev = ""
            continue
        if digit != prev:
            code.append(digit)
            if len(code) == 4:
                break
        prev = digit
    return "".join(code).ljust(4, "0")


@dataclass
class BlockTable:
    """Block key -> member ref_ids (in input order)."""

    blocks: dict = field(default_factory=dict)
    missing: int = 0
    total_references: int = 0


def _block_key(value, transform: str, k: Optional[int], attribute: str) -> Optional[str]:
    if transform == "exact":
        if isinstance(value, frozenset):
            raise ConfigError("exact blocking needs a text or number attribute", "comparison.key_attribute")
        return value if isinstance(value, str) else repr(value)
    if not isinstance(value, str):
        raise ConfigError(f"{transform} blocking needs a text attribute, {attribute!r} is not text", "comparison.key_attribute")
    if transform == "prefix_k":
        return value[:k] if value else None
    return soundex(value)


def block_by_key(
    refs: Iterable[EntityReference],
    key_attribute: str,
    key_transform: str = "exact",
    k: Optional[int] = None,
) -> BlockTable:
    if key_transform not in KEY_TRANSFORMS:
        raise ConfigError(f"unknown key transform {key_transform!r}", "comparison.key_transform")
    if key_transform == "prefix_k" and (not isinstance(k, int) or k < 1):
        raise ConfigError("prefix_k needs an integer k >= 1", "comparison.k")
    table = BlockTable()
    for ref in refs:
        table.total_references += 1
        value = ref.attributes.get(key_attribute)
        key = None if value is None else _block_key(value, key_transform, k, key_attribute)
        if key is None:
            table.missing += 1
            continue
        table.blocks.setdefault(key, []).append(ref.ref_id)
    return table


def block_keys_for(ref: EntityReference, key_attribute: str, key_transform: str = "exact", k: Optional[int] = None) -> Optional[str]:
    value = ref.attributes.get(key_attribute)
    return None if value is None else _block_key(value, key_transform, k, key_attribute)


def full_space(refs: Sequence[EntityReference]) -> ComparisonSpace:
    ids = sorted(r.ref_id for r in refs)
    if len(set(ids)) != len(ids):
        raise ConfigError("ref_ids must be distinct", "references")
    return ComparisonSpace(list(itertools.combinations(ids, 2)), SpaceStats(len(ids), len(ids) * (len(ids) - 1) // 2))


def pairs_from_blocks(blocks, total_references: Optional[int] = None) -> ComparisonSpace:
    """All within-block pairs, deduplicated across blocks, globally sorted.

    Pairs are emitted directly in canonical order: references are walked in
    sorted order and each is paired with its larger block-mates.
    """
    missing = 0
    if isinstance(blocks, BlockTable):
        missing = blocks.missing
        if total_references is None:
            total_references = blocks.total_references
        blocks = blocks.blocks
    sorted_blocks = [sorted(set(members)) for members in blocks.values() if len(set(members)) >= 2]
    # position of each ref inside every block it belongs to
    where: dict = {}
    for bi, members in enumerate(sorted_blocks):
        for pos, ref_id in enumerate(members):
            where.setdefault(ref_id, []).append((bi, pos))
    groups: list = []
    extend = groups.extend
    repeat = itertools.repeat
    for a in sorted(where):
        locs = where[a]
        if len(locs) == 1:
            bi, pos = locs[0]
            tail = sorted_blocks[bi][pos + 1:]
        else:
            tail = sorted(set(itertools.chain.from_iterable(sorted_blocks[bi][pos + 1:] for bi, pos in locs)))
        extend(zip(repeat(a, len(tail)), tail))
    if total_references is None:
        total_references = len(where)
    return ComparisonSpace(groups, SpaceStats(total_references, len(groups), missing_keys=missing))


def sorted_neighborhood(refs: Sequence[EntityReference], key_attribute: str, window: int) -> ComparisonSpace:
    """Sort by the text key (absent keys last, ties by ref_id); pair each ref
    with the next ``window - 1`` refs."""
    if isinstance(window, bool) or not isinstance(window, int) or window < 2:
        raise ConfigError(f"window must be an integer >= 2, got {window!r}", "comparison.window")

    def sort_key(ref):
        value = ref.attributes.get(key_attribute)
        if value is None:
            return (1, "", ref.ref_id)
        if not isinstance(value, str):
            raise ConfigError(f"sorted_neighborhood needs a text key, {key_attribute!r} is not text", "comparison.key_attribute")
        return (0, value, ref.ref_id)

    ordered = [r.ref_id for r in sorted(refs, key=sort_key)]
    missing = sum(1 for r in refs if key_attribute not in r.attributes)
    pairs = set()
    for i, a in enumerate(ordered):
        for b in ordered[i + 1:i + window]:
            pairs.add((a, b) if a < b else (b, a))
    groups = sorted(pairs)
    return ComparisonSpace(groups, SpaceStats(len(ordered), len(groups), missing_keys=missing))


def filter_shared_tokens(
    space: ComparisonSpace,
    attribute: str,
    min_shared: int,
    refs: Mapping[str, EntityReference],
) -> ComparisonSpace:
    """Keep pairs sharing at least ``min_shared`` tokens of ``attribute``.

    Pairs where either side lacks the attribute are kept. The number of
    removed pairs is added to ``stats.filtered_out``.
    """
    if isinstance(min_shared, bool) or not isinstance(min_shared, int) or min_shared < 1:
        raise ConfigError("min_shared must be an integer >= 1", "filter.min_shared")
    tokens = {}
    for ref_id, ref in refs.items():
        value = ref.attributes.get(attribute)
        if value is not None:
            if not isinstance(value, frozenset):
                raise ConfigError(f"filter attribute {attribute!r} must be a token_set", "filter.attribute")
            tokens[ref_id] = value
    get = tokens.get
    kept = []
    append = kept.append
    for group in space.groups:
        ta = get(group[0])
        tb = get(group[1]) if ta is not None else None
        if ta is None or tb is None or len(ta & tb) >= min_shared:
            append(group)
    removed = len(space.groups) - len(kept)
    st = space.stats
    return ComparisonSpace(kept, SpaceStats(st.total_references, len(kept), st.missing_keys, st.filtered_out + removed))


def filter_cross_source(space: ComparisonSpace, refs: Mapping[str, EntityReference]) -> ComparisonSpace:
    """Drop pairs whose members come from the same source (linkage-only runs)."""
    kept = [g for g in space.groups if refs[g[0]].source_id != refs[g[1]].source_id]
    st = space.stats
    removed = len(space.groups) - len(kept)
    return ComparisonSpace(kept, SpaceStats(st.total_references, len(kept), st.missing_keys, st.filtered_out + removed))
