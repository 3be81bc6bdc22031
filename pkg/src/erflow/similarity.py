"""String, set and numeric similarity measures, all symmetric and in [0, 1]."""
from __future__ import annotations

from .errors import InvalidArgument

NUMERIC_EPS = 1e-9
WINKLER_PREFIX_SCALE = 0.1
WINKLER_MAX_PREFIX = 4
WINKLER_BOOST_THRESHOLD = 0.7


def levenshtein_distance(s: str, t: str) -> int:
    if s == t:
        return 0
    if len(s) < len(t):
        s, t = t, s
    if not t:
        return len(s)
    prev = list(range(len(t) + 1))
    for i, cs in enumerate(s, 1):
        cur = [i]
        for j, ct in enumerate(t, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (cs != ct)))
        prev = cur
    return prev[-1]


def levenshtein_norm(s: str, t: str) -> float:
    longest = max(len(s), len(t))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(s, t) / longest


def jaro(s: str, t: str) -> float:
    if s == t:
        return 1.0
    ls, lt = len(s), len(t)
    if not ls or not lt:
        return 0.0
    window = max(max(ls, lt) // 2 - 1, 0)
    t_used = [False] * lt
    s_matched = []
    for i, c in enumerate(s):
        lo, hi = max(0, i - window), min(lt, i + window + 1)
        for j in range(lo, hi):
            if not t_used[j] and t[j] == c:
                t_used[j] = True
                s_matched.append(c)
                break
    m = len(s_matched)
    if not m:
        return 0.0
    t_matched = [t[j] for j in range(lt) if t_used[j]]
    half_transpositions = sum(a != b for a, b in zip(s_matched, t_matched))
    return (m / ls + m / lt + (m - half_transpositions / 2) / m) / 3


def jaro_winkler(s: str, t: str) -> float:
    """Jaro similarity with Winkler's common-prefix boost.

    The boost (scale 0.1, prefix up to 4 chars) is applied only when the
    Jaro similarity exceeds 0.7.
    """
    j = jaro(s, t)
    if j <= WINKLER_BOOST_THRESHOLD:
        return j
    prefix = 0
    for a, b in zip(s[:WINKLER_MAX_PREFIX], t[:WINKLER_MAX_PREFIX]):
        if a != b:
            break
        prefix += 1
    return j + prefix * WINKLER_PREFIX_SCALE * (1.0 - j)


def jaccard_tokens(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def numeric_closeness(a: float, b: float) -> float:
    if a == b:
        return 1.0
    sim = 1.0 - abs(a - b) / max(abs(a), abs(b), NUMERIC_EPS)
    return min(1.0, max(0.0, sim))


def exact(a, b) -> float:
    return 1.0 if a == b else 0.0


_TEXT_MEASURES = {"levenshtein_norm": levenshtein_norm, "jaro_winkler": jaro_winkler}
SIMILARITY_KINDS = ("exact", "levenshtein_norm", "jaro_winkler", "jaccard_tokens", "numeric_closeness")


def similarity(kind: str, a, b) -> float:
    """Dispatch on ``kind`` after checking the operands' types."""
    if kind in _TEXT_MEASURES:
        if not (isinstance(a, str) and isinstance(b, str)):
            raise InvalidArgument(f"{kind} needs text operands")
        return _TEXT_MEASURES[kind](a, b)
    if kind == "jaccard_tokens":
        if not (isinstance(a, frozenset) and isinstance(b, frozenset)):
            raise InvalidArgument("jaccard_tokens needs token_set operands")
        return jaccard_tokens(a, b)
    if kind == "numeric_closeness":
        if not (isinstance(a, float) and isinstance(b, float)):
            raise InvalidArgument("numeric_closeness needs number operands")
        return numeric_closeness(a, b)
    if kind == "exact":
        if type(a) is not type(b):
            raise InvalidArgument("exact needs operands of the same type")
        return exact(a, b)
    raise InvalidArgument(f"unknown similarity {kind!r}")
