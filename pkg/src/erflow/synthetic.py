"""Seeded synthetic person datasets with planted duplicates.

Used by the test suite and the scripts in ``scripts/``.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

FIRST = (
    "james mary john patricia robert jennifer michael linda william elizabeth david barbara richard susan "
    "joseph jessica thomas sarah charles karen christopher nancy daniel lisa matthew betty anthony margaret "
    "mark sandra donald ashley steven kimberly paul emily andrew donna joshua michelle kenneth carol kevin "
    "amanda brian dorothy george melissa timothy deborah ronald stephanie edward rebecca jason sharon jeffrey "
    "laura ryan cynthia jacob kathleen gary amy nicholas angela eric shirley jonathan anna stephen brenda"
).split()
LAST = (
    "smith johnson williams brown jones garcia miller davis rodriguez martinez hernandez lopez gonzalez "
    "wilson anderson thomas taylor moore jackson martin lee perez thompson white harris sanchez clark "
    "ramirez lewis robinson walker young allen king wright scott torres nguyen hill flores green adams "
    "nelson baker hall rivera campbell mitchell carter roberts gomez phillips evans turner diaz parker "
    "cruz edwards collins reyes stewart morris morales murphy cook rogers gutierrez ortiz morgan cooper"
).split()
CITIES = (
    "boston chicago denver austin seattle portland atlanta miami phoenix detroit "
    "dallas houston memphis omaha tucson fresno mesa raleigh tulsa oakland"
).split()


def typo(word: str, rng: random.Random) -> str:
    if len(word) < 3:
        return word
    i = rng.randrange(1, len(word) - 1)
    op = rng.randrange(3)
    if op == 0:
        return word[:i] + word[i + 1:]
    if op == 1:
        return word[:i] + word[i + 1] + word[i] + word[i + 2:]
    return word[:i] + rng.choice("aeiou") + word[i + 1:]


@dataclass
class Dataset:
    """Rows per source plus the true entity label of every (source, ordinal)."""

    rows: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)

    def write(self, directory) -> dict:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {}
        for sid, rows in self.rows.items():
            path = directory / f"{sid}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["name", "city", "age"])
                for r in rows:
                    writer.writerow([r["name"], r["city"], r["age"]])
            paths[sid] = path
        return paths

    def truth_lines(self) -> list:
        return [{"ref": ref, "label": label} for ref, label in sorted(self.labels.items())]


def people(
    n: int,
    sources: tuple = ("left", "right"),
    dup_rate: float = 0.3,
    n_cities: int = 5,
    seed: int = 0,
    balanced_cities: bool = False,
) -> Dataset:
    """``n`` records spread over ``sources``; about ``dup_rate`` of them are
    noisy copies of an earlier entity (same city, possibly a typo in the name)."""
    rng = random.Random(seed)
    cities = CITIES[:n_cities]
    ds = Dataset({s: [] for s in sources})
    entities = []
    for i in range(n):
        sid = sources[i % len(sources)]
        if entities and rng.random() < dup_rate:
            eid, first, last, city, age = rng.choice(entities)
            if rng.random() < 0.5:
                first = typo(first, rng)
            if rng.random() < 0.3:
                last = typo(last, rng)
        else:
            eid = f"e{len(entities)}"
            first, last = rng.choice(FIRST), rng.choice(LAST)
            city = cities[i % n_cities] if balanced_cities else rng.choice(cities)
            age = rng.randint(18, 90)
            entities.append((eid, first, last, city, age))
        if balanced_cities:
            city = cities[i % n_cities]
        ordinal = len(ds.rows[sid])
        ds.rows[sid].append({"name": f"{first} {last}", "city": city, "age": str(age)})
        ds.labels[f"{sid}:{ordinal}"] = eid
    return ds


def people_config(paths: dict, *, mode: str = "batch", strategy: str = "block_key", tau_match: float = 0.9,
                  filter_tokens: bool = False, store: dict = None) -> dict:
    """Config dict resolving a :func:`people` dataset: block on city,
    Jaro-Winkler on name."""
    chain = {
        "cleaning": {"trim_whitespace": True, "lowercase": True},
        "extractors": [
            {"kind": "copy_field", "source": "name", "output": "name"},
            {"kind": "copy_field", "source": "city", "output": "city"},
            {"kind": "tokenize_field", "source": "name", "output": "name_tokens"},
            {"kind": "parse_number", "source": "age", "output": "age"},
        ],
    }
    cfg = {
        "version": 1,
        "mode": mode,
        "sources": [{"source_id": sid, "kind": "csv", "location": str(p)} for sid, p in paths.items()],
        "extraction": {"chains": {sid: chain for sid in paths}},
        "comparison": {"strategy": strategy, "key_attribute": "city"} if strategy != "full" else {"strategy": "full"},
        "matcher": {
            "kind": "rule_weighted",
            "rules": [{"attribute": "name", "similarity": "jaro_winkler", "weight": 1.0}],
            "tau_match": tau_match,
            "tau_possible": min(tau_match, 0.8),
        },
        "clusterer": {"strategy": "connected_components"},
        "assembly": {"representation": "partition"},
        "store": store or {"backend": "memory"},
    }
    if filter_tokens:
        cfg["filter"] = {"attribute": "name_tokens", "min_shared": 1}
    return cfg
