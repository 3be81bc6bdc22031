"""Acceptance criteria, one test per criterion.

Runs under pytest (a PASS/FAIL summary is printed at the end of the session)
or standalone with ``python tests/test_acceptance.py``.
"""
import csv
import dataclasses
import json
import math
import random
import shutil
import subprocess
import sys
import tempfile
import time
import urllib.request
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from erflow import synthetic  # noqa: E402
from erflow.clustering import IncrementalClusterer, UnionFind, connected_components, incremental_merge  # noqa: E402
from erflow.comparison import (  # noqa: E402
    block_by_key,
    filter_cross_source,
    filter_shared_tokens,
    full_space,
    pairs_from_blocks,
    sorted_neighborhood,
)
from erflow.config import config_from_dict, load_config  # noqa: E402
from erflow.core import (  # noqa: E402
    ClusterPartition,
    EntityReference,
    GroundTruth,
    InformationRecord,
    Label,
    MatchEdge,
    Representation,
    profiles_to_jsonl,
)
from erflow.errors import RestoreError  # noqa: E402
from erflow.evaluation import adjusted_rand_index, pairwise_metrics  # noqa: E402
from erflow.matching import (  # noqa: E402
    FieldRule,
    MatcherConfig,
    fellegi_sunter_weight,
    score_fellegi_sunter,
    score_rule_weighted,
)
from erflow.pipeline import IncrementalResolver, run_batch  # noqa: E402
from erflow.similarity import jaccard_tokens, jaro_winkler, levenshtein_norm, similarity  # noqa: E402
from erflow.store import ReferenceStore, restore, snapshot  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
TOY_DIR = ROOT / "configs" / "toy"

criterion = pytest.mark.criterion


@contextmanager
def scratch():
    with tempfile.TemporaryDirectory(prefix="erflow-acc-") as d:
        yield Path(d)


def people_refs(ds):
    """References built by hand from a synthetic dataset, bypassing extraction."""
    refs = []
    for sid, rows in ds.rows.items():
        for i, row in enumerate(rows):
            name = row["name"].lower()
            attrs = {"name": name, "city": row["city"], "name_tokens": frozenset(name.split())}
            refs.append(EntityReference(f"{sid}:{i}", sid, attrs, [(sid, i)]))
    return refs


def assert_partition_invariants(part, universe):
    seen = set()
    for cluster in part.clusters:
        assert cluster, "empty cluster"
        assert not seen & set(cluster), "clusters overlap"
        seen |= set(cluster)
    assert seen == set(universe), "clusters do not cover the references"


# ---------------------------------------------------------------------------

@criterion(1, "batch and incremental resolution agree on 100 random datasets")
def test_batch_incremental_equivalence():
    start = time.perf_counter()
    with scratch() as tmp:
        for seed in range(100):
            rng = random.Random(seed)
            n = rng.randint(2, 100)
            ds = synthetic.people(n, sources=("left", "right"), dup_rate=rng.uniform(0.1, 0.6), n_cities=rng.randint(1, 6), seed=seed)
            paths = ds.write(tmp / f"d{seed}")
            filtered = seed % 2 == 1
            tau = rng.choice([0.85, 0.9, 0.95])
            batch = run_batch(config_from_dict(synthetic.people_config(paths, tau_match=tau, filter_tokens=filtered))).partition
            inc = IncrementalResolver(config_from_dict(synthetic.people_config(paths, mode="incremental", tau_match=tau, filter_tokens=filtered)))
            records = [InformationRecord(sid, i, row) for sid, rows in ds.rows.items() for i, row in enumerate(rows)]
            rng.shuffle(records)
            for rec in records:
                inc.ingest(rec)
            assert inc.partition() == batch, f"dataset seed {seed} diverged"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"took {elapsed:.1f}s"


@criterion(2, "blocked, windowed and filtered spaces stay inside the full space")
def test_comparison_space_soundness():
    rng = random.Random(2)
    for trial in range(60):
        n = rng.randint(2, 200)
        ds = synthetic.people(n, dup_rate=0.3, n_cities=rng.randint(1, 8), seed=trial)
        refs = people_refs(ds)
        by_id = {r.ref_id: r for r in refs}
        ids = sorted(by_id)
        everything = oracles.all_pairs(ids)
        full = full_space(refs)
        assert set(full.groups) == everything and len(full.groups) == len(everything)

        attr = rng.choice(["name", "city"])
        transform = rng.choice(["exact", "prefix_k", "soundex_like"])
        k = rng.randint(1, 4)
        blocked = pairs_from_blocks(block_by_key(refs, attr, transform, k))
        key = {
            "exact": lambda v: v,
            "prefix_k": lambda v: v[:k],
            "soundex_like": oracles.soundex,
        }[transform]
        expected = {p for p in everything if key(by_id[p[0]].attributes[attr]) == key(by_id[p[1]].attributes[attr])}
        assert set(blocked.groups) <= everything
        assert set(blocked.groups) == expected

        w = rng.randint(2, max(2, n))
        windowed = sorted_neighborhood(refs, attr, w)
        assert set(windowed.groups) <= everything
        order = [r.ref_id for r in sorted(refs, key=lambda r: (r.attributes[attr], r.ref_id))]
        assert set(windowed.groups) == oracles.window_pairs(order, w)
        whole = sorted_neighborhood(refs, attr, max(2, n))
        assert whole.groups == full.groups

        min_shared = rng.randint(1, 2)
        for space in (full, blocked, windowed):
            kept = filter_shared_tokens(space, "name_tokens", min_shared, by_id)
            assert set(kept.groups) <= set(space.groups) <= everything
            assert all(len(by_id[a].attributes["name_tokens"] & by_id[b].attributes["name_tokens"]) >= min_shared for a, b in kept.groups)
            cross = filter_cross_source(space, by_id)
            assert set(cross.groups) <= set(space.groups)
            assert all(by_id[a].source_id != by_id[b].source_id for a, b in cross.groups)


@criterion(3, "10k records in 10 balanced blocks: at most 11% of pairs, under 30 s")
def test_scalability():
    n = 10_000
    with scratch() as tmp:
        ds = synthetic.people(n, sources=("s",), dup_rate=0.2, n_cities=10, seed=1, balanced_cities=True)
        paths = ds.write(tmp)
        cfg = config_from_dict(synthetic.people_config(paths, filter_tokens=True))
        start = time.perf_counter()
        result = run_batch(cfg)
        elapsed = time.perf_counter() - start
    full_pairs = n * (n - 1) // 2
    generated = result.report.counts["groups_generated"]
    ratio = generated / full_pairs
    print(f"generated {generated} of {full_pairs} pairs ({ratio:.2%}), pipeline {elapsed:.1f}s")
    assert ratio <= 0.11
    assert elapsed < 30.0, f"blocked pipeline took {elapsed:.1f}s"
    # the full-space run is skipped: n is above 3,000


def random_word(rng, alphabet="abcdeéxy ", max_len=12):
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len)))


@criterion(4, "similarities and scorers agree with oracles on 1000+ pairs")
def test_matching_oracles():
    rng = random.Random(4)
    pairs = [(random_word(rng), random_word(rng)) for _ in range(1200)]
    # near-duplicates so the Winkler boost and small edit distances get exercised
    for _ in range(300):
        s = random_word(rng, "abcdefgh", 10)
        pairs.append((s, synthetic.typo(s, rng)))
    for s, t in pairs:
        assert abs(levenshtein_norm(s, t) - oracles.levenshtein_norm(s, t)) <= 1e-9
        assert abs(jaro_winkler(s, t) - oracles.jaro_winkler(s, t)) <= 1e-9
        ts, tt = frozenset(s.split()) or frozenset({"_"}), frozenset(t.split()) or frozenset({"_"})
        assert abs(jaccard_tokens(ts, tt) - oracles.jaccard(ts, tt)) <= 1e-9
        for kind in ("exact", "levenshtein_norm", "jaro_winkler"):
            assert similarity(kind, s, t) == similarity(kind, t, s)
            assert similarity(kind, s, s) == 1.0
        assert jaccard_tokens(ts, tt) == jaccard_tokens(tt, ts)
        assert jaccard_tokens(ts, ts) == 1.0

    for _ in range(300):
        rules = []
        for attr in rng.sample(["name", "city", "street"], rng.randint(1, 3)):
            u = rng.uniform(0.01, 0.5)
            m = rng.uniform(u + 0.01, 0.99)
            rules.append(FieldRule(attr, rng.choice(["jaro_winkler", "levenshtein_norm", "exact"]), m=m, u=u,
                                   agreement_threshold=rng.uniform(0.5, 1.0)))
        fs = MatcherConfig("fellegi_sunter", rules, 0.0, -1.0)
        rw = MatcherConfig("rule_weighted", [FieldRule(r.attribute, r.similarity, rng.uniform(0.1, 3)) for r in rules], 0.9, 0.7)
        x = EntityReference("s:0", "s", {r.attribute: random_word(rng, "abcd", 6) or "a" for r in rules}, [("s", 0)])
        y = EntityReference("s:1", "s", {r.attribute: random_word(rng, "abcd", 6) or "b" for r in rules}, [("s", 1)])
        direct = 0.0
        for r in rules:
            agree = similarity(r.similarity, x.attributes[r.attribute], y.attributes[r.attribute]) >= r.agreement_threshold
            direct += math.log2(r.m / r.u) if agree else math.log2((1 - r.m) / (1 - r.u))
        weight, _ = fellegi_sunter_weight(fs, x, y)
        assert abs(weight - direct) <= 1e-12
        twin = EntityReference("s:2", "s", dict(x.attributes), [("s", 2)])
        for cfg, score in ((fs, score_fellegi_sunter), (rw, score_rule_weighted)):
            assert score(cfg, x, y) == score(cfg, y, x)
            assert score(cfg, x, twin).score == 1.0


def random_edges(rng, ids, count):
    edges = []
    for _ in range(count):
        a, b = rng.sample(ids, 2)
        a, b = min(a, b), max(a, b)
        label = rng.choice([Label.MATCH, Label.MATCH, Label.POSSIBLE, Label.NON_MATCH])
        edges.append(MatchEdge(a, b, rng.random(), label, {}))
    return edges


@criterion(5, "connected components match DFS reachability on 200+ graphs")
def test_clustering_oracle():
    rng = random.Random(5)
    for _ in range(250):
        n = rng.randint(1, 50)
        ids = [f"r:{i}" for i in range(n)]
        edges = random_edges(rng, ids, rng.randint(0, 2 * n)) if n > 1 else []
        match_pairs = [(e.a, e.b) for e in edges if e.label == Label.MATCH]
        expected = oracles.reachability_clusters(ids, match_pairs)

        part = connected_components(ids, edges)
        assert list(part.clusters) == expected
        assert_partition_invariants(part, ids)

        uf = UnionFind(ids)
        inc = IncrementalClusterer()
        arrived = []
        order = ids[:]
        rng.shuffle(order)
        for ref_id in order:
            inc.add(ref_id)
            arrived.append(ref_id)
            present = set(arrived)
            batch = [e for e in edges if e.a == ref_id or e.b == ref_id]
            batch = [e for e in batch if e.a in present and e.b in present]
            inc.merge(batch)
            assert_partition_invariants(inc.partition(), arrived)
        assert list(inc.partition().clusters) == expected

        rng.shuffle(edges)
        for i in range(0, len(edges), 3):
            assert_partition_invariants(incremental_merge(uf, edges[i:i + 3]), ids)
        assert list(uf.partition().clusters) == expected


@criterion(6, "pairwise metrics and ARI agree with brute-force oracles")
def test_evaluation_oracles():
    rng = random.Random(6)
    ids = [f"x{i}" for i in range(12)]
    for _ in range(300):
        predicted = [tuple(rng.sample(ids, 2)) for _ in range(rng.randint(0, 15))]
        truth = [tuple(rng.sample(ids, 2)) for _ in range(rng.randint(1, 15))]
        m = pairwise_metrics(predicted, GroundTruth(match_pairs=frozenset(truth)))
        tp, fp, fn = oracles.confusion(predicted, truth)
        assert (m.tp, m.fp, m.fn) == (tp, fp, fn)
        assert m.precision == (tp / (tp + fp) if tp + fp else 1.0)
        assert m.recall == (tp / (tp + fn) if tp + fn else 1.0)

        labels = {i: rng.randrange(rng.randint(1, 6)) for i in ids}
        x = ClusterPartition.from_clusters([[i for i in ids if labels[i] == lab] for lab in set(labels.values())])
        assert adjusted_rand_index(x, x) == 1.0
        other = {i: rng.randrange(4) for i in ids}
        y = ClusterPartition.from_clusters([[i for i in ids if other[i] == lab] for lab in set(other.values())])
        assert abs(adjusted_rand_index(x, y) - oracles.ari_pair_counting(x.clusters, y.clusters)) <= 1e-12

    crossed = (ClusterPartition.from_clusters([["a", "b"], ["c", "d"]]), ClusterPartition.from_clusters([["a", "c"], ["b", "d"]]))
    assert abs(adjusted_rand_index(*crossed) - oracles.ari_contingency(crossed[0].clusters, crossed[1].clusters)) <= 1e-12
    assert abs(adjusted_rand_index(*crossed) - -0.5) <= 1e-12
    one_pair = ClusterPartition.from_clusters([["a", "b"], ["c"], ["d"]])
    singletons = ClusterPartition.from_clusters([["a"], ["b"], ["c"], ["d"]])
    expected = oracles.ari_contingency(one_pair.clusters, singletons.clusters)
    assert abs(adjusted_rand_index(one_pair, singletons) - expected) <= 1e-12


def observable(store):
    out = [(v.version, v.counts) for v in store.versions()]
    for version in range(store.latest + 1):
        for kind in ("references", "comparison_space", "edges", "partition", "profiles"):
            items = store.get_artifacts(kind, version)
            out.append((kind, version, [x.to_json() if hasattr(x, "to_json") else list(x) for x in items]))
    return out


def random_store(rng):
    store = ReferenceStore()
    known = []
    for _ in range(rng.randint(0, 10)):
        kind = rng.choice(["references", "edges", "partition", "comparison_space"])
        if kind == "references":
            batch = []
            for _ in range(rng.randint(0, 3)):
                i = len(known)
                batch.append(EntityReference(f"s:{i}", "s", {"name": random_word(rng, "abc", 5) or "a"}, [("s", i)]))
                known.append(f"s:{i}")
            store.put_artifacts(kind, batch)
        elif len(known) >= 2:
            pairs = sorted({tuple(sorted(rng.sample(known, 2))) for _ in range(rng.randint(1, 3))})
            if kind == "edges":
                store.put_artifacts(kind, [MatchEdge(a, b, 1.0, Label.MATCH, {"name": 1.0}) for a, b in pairs])
            elif kind == "comparison_space":
                store.put_artifacts(kind, pairs)
            else:
                store.put_artifacts(kind, connected_components(known, [MatchEdge(a, b, 1.0, Label.MATCH, {}) for a, b in pairs]).clusters)
    return store


def start_server(config, store_dir):
    proc = subprocess.Popen(
        [sys.executable, "-m", "erflow", "serve", "--config", str(config), "--listen", "127.0.0.1:0", "--store", str(store_dir)],
        stderr=subprocess.PIPE,
        stdout=subprocess.DEVNULL,
        text=True,
    )
    deadline = time.monotonic() + 30
    while time.monotonic() < deadline:
        line = proc.stderr.readline()
        if not line:
            break
        if "listening on http://" in line:
            return proc, line.strip().split("listening on ", 1)[1]
    proc.kill()
    raise RuntimeError(f"server did not start: {proc.stderr.read()}")


def stop_server(proc):
    proc.terminate()
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()
    proc.stderr.close()


def http(url, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method="GET" if data is None else "POST")
    with urllib.request.urlopen(req, timeout=10) as resp:
        return resp.status, resp.read()


@criterion(7, "snapshots round-trip, truncation is rejected, restarts keep answers")
def test_store_durability():
    rng = random.Random(7)
    with scratch() as tmp:
        for trial in range(80):
            store = random_store(rng)
            path = snapshot(store, tmp / f"s{trial}.snap")
            assert observable(restore(path)) == observable(store)
            data = path.read_bytes()
            cut = rng.randrange(len(data))
            path.write_bytes(data[:cut])
            target = ReferenceStore()
            try:
                restore(path, into=target)
            except RestoreError:
                pass
            else:
                raise AssertionError(f"truncation at byte {cut} of {len(data)} was accepted")
            assert target.latest == 0 and target.versions() == []

        shutil.copytree(TOY_DIR, tmp / "toy")
        config, store_dir = tmp / "toy" / "incremental.json", tmp / "store"
        queries = ["/profiles?ref_id=cust:0", "/profiles?ref_id=cust:1", "/profiles?ref_id=cust:2",
                   "/profiles?attr=city&value=nyc", "/health"]
        proc, base = start_server(config, store_dir)
        try:
            for i, (name, city) in enumerate([("John Smith", "NYC"), ("Jon Smith", "NYC"), ("Alice Jones", "LA")]):
                status, _ = http(base + "/records", {"source_id": "cust", "record_ordinal": i, "payload": {"name": name, "city": city}})
                assert status == 200
            before = [http(base + q) for q in queries]
        finally:
            stop_server(proc)
        proc, base = start_server(config, store_dir)
        try:
            after = [http(base + q) for q in queries]
        finally:
            stop_server(proc)
        assert after == before
        assert json.loads(before[0][1])["profiles"][0]["member_ids"] == ["cust:0", "cust:1"]


def toy_oracle_jsonl():
    """Expected toy output composed from the independent oracles."""
    with open(TOY_DIR / "customers.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    recs = {f"cust:{i}": {k: v.strip().lower() for k, v in row.items()} for i, row in enumerate(rows)}
    ordinal = {rid: int(rid.split(":")[1]) for rid in recs}
    cfg = json.loads((TOY_DIR / "config.json").read_text())
    tau = cfg["matcher"]["tau_match"]
    matches = [
        (a, b) for a, b in oracles.all_pairs(list(recs))
        if recs[a]["city"] == recs[b]["city"] and oracles.jaro_winkler(recs[a]["name"], recs[b]["name"]) >= tau
    ]
    lines = []
    for cluster in oracles.reachability_clusters(recs, matches):
        lines.append(json.dumps({
            "member_ids": list(cluster),
            "profile_id": f"p:{cluster[0]}",
            "provenance": [["cust", ordinal[m]] for m in cluster],
            "representation": "partition",
        }, sort_keys=True, separators=(",", ":")) + "\n")
    return "".join(lines)


@criterion(8, "toy run yields the two oracle profiles, byte-identical for 1, 2 and 8 threads")
def test_toy_end_to_end():
    expected = toy_oracle_jsonl()
    assert expected.count("\n") == 2
    cfg = load_config(TOY_DIR / "config.json")
    outputs = {profiles_to_jsonl(run_batch(cfg, workers=w).profiles) for w in (1, 2, 8) for _ in range(3)}
    assert outputs == {expected}

    # big enough that the matcher splits work across threads
    with scratch() as tmp:
        ds = synthetic.people(400, seed=8)
        big = config_from_dict(synthetic.people_config(ds.write(tmp), strategy="full"))
        result = {w: run_batch(big, workers=w) for w in (1, 2, 8)}
        assert len(result[1].space) > 4096
        assert len({profiles_to_jsonl(r.profiles) for r in result.values()}) == 1
        assert result[1].edges == result[2].edges == result[8].edges


def check_profiles(profiles, refs, representation):
    for p in profiles:
        assert p.representation == representation
        assert list(p.member_ids) == sorted(set(p.member_ids))
        assert all(m in refs for m in p.member_ids)
        assert list(p.provenance) == sorted({pr for m in p.member_ids for pr in refs[m].provenance})
        if representation == Representation.PAIR:
            assert len(p.member_ids) == 2


@criterion(9, "matcher-only and clusterer-only pipelines terminate with valid profiles")
def test_optional_stages():
    with scratch() as tmp:
        configs = [load_config(TOY_DIR / "config.json")]
        for seed in range(3):
            ds = synthetic.people(80, seed=seed)
            configs.append(config_from_dict(synthetic.people_config(ds.write(tmp / str(seed)))))
        for cfg in configs:
            pairs_only = run_batch(dataclasses.replace(cfg, clusterer=None, representation=Representation.PAIR))
            assert pairs_only.partition is None
            check_profiles(pairs_only.profiles, pairs_only.references, Representation.PAIR)
            assert sorted(p.member_ids for p in pairs_only.profiles) == sorted((e.a, e.b) for e in pairs_only.edges if e.label == Label.MATCH)

            cluster_only = run_batch(dataclasses.replace(cfg, matcher=None))
            assert cluster_only.edges == []
            check_profiles(cluster_only.profiles, cluster_only.references, Representation.PARTITION)
            assert sorted(p.member_ids for p in cluster_only.profiles) == sorted((r,) for r in cluster_only.references)
            assert_partition_invariants(cluster_only.partition, cluster_only.references)


CRITERIA = [
    test_batch_incremental_equivalence,
    test_comparison_space_soundness,
    test_scalability,
    test_matching_oracles,
    test_clustering_oracle,
    test_evaluation_oracles,
    test_store_durability,
    test_toy_end_to_end,
    test_optional_stages,
]


def main() -> int:
    failed = 0
    for fn in CRITERIA:
        num, title = next(m.args for m in fn.pytestmark if m.name == "criterion")
        start = time.perf_counter()
        try:
            fn()
            verdict = "PASS"
        except Exception as exc:  # report and keep going
            verdict = f"FAIL ({type(exc).__name__}: {exc})"
            failed += 1
        print(f"{verdict.split(' ')[0]}  criterion {num}: {title}  [{time.perf_counter() - start:.1f}s]"
              + ("" if verdict == "PASS" else f"\n      {verdict[5:]}"))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
