"""Command-line entry point: ``erflow batch | evaluate | serve``.

Standard output carries only the declared artifact (JSONL or JSON);
diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .config import load_config
from .core import EntityProfile, GroundTruth, canonical_json, group_from_dict, profiles_to_jsonl
from .errors import ConfigError, ERError, LoadError, StageError, StoreError
from .evaluation import (
    adjusted_rand_index,
    blocking_metrics,
    load_ground_truth,
    metric_family,
    pairs_from_profiles,
    partition_from_profiles,
    pairwise_metrics,
)

log = logging.getLogger("erflow")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
ENV_LISTEN = "ERFLOW_LISTEN"
ENV_STORE = "ERFLOW_STORE"


def _fail(code: int, message: str) -> int:
    print(f"erflow: {message}", file=sys.stderr)
    return code


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_batch(args) -> int:
    from .pipeline import run_batch

    try:
        cfg = load_config(args.config)
        if cfg.mode != "batch":
            raise ConfigError("batch command needs mode = batch", "mode")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"invalid config: {exc}")
    try:
        result = run_batch(cfg, workers=args.workers)
    except StageError as exc:
        return _fail(EXIT_RUNTIME, f"stage {exc.stage}: {exc.cause}")
    except (ERError, OSError) as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    try:
        _write(args.out, profiles_to_jsonl(result.profiles))
        if args.report:
            _write(args.report, json.dumps(result.report.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot write output: {exc}")
    return EXIT_OK


def _load_profiles(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(EntityProfile.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError, ERError) as exc:
                raise LoadError(str(path), line_no, f"invalid profile: {exc}") from None
    return out


def _load_groups(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(group_from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError, ERError) as exc:
                raise LoadError(str(path), line_no, f"invalid candidate group: {exc}") from None
    return out


def cmd_evaluate(args) -> int:
    from .core import ComparisonSpace

    try:
        truth = load_ground_truth(args.truth)
        if args.mode == "blocking":
            if args.n is None:
                raise ConfigError("--n (total references) is required in blocking mode", "n")
            groups = _load_groups(args.predicted)
            space = ComparisonSpace.build(groups, args.n)
            result = {"mode": "blocking", "metrics": blocking_metrics(space, truth, args.n).to_dict()}
        else:
            profiles = _load_profiles(args.predicted)
            reps = sorted({p.representation.value for p in profiles})
            families = sorted(set.intersection(*(set(metric_family(r)) for r in reps))) if reps else ["pairwise", "cluster"]
            if args.mode == "pairwise":
                metrics = pairwise_metrics(pairs_from_profiles(profiles), truth, args.unknown_policy).to_dict()
            else:
                predicted = partition_from_profiles(profiles)
                if truth.labels is None:
                    from .clustering import UnionFind

                    uf = UnionFind(predicted.universe)
                    for a, b in truth.match_pairs:
                        uf.add(a)
                        uf.add(b)
                        uf.union(a, b)
                    truth_part = uf.partition()
                else:
                    truth_part = truth.partition()
                metrics = {"adjusted_rand_index": adjusted_rand_index(predicted, truth_part)}
            result = {
                "mode": args.mode,
                "metrics": metrics,
                "representations": reps,
                "applicable_families": families,
            }
    except LoadError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (ERError, OSError, ValueError) as exc:
        return _fail(EXIT_CONFIG, str(exc))
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .config import StoreConfig
    from .pipeline import IncrementalResolver
    from .service import make_server, parse_listen

    listen = args.listen or os.environ.get(ENV_LISTEN) or "127.0.0.1:8080"
    store_path = args.store or os.environ.get(ENV_STORE)
    try:
        cfg = load_config(args.config)
        if cfg.mode != "incremental":
            raise ConfigError("serve needs mode = incremental", "mode")
        if store_path:
            cfg = dataclasses.replace(cfg, store=StoreConfig("file", store_path, cfg.store.persist))
        host, port = parse_listen(listen)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"invalid config: {exc}")
    try:
        resolver = IncrementalResolver(cfg)
    except StoreError as exc:
        return _fail(EXIT_RUNTIME, f"store error: {exc}")
    except (ERError, OSError) as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    try:
        server = make_server(resolver, host, port)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, f"cannot bind {listen}: {exc}")
    log.info("serving on %s:%d (store version %d)", host, server.server_address[1], resolver.store.latest)
    print(f"erflow: listening on http://{host}:{server.server_address[1]}", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erflow", description="End-to-end entity resolution.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("batch", help="resolve all sources in one job")
    b.add_argument("--config", required=True, help="runtime config JSON")
    b.add_argument("--out", default="-", help="profiles JSONL output (default: stdout)")
    b.add_argument("--report", help="run report JSON output")
    b.add_argument("--workers", type=int, default=None, help="matcher threads (overrides config)")
    b.set_defaults(func=cmd_batch)

    e = sub.add_parser("evaluate", help="score predictions against ground truth")
    e.add_argument("--predicted", required=True, help="profiles JSONL (or candidate groups JSONL in blocking mode)")
    e.add_argument("--truth", required=True, help="ground truth JSONL")
    e.add_argument("--mode", choices=("pairwise", "cluster", "blocking"), default="pairwise")
    e.add_argument("--n", type=int, help="total reference count (blocking mode)")
    e.add_argument("--unknown-policy", choices=("ignore", "fp"), default="ignore",
                   help="how to count predicted pairs naming refs absent from the truth")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("serve", help="run the incremental resolution service")
    s.add_argument("--config", required=True, help="runtime config JSON (mode = incremental)")
    s.add_argument("--listen", help=f"host:port to bind (env {ENV_LISTEN}, default 127.0.0.1:8080)")
    s.add_argument("--store", help=f"file store directory (env {ENV_STORE}); enables restart recovery")
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
