"""Time the blocked pipeline on growing synthetic datasets.

    python scripts/scalability.py --sizes 1000 3000 10000 --full-max 1000

Prints one line per size: pairs generated vs the full space, and wall time
for the blocked pipeline (with and without the shared-token filter) and,
below ``--full-max``, the full-space pipeline.
"""
import argparse
import tempfile
import time

from erflow import synthetic
from erflow.config import config_from_dict
from erflow.pipeline import run_batch


def timed(cfg):
    start = time.perf_counter()
    result = run_batch(cfg)
    return result, time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 3000, 10000])
    parser.add_argument("--blocks", type=int, default=10, help="number of balanced city blocks")
    parser.add_argument("--full-max", type=int, default=1000, help="skip the full-space run above this size")
    parser.add_argument("--unfiltered", action="store_true", help="also time the blocked run without the token filter")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    print(f"{'n':>7} {'generated':>10} {'ratio':>7} {'scored':>9} {'blocked+filter':>15} {'blocked':>9} {'full':>9}")
    for n in args.sizes:
        with tempfile.TemporaryDirectory() as tmp:
            ds = synthetic.people(n, sources=("s",), dup_rate=0.2, n_cities=args.blocks, seed=args.seed, balanced_cities=True)
            paths = ds.write(tmp)
            result, t_filtered = timed(config_from_dict(synthetic.people_config(paths, filter_tokens=True)))
            t_blocked = timed(config_from_dict(synthetic.people_config(paths)))[1] if args.unfiltered else None
            t_full = timed(config_from_dict(synthetic.people_config(paths, strategy="full")))[1] if n <= args.full_max else None
        counts = result.report.counts
        full = n * (n - 1) // 2
        fmt = lambda t: "skipped" if t is None else f"{t:.2f}s"
        print(f"{n:>7} {counts['groups_generated']:>10} {counts['groups_generated'] / full:>7.2%} "
              f"{counts['pairs_scored']:>9} {fmt(t_filtered):>15} {fmt(t_blocked):>9} {fmt(t_full):>9}")


if __name__ == "__main__":
    main()
