"""Resolve a seeded two-source dataset and score it against the planted truth.

    python scripts/quality.py --n 2000 --tau 0.85 0.9 0.95
"""
import argparse
import tempfile

from erflow import synthetic
from erflow.config import config_from_dict
from erflow.core import GroundTruth
from erflow.evaluation import adjusted_rand_index, blocking_metrics, pairs_from_profiles, pairwise_metrics
from erflow.pipeline import run_batch


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--tau", type=float, nargs="+", default=[0.85, 0.9, 0.95])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    ds = synthetic.people(args.n, seed=args.seed, n_cities=10)
    truth = GroundTruth(labels=ds.labels)
    with tempfile.TemporaryDirectory() as tmp:
        paths = ds.write(tmp)
        for tau in args.tau:
            result = run_batch(config_from_dict(synthetic.people_config(paths, tau_match=tau, filter_tokens=True)))
            pw = pairwise_metrics(pairs_from_profiles(result.profiles), truth)
            ari = adjusted_rand_index(result.partition, truth.partition())
            bm = blocking_metrics(result.space, truth, args.n)
            print(f"tau={tau:.2f}  precision={pw.precision:.3f} recall={pw.recall:.3f} f1={pw.f1:.3f} "
                  f"ari={ari:.3f}  rr={bm.reduction_ratio:.3f} pc={bm.pair_completeness:.3f}")


if __name__ == "__main__":
    main()
