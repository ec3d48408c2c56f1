"""RASE on the Klein bottle at two noise levels, written as a small CSV table.

    python scripts/klein_table.py --replications 20 --out results/klein_table.csv
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from maller.harness import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replications", type=int, default=20)
    ap.add_argument("--n", type=int, default=1500)
    ap.add_argument("--snrdb", type=float, nargs="+", default=[5.0, 2.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/klein_table.csv")
    args = ap.parse_args()

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["snrdb", "mean_rase", "sd_rase", "mean_seconds", "failures"])
        for snrdb in args.snrdb:
            cfg = ExperimentConfig("klein_rase", n=args.n, snrdb=snrdb, replications=args.replications,
                                   seed=args.seed, workers=args.workers,
                                   output=str(out.with_name(f"klein_snrdb{snrdb:g}.json")))
            rep = run_experiment(cfg)
            w.writerow([snrdb, rep.mean, rep.std, float(np.mean(rep.seconds)), len(rep.failures)])
            print(f"snrdb={snrdb:g}  RASE {rep.mean:.4f} +/- {rep.std:.4f}  ({np.mean(rep.seconds):.1f} s/rep)")


if __name__ == "__main__":
    main()
