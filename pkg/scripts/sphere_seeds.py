"""Sphere spectra over several seeds, under each eigenvalue normalization.

Prints the cluster sizes and medians per seed so the sampling variability of
the multiplicity pattern is visible.

    python scripts/sphere_seeds.py --dim 2 --n 1000 --seeds 8
"""

import argparse

import numpy as np

from maller.data import sample_sphere
from maller.laplace import group_eigenvalues, maller_spectrum, sphere_eigenvalues


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--h", type=float, default=0.1)
    ap.add_argument("--h-pca", type=float, default=0.015)
    ap.add_argument("--seeds", type=int, default=8)
    args = ap.parse_args()

    ref, mult = sphere_eigenvalues(args.dim, 4)
    k = int(mult.sum())
    print(f"reference {ref.tolist()} multiplicities {mult.tolist()}")
    for seed in range(args.seeds):
        spec = maller_spectrum(sample_sphere(args.dim, args.n, seed), args.dim, args.h, args.h_pca, k, "raw")
        raw = spec.raw_eigenvalues.real
        for mode in ("asymptotic", "empirical"):
            vals = raw * spec.scales[mode]
            groups = group_eigenvalues(vals)
            print(f"seed {seed} {mode:>10} scale {spec.scales[mode]:7.2f} sizes {[len(g) for g in groups]} "
                  f"medians {[round(float(np.median(vals[g])), 2) for g in groups]}")


if __name__ == "__main__":
    main()
