"""Error of the fit at x = 0.01 for m(x) = x^2 on [0, 1] as the bandwidth halves.

Local linear fits keep an O(h) bias at the boundary, so the error should
shrink by about half per halving of h.

    python scripts/boundary_bias.py --seeds 5
"""

import argparse

import numpy as np

from maller.data import sample_interval
from maller.llr import Maller


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--x", type=float, default=0.01)
    args = ap.parse_args()

    hs = (0.04, 0.02, 0.01)
    for seed in range(args.seeds):
        ds = sample_interval(args.n, seed)
        model = Maller(ds.with_responses(ds.predictors[:, 0] ** 2), 1)
        err = [abs(model.predict(np.array([args.x]), h) - args.x ** 2) for h in hs]
        print(f"seed {seed} errors {['%.3e' % e for e in err]} ratios {err[1] / err[0]:.3f} {err[2] / err[1]:.3f}")


if __name__ == "__main__":
    main()
