"""Command line interface: ``maller run|fit|spectrum|dim``.

Exit status is 0 on success, 1 on a usage error and 2 when the computation
itself fails.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .data import load_csv, normalize_dataset, sample_interval, sample_sphere
from .dimension import mle_dimension
from .harness import ConfigError, load_config, maller_regression, parse_override, run_experiment
from .laplace import SCALE_MODES, maller_spectrum, write_spectrum_csv
from .llr import Maller

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _response_column(text: str | None):
    if text is None or text.lower() == "none":
        return None
    try:
        return int(text)
    except ValueError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maller", description="Local linear regression on manifolds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a config file")
    run.add_argument("config", help="flat TOML config")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    run.add_argument("--output", help="JSON report path")
    run.add_argument("--replications", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)

    fit = sub.add_parser("fit", help="predict at test points from a training CSV")
    fit.add_argument("train", help="training CSV (response in the last column by default)")
    fit.add_argument("test", help="query CSV with predictor columns")
    fit.add_argument("--output", required=True, help="predictions CSV")
    fit.add_argument("--response-column", default="-1", help="index or header name of the response column")
    fit.add_argument("--dim", type=int, help="intrinsic dimension (estimated when omitted)")
    fit.add_argument("--h", type=float, help="fixed bandwidth instead of data-driven selection")
    fit.add_argument("--h-pca", type=float, default=0.015)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--no-normalize", action="store_true", help="skip centering and rescaling")

    spec = sub.add_parser("spectrum", help="leading eigenvalues of the LLR Laplacian")
    src = spec.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifold", choices=["sphere2", "sphere3", "sphere4", "interval"])
    src.add_argument("--csv", help="point cloud CSV (all columns are coordinates)")
    spec.add_argument("--n", type=int, default=1000)
    spec.add_argument("--dim", type=int)
    spec.add_argument("--h", type=float, default=0.1)
    spec.add_argument("--h-pca", type=float, default=0.015)
    spec.add_argument("--k", type=int, default=30)
    spec.add_argument("--scale", choices=SCALE_MODES, default="empirical")
    spec.add_argument("--seed", type=int, default=0)
    spec.add_argument("--output", required=True, help="spectrum CSV")

    dim = sub.add_parser("dim", help="maximum-likelihood intrinsic dimension of a CSV point cloud")
    dim.add_argument("csv")
    dim.add_argument("--response-column", default=None, help="column to drop before estimating")
    dim.add_argument("--k-min", type=int, default=10)
    dim.add_argument("--k-max", type=int, default=20)
    return parser


def _cmd_run(args) -> int:
    overrides = dict(parse_override(s) for s in args.set)
    for key in ("output", "replications", "seed", "workers"):
        if getattr(args, key) is not None:
            overrides[key] = getattr(args, key)
    cfg = load_config(args.config, overrides)
    report = run_experiment(cfg)
    print(f"{cfg.experiment}: mean={report.mean} std={report.std} "
          f"replications={len(report.values)} failures={len(report.failures)}")
    return EXIT_OK


def _cmd_fit(args) -> int:
    col = _response_column(args.response_column)
    train = load_csv(args.train, col)
    test = load_csv(args.test, None)
    if test.p == train.p + 1:
        test = load_csv(args.test, col)
    elif test.p != train.p:
        raise ValueError(f"test file has {test.p} columns, training predictors have {train.p}")
    ntrain, ntest = (train, test) if args.no_normalize else normalize_dataset(train, test)
    if args.h is not None:
        d = args.dim or mle_dimension(ntrain).d_hat
        model = Maller(ntrain, d, h_pca=args.h_pca)
        preds = np.array([model.predict(q, args.h) for q in ntest.predictors])
        hs = np.full(len(preds), args.h)
    else:
        _, preds, hs, _ = maller_regression(ntrain, ntest.predictors, args.seed, args.h_pca, d=args.dim)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(test.p)] + ["prediction", "h"])
        for row, m, h in zip(test.predictors, preds, hs):
            w.writerow([repr(float(v)) for v in row] + [repr(float(m)), repr(float(h))])
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    if args.manifold == "interval":
        ds, d = sample_interval(args.n, args.seed), 1
    elif args.manifold:
        d = int(args.manifold[-1])
        ds = sample_sphere(d, args.n, args.seed)
    else:
        ds = load_csv(args.csv, None)
        d = args.dim or mle_dimension(ds).d_hat
    d = args.dim or d
    result = maller_spectrum(ds, d, args.h, args.h_pca, min(args.k, ds.n), args.scale)
    write_spectrum_csv(args.output, result.report)
    print(f"scale={result.scales[args.scale]:.6g} clusters={result.report.cluster_sizes}")
    return EXIT_OK


def _cmd_dim(args) -> int:
    ds = load_csv(args.csv, _response_column(args.response_column))
    print(mle_dimension(ds, args.k_min, args.k_max).d_hat)
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "fit": _cmd_fit, "spectrum": _cmd_spectrum, "dim": _cmd_dim}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"maller: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"maller: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"maller: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
