"""Experiment orchestration: synthetic benchmarks and CSV regression runs.

An :class:`ExperimentConfig` names one experiment and its parameters;
:func:`run_experiment` executes the replications (optionally in worker
processes) and returns an :class:`ExperimentReport` that serializes to JSON
with a stable key order.
"""

from __future__ import annotations

import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .bandwidth import BandwidthGrid, candidate_grid, plan_bandwidths, predict_adaptive
from .data import (NoiseSpec, load_csv, normalize_dataset, rase, sample_interval, sample_klein_bottle,
                   sample_sphere, sample_torus)
from .dimension import mle_dimension
from .laplace import leading_nontrivial_mode, maller_spectrum, sphere_eigenvalues, write_spectrum_csv
from .llr import Maller

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

EXPERIMENTS = ("klein_rase", "torus_gradient", "sphere_spectrum", "interval_spectrum", "csv_regression")
WORKERS_ENV = "MALLER_WORKERS"
MAX_FAILURE_FRACTION = 0.2


class ConfigError(ValueError):
    pass


class ExperimentAborted(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    n: int | None = None
    n_test: int | None = None
    replications: int = 20
    snrdb: float | None = None
    sigma_x: float = 0.0
    h_pca: float = 0.015
    h: float | None = None
    grid_low: float | None = None
    grid_high: float | None = None
    grid_size: int | None = None
    dim: int | None = None
    k: int | None = None
    scale: str = "empirical"
    seed: int = 0
    workers: int = 1
    output: str | None = None
    train: str | None = None
    test: str | None = None
    response_column: int = -1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for name in ("h_pca", "h", "grid_low", "grid_high"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive")
        if self.grid_size is not None and self.grid_size < 1:
            raise ConfigError("grid_size must be >= 1")
        if self.experiment == "csv_regression" and (self.train is None or self.test is None):
            raise ConfigError("csv_regression needs both 'train' and 'test' paths")
        defaults = _DEFAULTS[self.experiment]
        for key, value in defaults.items():
            if getattr(self, key) is None:
                setattr(self, key, value)

    def grid(self, d: int) -> BandwidthGrid:
        kw = {}
        if self.grid_size is not None:
            kw["size"] = self.grid_size
        if self.grid_low is not None:
            kw["low"] = self.grid_low
        return candidate_grid(d, high=self.grid_high, **kw)


_DEFAULTS: dict[str, dict[str, Any]] = {
    "klein_rase": {"n": 1500, "n_test": 10, "snrdb": 5.0},
    "torus_gradient": {"n": 6000, "n_test": 3000, "snrdb": 40.0},
    "sphere_spectrum": {"n": 1000, "dim": 2, "h": 0.1, "k": 30},
    "interval_spectrum": {"n": 2000, "dim": 1, "h": 0.001, "k": 10},
    "csv_regression": {},
}


def _coerce(name: str, value):
    typ = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    if value is None:
        return None
    if "int" in typ and "float" not in typ:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name} must be an integer")
        return int(value)
    if "float" in typ:
        return float(value)
    return str(value)


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "experiment" not in mapping:
        raise ConfigError("config must set 'experiment'")
    try:
        values = {k: _coerce(k, v) for k, v in mapping.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(**values)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat TOML config; ``overrides`` (e.g. from CLI flags) win."""
    try:
        with open(path, "rb") as fh:
            mapping = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in mapping.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, found tables {nested}")
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(mapping)


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` with the value read as a TOML scalar (bare words become strings)."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def replication_seed(seed: int, replication: int) -> int:
    """Independent integer seed for one replication, fixed by (seed, index)."""
    return int(np.random.SeedSequence([seed, replication]).generate_state(1)[0])


# -- report --------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    experiment: str
    values: list
    seconds: list
    details: list
    failures: list
    config: dict
    version: str = __version__
    mean: float | None = None
    std: float | None = None

    def __post_init__(self):
        self.mean, self.std = aggregate(self.values)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2, ensure_ascii=False)

    def write(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def aggregate(values) -> tuple[float | None, float | None]:
    """Mean and sample standard deviation (0 for a single value) of the finite values."""
    v = np.array([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if v.size == 0:
        return None, None
    std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(np.mean(v)), std


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- experiments ---------------------------------------------------------------------

def maller_regression(train, queries, seed: int, h_pca: float, grid=None, d: int | None = None):
    """Full pipeline on a normalized training set: dimension, pilots, per-query bandwidths.

    Returns (model, predictions, bandwidths, plan).
    """
    d = mle_dimension(train).d_hat if d is None else d
    model = Maller(train, d, h_pca=h_pca)
    grid = grid(d) if callable(grid) else grid
    plan = plan_bandwidths(model, grid=grid, seed=seed)
    preds, hs = predict_adaptive(model, queries, plan)
    return model, preds, hs, plan


def _split(full, n):
    return full.subset(np.arange(n)), full.subset(np.arange(n, full.n))


def _klein(cfg: ExperimentConfig, seed: int) -> tuple[float, dict]:
    full = sample_klein_bottle(cfg.n + cfg.n_test, NoiseSpec(cfg.snrdb, cfg.sigma_x), seed)
    train, test = normalize_dataset(*_split(full, cfg.n))
    model, preds, hs, plan = maller_regression(train, test.predictors, seed, cfg.h_pca, cfg.grid)
    return rase(preds, test.meta["m"]), {"d_hat": model.d, "pilot_m": plan.pilot_m, "pilot_r": plan.pilot_r,
                                          "h_opt": hs, "predictions": preds, "truth": test.meta["m"]}


def gradient_errors(estimated: np.ndarray, truth: np.ndarray) -> dict:
    """Angular error (degrees), relative magnitude error and relative RMS error per query."""
    ne, nt = np.linalg.norm(estimated, axis=1), np.linalg.norm(truth, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.sum(estimated * truth, axis=1) / (ne * nt)
    angle = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    rel = np.abs(ne - nt) / nt
    rms = float(np.sqrt(np.sum((estimated - truth) ** 2) / np.sum(truth ** 2)))
    return {"angle_deg": angle, "relative_magnitude": rel, "relative_rms": rms}


def _torus(cfg: ExperimentConfig, seed: int) -> tuple[float, dict]:
    full = sample_torus(cfg.n + cfg.n_test, NoiseSpec(cfg.snrdb, cfg.sigma_x), seed)
    train, test = normalize_dataset(*_split(full, cfg.n))
    model, preds, hs, plan = maller_regression(train, test.predictors, seed, cfg.h_pca, cfg.grid, d=cfg.dim)
    # the fit lives in normalized coordinates; undo the scaling for the gradient
    grads = np.array([model.gradient(q, h) for q, h in zip(test.predictors, hs)]) / train.meta["norm_scale"]
    err = gradient_errors(grads, test.meta["gradient"])
    return err["relative_rms"], {
        "d_hat": model.d, "pilot_m": plan.pilot_m, "median_angle_deg": float(np.nanmedian(err["angle_deg"])),
        "median_relative_magnitude": float(np.nanmedian(err["relative_magnitude"])),
        "rase": rase(preds, test.meta["m"]), "median_h": float(np.median(hs)),
    }


def _sphere(cfg: ExperimentConfig, seed: int) -> tuple[float, dict]:
    ds = sample_sphere(cfg.dim, cfg.n, seed)
    spec = maller_spectrum(ds, cfg.dim, cfg.h, cfg.h_pca, cfg.k, cfg.scale)
    rep = spec.report
    levels = 1
    ref, mult = sphere_eigenvalues(cfg.dim, 8)
    while levels < len(mult) and mult[: levels + 1].sum() <= cfg.k:
        levels += 1
    # medians of the eigenvalues grouped by the theoretical multiplicities
    bounds = np.concatenate([[0], np.cumsum(mult[:levels])])
    re = rep.eigenvalues.real
    by_rank = [float(np.median(re[a:b])) for a, b in zip(bounds[:-1], bounds[1:])]
    rel = [abs(m - r) / abs(r) for m, r in zip(by_rank[1:], ref[1:levels])]
    return max(rel) if rel else 0.0, {
        "eigenvalues": re, "imag": rep.eigenvalues.imag, "raw_eigenvalues": spec.raw_eigenvalues.real,
        "scales": spec.scales, "cluster_sizes": rep.cluster_sizes, "cluster_medians": rep.cluster_medians(),
        "rank_medians": by_rank, "reference": ref[:levels], "row_sum_error": spec.row_sum_error,
        "_report": rep,
    }


def _interval(cfg: ExperimentConfig, seed: int) -> tuple[float, dict]:
    ds = sample_interval(cfg.n, seed)
    spec = maller_spectrum(ds, 1, cfg.h, cfg.h_pca, cfg.k, cfg.scale)
    rep = spec.report
    x = ds.predictors[:, 0]
    u = leading_nontrivial_mode(rep, x)
    steps = np.diff(u[np.argsort(x)])
    re = rep.eigenvalues.real
    return float(re[2]) if re.size > 2 else float("nan"), {
        "eigenvalues": re, "raw_eigenvalues": spec.raw_eigenvalues.real, "scales": spec.scales,
        "monotone": bool(np.all(steps >= 0) or np.all(steps <= 0)), "row_sum_error": spec.row_sum_error,
        "_report": rep,
    }


def _csv(cfg: ExperimentConfig, seed: int) -> tuple[float | None, dict]:
    train = load_csv(cfg.train, cfg.response_column)
    test = load_csv(cfg.test, None)
    if test.p == train.p + 1:  # test file carries a response column: use it for RASE
        test = load_csv(cfg.test, cfg.response_column)
        truth = test.responses
    elif test.p == train.p:
        truth = None
    else:
        raise ValueError(f"test file has {test.p} columns, training predictors have {train.p}")
    ntrain, ntest = normalize_dataset(train, test)
    model, preds, hs, plan = maller_regression(ntrain, ntest.predictors, seed, cfg.h_pca, cfg.grid, d=cfg.dim)
    value = rase(preds, truth) if truth is not None else None
    return value, {"d_hat": model.d, "pilot_m": plan.pilot_m, "h_opt": hs, "predictions": preds}


_RUNNERS = {"klein_rase": _klein, "torus_gradient": _torus, "sphere_spectrum": _sphere,
            "interval_spectrum": _interval, "csv_regression": _csv}


def _replicate(cfg: ExperimentConfig, rep: int) -> dict:
    seed = replication_seed(cfg.seed, rep)
    start = time.perf_counter()
    try:
        value, detail = _RUNNERS[cfg.experiment](cfg, seed)
    except Exception as exc:  # recorded and excluded, see run_experiment
        log.warning("replication %d failed: %s", rep, exc)
        return {"replication": rep, "seed": seed, "error": f"{type(exc).__name__}: {exc}",
                "seconds": time.perf_counter() - start}
    return {"replication": rep, "seed": seed, "value": value, "detail": detail,
            "seconds": time.perf_counter() - start}


def resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return cfg.workers


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every replication and aggregate; writes ``cfg.output`` when set."""
    workers = resolve_workers(cfg)
    reps = range(cfg.replications)
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, [cfg] * cfg.replications, reps))
    else:
        results = [_replicate(cfg, r) for r in reps]
    failed = [r for r in results if "error" in r]
    if len(failed) > MAX_FAILURE_FRACTION * cfg.replications:
        raise ExperimentAborted(f"{len(failed)} of {cfg.replications} replications failed; "
                                f"first error: {failed[0]['error']}")
    ok = [r for r in results if "error" not in r]
    spectra = [r["detail"].pop("_report", None) for r in ok]
    report = ExperimentReport(
        experiment=cfg.experiment,
        values=[r["value"] for r in ok],
        seconds=[r["seconds"] for r in ok],
        details=[dict(r["detail"], replication=r["replication"], seed=r["seed"]) for r in ok],
        failures=[{k: r[k] for k in ("replication", "seed", "error")} for r in failed],
        config=asdict(cfg),
    )
    if cfg.output:
        out = Path(cfg.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        report.write(out)
        _write_tables(out, report, spectra)
    return report


def _write_tables(out: Path, report: ExperimentReport, spectra) -> None:
    """Plot-ready CSV companions next to the JSON report."""
    table = out.with_suffix(".csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write("replication,value,seconds\n")
        for d, v, s in zip(report.details, report.values, report.seconds):
            fh.write(f"{d['replication']},{'' if v is None else repr(float(v))},{s!r}\n")
    if spectra and spectra[0] is not None:
        write_spectrum_csv(out.with_name(out.stem + "_spectrum.csv"), spectra[0])
