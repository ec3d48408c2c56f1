"""Synthetic manifold samplers, normalization, CSV I/O and error metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist, pdist


class DegenerateDatasetError(ValueError):
    pass


class CSVParseError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    predictors: np.ndarray
    responses: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.predictors, dtype=float))
        if X.shape[0] == 1 and np.ndim(self.predictors) == 1:
            X = X.T
        y = np.asarray(self.responses, dtype=float).reshape(-1)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("dataset needs n >= 1 and p >= 1")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{y.shape[0]} responses for {X.shape[0]} predictors")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def p(self) -> int:
        return self.predictors.shape[1]

    def with_responses(self, y) -> "Dataset":
        return replace(self, responses=np.asarray(y, dtype=float))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        meta = {
            k: (v[idx] if isinstance(v, np.ndarray) and v.shape[:1] == (self.n,) else v)
            for k, v in self.meta.items()
        }
        return Dataset(self.predictors[idx], self.responses[idx], meta, self.seed)


@dataclass(frozen=True)
class NoiseSpec:
    snrdb: float = 5.0
    sigma_x: float = 0.0

    def __post_init__(self):
        if self.sigma_x < 0:
            raise ValueError("sigma_x must be nonnegative")


def sigma0_from_snrdb(signal: np.ndarray, snrdb: float) -> float:
    """Noise level giving 10 log10(Var(signal) / sigma0^2) = snrdb."""
    return float(np.sqrt(np.var(signal, ddof=1) / 10.0 ** (snrdb / 10.0)))


# -- Klein bottle ------------------------------------------------------------

def klein_embedding(u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    r = 2.0 * np.cos(v) + 1.0
    return np.stack(
        [r * np.cos(u), r * np.sin(u), 2.0 * np.sin(v) * np.cos(u / 2), 2.0 * np.sin(v) * np.sin(u / 2)],
        axis=-1,
    )


def klein_regression(u, v):
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    return 7 * np.sin(4 * u) + 5 * np.cos(2 * v) ** 2 + 6 * np.exp(-32 * ((u - np.pi) ** 2 + (v - np.pi) ** 2))


def _hetero_factor(u, v):
    return 1.0 + 0.1 * np.cos(u) + 0.1 * np.sin(v)


def sample_klein_bottle(n: int, noise: NoiseSpec = NoiseSpec(), seed: int = 0) -> Dataset:
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0.0, 2 * np.pi, size=(2, n))
    X = klein_embedding(u, v)
    m = klein_regression(u, v)
    sigma0 = sigma0_from_snrdb(m, noise.snrdb) if n > 1 else 0.0
    y = m + sigma0 * _hetero_factor(u, v) * rng.standard_normal(n)
    W = X + noise.sigma_x * rng.standard_normal(X.shape) if noise.sigma_x > 0 else X
    meta = {"u": u, "v": v, "m": m, "clean": X, "sigma0": sigma0, "manifold": "klein"}
    return Dataset(W, y, meta, seed)


# -- torus --------------------------------------------------------------------

def torus_embedding(u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    return np.stack([(2 + np.cos(v)) * np.cos(u), (2 + np.cos(v)) * np.sin(u), np.sin(v)], axis=-1)


def torus_regression(u, v):
    return np.cos(u) * np.sin(4 * np.asarray(v) + 1)


def torus_gradient(u, v) -> np.ndarray:
    """Embedded gradient of cos(u) sin(4v+1) on the torus (2 + cos v) tube.

    Unit frame E1 = (-sin u, cos u, 0), E2 = (-sin v cos u, -sin v sin u, cos v);
    the E1 derivative carries the 1 / (2 + cos v) arc-length factor.
    """
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    d1 = -np.sin(u) * np.sin(4 * v + 1) / (2 + np.cos(v))
    d2 = 4 * np.cos(u) * np.cos(4 * v + 1)
    e1 = np.stack([-np.sin(u), np.cos(u), np.zeros_like(u)], axis=-1)
    e2 = np.stack([-np.sin(v) * np.cos(u), -np.sin(v) * np.sin(u), np.cos(v)], axis=-1)
    return d1[..., None] * e1 + d2[..., None] * e2


def torus_normal(u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    return np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u), np.sin(v)], axis=-1)


def sample_torus(n: int, noise: NoiseSpec = NoiseSpec(snrdb=40.0), seed: int = 0) -> Dataset:
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    u, v = rng.uniform(0.0, 2 * np.pi, size=(2, n))
    X = torus_embedding(u, v)
    m = torus_regression(u, v)
    sigma0 = sigma0_from_snrdb(m, noise.snrdb) if n > 1 else 0.0
    y = m + sigma0 * _hetero_factor(u, v) * rng.standard_normal(n)
    W = X + noise.sigma_x * rng.standard_normal(X.shape) if noise.sigma_x > 0 else X
    meta = {"u": u, "v": v, "m": m, "gradient": torus_gradient(u, v), "clean": X,
            "sigma0": sigma0, "manifold": "torus"}
    return Dataset(W, y, meta, seed)


# -- spheres and the interval ---------------------------------------------------

def sample_sphere(d: int, n: int, seed: int = 0) -> Dataset:
    """Uniform sample of the unit sphere S^d in R^{d+1}."""
    if d < 1:
        raise ValueError("sphere dimension must be >= 1")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, d + 1))
    X = G / np.linalg.norm(G, axis=1, keepdims=True)
    return Dataset(X, np.zeros(n), {"manifold": f"S{d}", "d": d}, seed)


def sample_interval(n: int, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, size=(n, 1))
    return Dataset(x, np.zeros(n), {"manifold": "interval", "d": 1}, seed)


def sample_flat(n: int, d: int, p: int, seed: int = 0, low=0.0, high=1.0) -> Dataset:
    """Uniform points of the cube [low, high]^d placed on a random d-plane of R^p."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((p, d)))
    t = rng.uniform(low, high, size=(n, d))
    offset = rng.standard_normal(p)
    return Dataset(t @ Q.T + offset, np.zeros(n), {"latent": t, "basis": Q, "offset": offset, "d": d}, seed)


# -- normalization --------------------------------------------------------------

def _diameter(X: np.ndarray, chunk: int = 1024) -> float:
    """Largest pairwise distance, computed in row blocks to bound memory."""
    if X.shape[0] <= chunk:
        return float(pdist(X).max())
    best = 0.0
    for start in range(0, X.shape[0], chunk):
        best = max(best, float(cdist(X[start:start + chunk], X[start:]).max()))
    return best


def _normalizer(X: np.ndarray):
    if X.shape[0] < 2:
        raise DegenerateDatasetError("normalization needs at least two points")
    mu = X.mean(axis=0)
    s = _diameter(X)
    if s == 0.0:
        raise DegenerateDatasetError("all predictors are identical")
    return mu, s


def normalize_dataset(ds: Dataset, test: Dataset | None = None):
    """Center and scale predictors so the max pairwise distance is 1.

    With a ``test`` set, the mean and scale come from the union of both sets
    and a pair ``(train, test)`` is returned.
    """
    X = ds.predictors if test is None else np.vstack([ds.predictors, test.predictors])
    mu, s = _normalizer(X)

    def apply(d: Dataset) -> Dataset:
        meta = dict(d.meta, norm_center=mu, norm_scale=s)
        return replace(d, predictors=(d.predictors - mu) / s, meta=meta)

    if test is None:
        return apply(ds)
    return apply(ds), apply(test)


# -- CSV ------------------------------------------------------------------------

def _parse_rows(rows: list[list[str]], path) -> tuple[np.ndarray, list[str] | None]:
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise CSVParseError(f"{path}: no data rows")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(header) if header else len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        lineno = i + (2 if header else 1)
        if len(row) != width:
            raise CSVParseError(f"{path}: row {lineno} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise CSVParseError(f"{path}: non-numeric value {cell!r} at row {lineno}, column {j + 1}") from None
    return out, header


def read_table(path) -> tuple[np.ndarray, list[str] | None]:
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_rows(list(csv.reader(fh)), path)


def load_csv(path, response_column: int | str | None = -1) -> Dataset:
    """Read a numeric table; ``response_column=None`` means no response column."""
    table, header = read_table(path)
    p = table.shape[1]
    if response_column is None:
        return Dataset(table, np.zeros(table.shape[0]), {"header": header, "source": str(path)})
    if isinstance(response_column, str):
        if header is None or response_column not in header:
            raise CSVParseError(f"{path}: response column {response_column!r} not found")
        col = header.index(response_column)
    else:
        col = response_column % p if -p <= response_column < p else None
        if col is None:
            raise CSVParseError(f"{path}: response column {response_column} out of range for {p} columns")
    keep = [j for j in range(p) if j != col]
    if not keep:
        raise CSVParseError(f"{path}: no predictor columns")
    return Dataset(table[:, keep], table[:, col], {"header": header, "source": str(path)})


def write_csv(path, ds: Dataset, header: bool = True) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j + 1}" for j in range(ds.p)] + ["y"])
        for row, y in zip(ds.predictors, ds.responses):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


# -- metrics --------------------------------------------------------------------

def rase(predictions, truth) -> float:
    """Root average squared estimation error."""
    a, b = np.asarray(predictions, dtype=float).ravel(), np.asarray(truth, dtype=float).ravel()
    if a.shape != b.shape or a.size == 0:
        raise ValueError(f"length mismatch: {a.size} predictions vs {b.size} truth values")
    return float(np.sqrt(np.mean((a - b) ** 2)))
