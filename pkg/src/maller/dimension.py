"""Maximum-likelihood intrinsic dimension from nearest-neighbor distance ratios."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset, DegenerateDatasetError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DimensionEstimate:
    d_hat: int
    raw: float
    k_range: tuple[int, int]
    excluded: int = 0


def mle_dimension(ds: Dataset | np.ndarray, k_min: int = 10, k_max: int = 20) -> DimensionEstimate:
    """Average the per-point MLE over i and over k in [k_min, k_max].

    For each point, m_k = [ (1/(k-1)) sum_{j<k} log(T_k / T_j) ]^{-1} where T_j is
    the distance to the j-th nearest neighbor. Estimates involving a zero
    distance (duplicate points) are dropped and counted in ``excluded``.
    """
    X = ds.predictors if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    n, p = X.shape
    if k_min < 2 or k_max < k_min or k_max >= n:
        raise ValueError(f"need 2 <= k_min <= k_max < n, got k_min={k_min}, k_max={k_max}, n={n}")
    T, _ = cKDTree(X).query(X, k=k_max + 1)
    T = T[:, 1:]

    estimates = []
    excluded = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logT = np.log(T)
        cum = np.cumsum(logT, axis=1)
        for k in range(k_min, k_max + 1):
            # sum_{j<k} log(T_k/T_j) = (k-1) log T_k - sum_{j<k} log T_j
            s = (k - 1) * logT[:, k - 1] - cum[:, k - 2]
            mk = (k - 1) / s
            ok = np.isfinite(mk) & (T[:, 0] > 0) & (mk > 0)
            excluded += int((~ok).sum())
            estimates.append(mk[ok])
    vals = np.concatenate(estimates)
    if vals.size == 0:
        raise DegenerateDatasetError("every neighbor-distance ratio involved a zero distance")
    if excluded:
        log.warning("mle_dimension: excluded %d degenerate estimates (duplicate points)", excluded)
    raw = float(vals.mean())
    d_hat = int(min(max(math.floor(raw + 0.5), 1), p))
    return DimensionEstimate(d_hat=d_hat, raw=raw, k_range=(k_min, k_max), excluded=excluded)
