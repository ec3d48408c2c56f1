"""Bandwidth selection: mGCV pilot, log-residual variance fit, plug-in MSE.

All functions take a :class:`~maller.llr.Maller` model, which carries the
training data, tangent frames, kernel and fit caches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .llr import Maller, NoDataError, SingularFitError

log = logging.getLogger(__name__)

GRID_SIZE = 21
GRID_LOW = 0.01
BLOCK_SIZE = 200

FitFailure = (NoDataError, SingularFitError, ValueError)


class BandwidthSelectionError(RuntimeError):
    pass


class BiasUnavailableError(RuntimeError):
    pass


class BlockFitError(RuntimeError):
    def __init__(self, index: int, h: float, cause: Exception):
        super().__init__(f"fit failed at block index {index}, h={h:g}: {cause}")
        self.index = index
        self.h = h


@dataclass(frozen=True)
class BandwidthGrid:
    values: np.ndarray
    d: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0 or np.any(v <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("bandwidth grid must be positive and strictly increasing")
        object.__setattr__(self, "values", v)

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)


def upper_bandwidth(d: int) -> float:
    """Largest grid bandwidth h_d for intrinsic dimension d (0.1 when d = 1)."""
    if d == 1:
        return 0.1
    log_ratio = np.log(d) + gammaln(d / 2) - 0.5 * np.log(np.pi) - gammaln((d + 1) / 2)
    return float(0.25 * np.exp(2.0 / d * log_ratio) * 0.1 ** (1.0 / d))


def candidate_grid(d: int, size: int = GRID_SIZE, low: float = GRID_LOW, high: float | None = None) -> BandwidthGrid:
    if d < 1:
        raise ValueError("dimension must be >= 1")
    high = upper_bandwidth(d) if high is None else high
    return BandwidthGrid(np.geomspace(low, high, size), d)


def default_block(n: int, size: int = BLOCK_SIZE, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=min(n, size), replace=False))


def mgcv(model: Maller, h: float, block, responses=None) -> float:
    """(1 + 2 atr) times the mean squared in-sample residual over the block."""
    y = model.ds.responses if responses is None else np.asarray(responses, dtype=float)
    block = np.asarray(block)
    if block.size == 0:
        raise ValueError("mGCV block is empty")
    k0 = model.kernel(0.0) * h ** (-model.d / 2)
    resid = np.empty(block.size)
    atr = 0.0
    for j, i in enumerate(block):
        try:
            sm = model.smoother(h=h, index=int(i))
        except FitFailure as exc:
            raise BlockFitError(int(i), h, exc) from exc
        resid[j] = y[i] - sm.hat[0] @ y[sm.indices]
        atr += sm.inv00 * k0
    atr /= block.size
    return float((1.0 + 2.0 * atr) * np.mean(resid ** 2))


TIE_RTOL = 1e-12


def _argmin_smallest(values: np.ndarray, scale: float = 0.0) -> int:
    """First index within round-off of the minimum; the grid is ascending so ties go to the smaller h.

    ``scale`` sets the round-off level (the mean squared response), so that
    criteria that are zero up to floating point error count as tied.
    """
    best = np.nanmin(values)
    return int(np.flatnonzero(values <= best + TIE_RTOL * scale)[0])


def _response_scale(model: Maller, responses=None) -> float:
    y = model.ds.responses if responses is None else np.asarray(responses, dtype=float)
    return float(np.mean(np.square(y)))


def select_mgcv(model: Maller, grid, block, responses=None) -> float:
    grid = np.asarray(list(grid), dtype=float)
    scores = np.full(grid.size, np.nan)
    for k, h in enumerate(grid):
        try:
            scores[k] = mgcv(model, h, block, responses)
        except BlockFitError as exc:
            log.debug("mGCV candidate h=%g skipped: %s", h, exc)
    if np.all(np.isnan(scores)):
        raise BandwidthSelectionError("every mGCV candidate bandwidth failed")
    return float(grid[_argmin_smallest(scores, _response_scale(model, responses))])


def sample_predictions(model: Maller, h: float, responses=None) -> np.ndarray:
    return np.array([model.predict(h=h, index=i, responses=responses) for i in range(model.n)])


def variance_from_log_fit(residuals: np.ndarray, alpha_samples: np.ndarray, alpha_query):
    """sigma^2(x) = exp(alpha0(x)) * mean(r_l exp(-alpha0(X_l))).

    The exponentiated log-residual fit estimates sigma^2 only up to the factor
    E[exp(log eps^2)]^{-1}; the mean ratio of residuals to the fitted shape restores it.
    """
    ratio = np.mean(residuals * np.exp(-alpha_samples))
    return np.exp(np.asarray(alpha_query)) * ratio


def estimate_variance(model: Maller, pilot_m: float, pilot_r: float | None = None, grid=None,
                      block=None) -> tuple[np.ndarray, float, np.ndarray, np.ndarray]:
    """Heteroscedastic variance at every sample point.

    If ``pilot_r`` is None it is chosen by mGCV on the log-residual data.
    Returns (sigma2, pilot_r, residuals, alpha0 at samples).
    """
    n = model.n
    y = model.ds.responses
    r = (y - sample_predictions(model, pilot_m)) ** 2
    z = np.log(r + 1.0 / n)
    if pilot_r is None:
        if grid is None or block is None:
            raise ValueError("grid and block are required to select pilot_r")
        pilot_r = select_mgcv(model, grid, block, responses=z)
    alpha = sample_predictions(model, pilot_r, responses=z)
    return variance_from_log_fit(r, alpha, alpha), float(pilot_r), r, alpha


def estimate_bias(model: Maller, x=None, h: float = 0.0, index: int | None = None, responses=None) -> float:
    """2 [m(x, h) - m(x, h/2)]."""
    full = model.predict(x, h, index, responses)
    try:
        half = model.predict(x, h / 2, index, responses)
    except FitFailure as exc:
        raise BiasUnavailableError(f"no valid fit at h/2={h / 2:g}: {exc}") from exc
    return 2.0 * (full - half)


def estimate_fit_variance(model: Maller, x=None, h: float = 0.0, sigma2=None, index: int | None = None) -> float:
    """Sandwich variance sum_l w_l^2 sigma^2(X_l) of the local intercept."""
    sm = model.smoother(x, h, index)
    s2 = np.asarray(sigma2, dtype=float)
    return float(np.sum(sm.hat[0] ** 2 * s2[sm.indices]))


def mse_curve(model: Maller, x=None, grid=None, sigma2=None, index: int | None = None, responses=None):
    """(bias, variance) per candidate; NaN where the candidate is unusable."""
    grid = np.asarray(list(grid), dtype=float)
    b = np.full(grid.size, np.nan)
    v = np.full(grid.size, np.nan)
    for k, h in enumerate(grid):
        try:
            b[k] = estimate_bias(model, x, h, index, responses)
            v[k] = estimate_fit_variance(model, x, h, sigma2, index)
        except (BiasUnavailableError, *FitFailure) as exc:
            log.debug("candidate h=%g skipped: %s", h, exc)
            b[k] = v[k] = np.nan
    return b, v


def select_optimal(model: Maller, x=None, grid=None, sigma2=None, index: int | None = None,
                   responses=None) -> tuple[float, np.ndarray, np.ndarray]:
    """Grid value minimizing bias^2 + variance; returns (h_opt, bias, variance)."""
    grid_v = np.asarray(list(grid), dtype=float)
    b, v = mse_curve(model, x, grid_v, sigma2, index, responses)
    mse = b ** 2 + v
    if np.all(np.isnan(mse)):
        raise BandwidthSelectionError("no candidate bandwidth produced a valid MSE estimate")
    return float(grid_v[_argmin_smallest(mse, _response_scale(model, responses))]), b, v


@dataclass
class BandwidthPlan:
    grid: BandwidthGrid
    pilot_m: float
    pilot_r: float
    sigma2: np.ndarray
    block: np.ndarray
    per_query: dict = field(default_factory=dict)

    def choose(self, model: Maller, x, key=None) -> float:
        h, b, v = select_optimal(model, x, self.grid, self.sigma2)
        self.per_query[key if key is not None else len(self.per_query)] = {"h_opt": h, "bias": b, "variance": v}
        return h


def plan_bandwidths(model: Maller, grid: BandwidthGrid | None = None, block=None, seed: int = 0) -> BandwidthPlan:
    """Pilot mGCV bandwidths and per-sample variance estimates."""
    grid = grid or candidate_grid(model.d)
    block = default_block(model.n, seed=seed) if block is None else np.asarray(block)
    pilot_m = select_mgcv(model, grid, block)
    sigma2, pilot_r, _, _ = estimate_variance(model, pilot_m, grid=grid, block=block)
    return BandwidthPlan(grid=grid, pilot_m=pilot_m, pilot_r=pilot_r, sigma2=sigma2, block=block)


def predict_adaptive(model: Maller, queries, plan: BandwidthPlan | None = None, seed: int = 0):
    """MALLER predictions with a per-query plug-in bandwidth; returns (m_hat, h_opt)."""
    plan = plan or plan_bandwidths(model, seed=seed)
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    hs = np.array([plan.choose(model, q, key=i) for i, q in enumerate(Q)])
    preds = np.array([model.predict(q, h) for q, h in zip(Q, hs)])
    return preds, hs
