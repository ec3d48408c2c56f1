"""Local linear regression on an estimated tangent plane.

:class:`Maller` binds a dataset to an intrinsic dimension, a kernel and a
local PCA bandwidth, and caches neighbor sets, tangent frames and local
hat matrices so that bandwidth selection can refit many response vectors
at the same (point, bandwidth) pairs cheaply.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import Dataset
from .kernels import Kernel, default_kernel
from .neighbors import NeighborSet, euclidean_neighbors, true_neighbors
from .tangent import DEFAULT_H_PCA, InsufficientNeighborsError, TangentFrame, local_pca

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
RIDGE_FACTOR = 1e-10
H_ESCALATION = 1.5
MAX_H_ESCALATIONS = 3
MAX_PCA_ESCALATIONS = 12


class NoDataError(ValueError):
    pass


class SingularFitError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LocalSmoother:
    """The linear map from neighbor responses to beta at one (x, h)."""

    indices: np.ndarray
    hat: np.ndarray  # (d+1) x N, rows of (X^T W X)^{-1} X^T W
    inv00: float  # v1^T (X^T W X)^{-1} v1
    h: float
    ridged: bool = False


@dataclass(frozen=True)
class LocalFit:
    x: np.ndarray
    h: float
    beta: np.ndarray
    frame: TangentFrame
    weights_row: np.ndarray
    n_eff: int
    inv00: float
    h_used: float

    @property
    def d(self) -> int:
        return self.frame.d


def _weighted_hat(T: np.ndarray, w: np.ndarray):
    """Hat rows (X^T W X)^{-1} X^T W for design rows (1, T_l)."""
    N, d = T.shape
    Xd = np.empty((N, d + 1))
    Xd[:, 0] = 1.0
    Xd[:, 1:] = T
    XtW = Xd.T * w
    M = XtW @ Xd
    if not np.all(np.isfinite(M)):
        raise SingularFitError("local design matrix has non-finite entries")
    ridged = False
    if np.linalg.cond(M) > COND_LIMIT:
        lam = RIDGE_FACTOR * np.trace(M) / (d + 1)
        M = M.copy()
        M[1:, 1:] += lam * np.eye(d)
        ridged = True
        if not np.isfinite(lam) or np.linalg.cond(M) > COND_LIMIT:
            raise SingularFitError("local design matrix is singular even after ridge")
    Minv = np.linalg.inv(M)
    Minv = 0.5 * (Minv + Minv.T)
    return Minv @ XtW, float(Minv[0, 0]), ridged


def local_smoother(points: np.ndarray, x, frame: TangentFrame, h: float, kernel: Kernel,
                   indices: np.ndarray) -> LocalSmoother:
    """Build the local hat matrix at x from the neighbor indices at bandwidth h."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    if len(indices) == 0:
        raise NoDataError(f"no neighbors within sqrt(h)={np.sqrt(h):.4g} of the query point")
    diff = points[indices] - x
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    d = frame.d
    w = h ** (-d / 2) * kernel(dist / np.sqrt(h))
    pos = w > 0
    if not pos.any():
        raise NoDataError("all neighbors have zero kernel weight")
    idx, w, T = indices[pos], w[pos], diff[pos] @ frame.basis
    hat, inv00, ridged = _weighted_hat(T, w)
    return LocalSmoother(indices=idx, hat=hat, inv00=inv00, h=h, ridged=ridged)


def fit_local(ds: Dataset, x, frame: TangentFrame, h: float, kernel: Kernel | None = None,
              neighbors: NeighborSet | None = None, responses=None) -> LocalFit:
    """One weighted least-squares fit at x; neighbors default to the true neighbors at h."""
    kernel = kernel or default_kernel()
    x = np.asarray(x, dtype=float).reshape(-1)
    if neighbors is None:
        neighbors = true_neighbors(ds, x, h)
    sm = local_smoother(ds.predictors, x, frame, h, kernel, neighbors.indices)
    y = ds.responses if responses is None else np.asarray(responses, dtype=float)
    return _as_fit(sm, ds.n, x, frame, h, y)


def _as_fit(sm: LocalSmoother, n: int, x, frame, h, y) -> LocalFit:
    beta = sm.hat @ y[sm.indices]
    row = np.zeros(n)
    row[sm.indices] = sm.hat[0]
    return LocalFit(x=x, h=h, beta=beta, frame=frame, weights_row=row, n_eff=len(sm.indices),
                    inv00=sm.inv00, h_used=sm.h)


def estimate_m(fit: LocalFit) -> float:
    return float(fit.beta[0])


def estimate_gradient(fit: LocalFit) -> np.ndarray:
    """Slope coefficients mapped back to R^p through the tangent basis."""
    return fit.frame.basis @ fit.beta[1:]


def smoothing_row(ds: Dataset, x, frame: TangentFrame, h: float, kernel: Kernel | None = None) -> np.ndarray:
    return fit_local(ds, x, frame, h, kernel).weights_row


class Maller:
    """Cached MALLER estimator over a fixed training set.

    Query points are addressed either by sample index (``index=``) or by
    coordinates; both share caches keyed on the point.
    """

    def __init__(self, ds: Dataset, d: int, h_pca: float = DEFAULT_H_PCA, kernel: Kernel | None = None,
                 filter_neighbors: bool = True, pca_min_points: int | None = None):
        if h_pca <= 0:
            raise ValueError("h_pca must be positive")
        self.ds = ds
        self.X = ds.predictors
        self.d = int(d)
        self.h_pca = float(h_pca)
        self.kernel = kernel or default_kernel()
        self.filter_neighbors = filter_neighbors
        self.pca_min_points = pca_min_points or self.d + 1
        self.tree = cKDTree(self.X)
        self._nbrs: dict = {}
        self._frames: dict = {}
        self._smoothers: dict = {}

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def _point(self, x, index):
        if index is not None:
            return self.X[index], ("i", int(index))
        x = np.asarray(x, dtype=float).reshape(-1)
        return x, ("x", x.tobytes())

    def neighbors(self, x=None, delta: float = 0.0, index: int | None = None) -> NeighborSet:
        x, key = self._point(x, index)
        ck = (key, float(delta))
        hit = self._nbrs.get(ck)
        if hit is None:
            if self.filter_neighbors:
                hit = true_neighbors(self.X, x, delta, self.tree)
            else:
                hit = euclidean_neighbors(self.X, x, delta, self.tree)
            self._nbrs[ck] = hit
        return hit

    def frame(self, x=None, index: int | None = None) -> TangentFrame:
        """Tangent frame at x; h_pca grows by 1.5x until enough neighbors are found."""
        x, key = self._point(x, index)
        fr = self._frames.get(key)
        if fr is not None:
            return fr
        h = self.h_pca
        for _ in range(MAX_PCA_ESCALATIONS + 1):
            nb = self.neighbors(x, h, index)
            if len(nb) >= self.pca_min_points:
                fr = local_pca(self.X[nb.indices], x, self.d, h, self.n)
                break
            h *= H_ESCALATION
        else:
            raise InsufficientNeighborsError(len(nb), self.pca_min_points)
        self._frames[key] = fr
        return fr

    def smoother(self, x=None, h: float = 0.0, index: int | None = None) -> LocalSmoother:
        x, key = self._point(x, index)
        ck = (key, float(h))
        sm = self._smoothers.get(ck)
        if sm is not None:
            return sm
        frame = self.frame(x, index)
        hh = h
        for attempt in range(MAX_H_ESCALATIONS + 1):
            try:
                sm = local_smoother(self.X, x, frame, hh, self.kernel, self.neighbors(x, hh, index).indices)
                break
            except SingularFitError:
                if attempt == MAX_H_ESCALATIONS:
                    raise
                hh *= H_ESCALATION
                log.debug("singular local fit at h=%g, retrying with h=%g", hh / H_ESCALATION, hh)
        self._smoothers[ck] = sm
        return sm

    def fit(self, x=None, h: float = 0.0, index: int | None = None, responses=None) -> LocalFit:
        xx, _ = self._point(x, index)
        sm = self.smoother(x, h, index)
        y = self.ds.responses if responses is None else np.asarray(responses, dtype=float)
        return _as_fit(sm, self.n, xx, self.frame(x, index), h, y)

    def predict(self, x=None, h: float = 0.0, index: int | None = None, responses=None) -> float:
        sm = self.smoother(x, h, index)
        y = self.ds.responses if responses is None else responses
        return float(sm.hat[0] @ y[sm.indices])

    def gradient(self, x=None, h: float = 0.0, index: int | None = None, responses=None) -> np.ndarray:
        return estimate_gradient(self.fit(x, h, index, responses))

    def clear_cache(self) -> None:
        self._nbrs.clear()
        self._frames.clear()
        self._smoothers.clear()
