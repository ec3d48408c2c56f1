"""Euclidean radius neighbors and the self-tuning spectral "true neighbor" filter.

A Euclidean ball of radius sqrt(delta) can catch points from a different sheet
of the manifold when the reach is small. The filter clusters the ball with
self-tuning spectral clustering and keeps only the query's cluster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, expm
from scipy.optimize import minimize
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import eigsh
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .data import Dataset

SCALE_NEIGHBOR = 7
MAX_CLUSTERS = 5
MIN_CLUSTER_SIZE = 10
# (1 - lambda_{C+1}) / (1 - lambda_C) needed before C > 1 clusters are considered
EIGENGAP_RATIO = 1e3
_GAP_FLOOR = 1e-12
# above this size a Cholesky test rules out splits before the full eigensolve
_CERTIFY_MIN = 150
# affinities with fewer non-negligible entries than this fraction use a sparse eigensolver
_SPARSE_DENSITY = 0.15
_NEGLIGIBLE = 1e-17


@dataclass(frozen=True)
class NeighborSet:
    query: np.ndarray
    delta: float
    indices: np.ndarray
    filtered: bool = False
    n_clusters: int = 1

    def __len__(self) -> int:
        return len(self.indices)


def _points(ds) -> np.ndarray:
    return ds.predictors if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)


def brute_force_neighbors(points: np.ndarray, x: np.ndarray, delta: float) -> np.ndarray:
    sq = np.sum((points - x) ** 2, axis=1)
    return np.flatnonzero(sq < delta)


def euclidean_neighbors(ds, x, delta: float, tree: cKDTree | None = None) -> NeighborSet:
    """Indices with ||X_i - x|| < sqrt(delta) (strict)."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    X = _points(ds)
    x = np.asarray(x, dtype=float).reshape(-1)
    if tree is None:
        idx = brute_force_neighbors(X, x, delta)
    else:
        cand = np.asarray(tree.query_ball_point(x, np.sqrt(delta) * (1 + 1e-9)), dtype=int)
        if cand.size:
            cand = cand[np.sum((X[cand] - x) ** 2, axis=1) < delta]
        idx = np.sort(cand)
    return NeighborSet(query=x, delta=float(delta), indices=idx, filtered=False)


# -- self-tuning spectral clustering ----------------------------------------------

def self_tuning_affinity(P: np.ndarray, k: int = SCALE_NEIGHBOR) -> np.ndarray:
    """exp(-d_ij^2 / (s_i s_j)) with s_i the distance to the k-th neighbor."""
    kk = min(k, len(P) - 1)
    s = cKDTree(P).query(P, k=kk + 1)[0][:, kk]  # column 0 is the point itself
    inv = 1.0 / np.where(s > 0, s, np.finfo(float).tiny)
    A = cdist(P, P, "sqeuclidean")
    A *= -inv[:, None]
    A *= inv[None, :]
    np.exp(A, out=A)
    np.fill_diagonal(A, 0.0)
    return A


def _rotation_cost(Z: np.ndarray) -> float:
    Z2 = Z ** 2
    return float((Z2 / Z2.max(axis=1, keepdims=True)).sum())


def _givens(theta: np.ndarray, c: int) -> np.ndarray:
    S = np.zeros((c, c))
    S[np.triu_indices(c, 1)] = theta
    return expm(S - S.T)


def align_eigenvectors(V: np.ndarray) -> tuple[float, np.ndarray]:
    """Rotate the columns of V toward one dominant entry per row.

    Returns the alignment quality in [1/C, 1] (1 is perfect block structure)
    and the rotated matrix.
    """
    n, c = V.shape
    theta0 = np.zeros(c * (c - 1) // 2)
    res = minimize(lambda t: _rotation_cost(V @ _givens(t, c)), theta0, method="Nelder-Mead",
                   options={"xatol": 1e-7, "fatol": 1e-10, "maxiter": 400 * c * c})
    Z = V @ _givens(res.x, c)
    quality = 1.0 - (_rotation_cost(Z) / n - 1.0) / c
    return quality, Z


def _single_cluster_certified(L: np.ndarray, deg: np.ndarray) -> bool:
    """True when no cluster count can pass the eigengap gate.

    Every gap 1 - lambda is at most 2, so a split needs 1 - lambda_2 <= 2 / EIGENGAP_RATIO.
    The top eigenpair of L is known (1, sqrt(deg)); with it deflated, tau I - L is
    positive definite exactly when lambda_2 < tau, which a Cholesky factorization
    decides at a fraction of the cost of the eigensolve.
    """
    tau = 1.0 - 2.0 / EIGENGAP_RATIO
    u = np.sqrt(deg) / np.linalg.norm(np.sqrt(deg))
    M = np.outer(u, u)
    M -= L
    M[np.diag_indices_from(M)] += tau
    try:
        cholesky(M, lower=True, overwrite_a=True, check_finite=False)
    except LinAlgError:
        return False
    return True


def _is_sparse(L: np.ndarray) -> bool:
    n = len(L)
    return n >= _CERTIFY_MIN and np.count_nonzero(L > _NEGLIGIBLE) < _SPARSE_DENSITY * n * n


def _top_eigenpairs(L: np.ndarray, count: int, sparse: bool) -> tuple[np.ndarray, np.ndarray]:
    """The ``count`` largest eigenpairs of L, in decreasing order.

    Elongated candidate sets (curves, thin strips) give a nearly banded affinity.
    There, shift-invert Lanczos just above the top eigenvalue 1 is several times
    faster than the dense solver. Dropped entries are below 1e-17, so eigenvalues
    move by far less than the smallest gap the gate resolves.
    """
    n = len(L)
    if sparse and count < n - 1:
        try:
            w, V = eigsh(csc_matrix(np.where(L > _NEGLIGIBLE, L, 0.0)), k=count, sigma=1.0 + 1e-3,
                         which="LM", tol=0)
        except RuntimeError:  # ARPACK failure or a singular shifted factorization
            pass
        else:
            order = np.argsort(w)[::-1]
            return w[order], V[:, order]
    w, V = eigh(L, subset_by_index=[n - count, n - 1])
    return w[::-1], V[:, ::-1]


def self_tuning_clusters(P: np.ndarray, max_clusters: int = MAX_CLUSTERS,
                         k: int = SCALE_NEIGHBOR) -> tuple[np.ndarray, int]:
    """Cluster labels for the rows of P and the chosen cluster count.

    A cluster count C > 1 is admissible only when the normalized affinity
    has C near-unit eigenvalues separated by a clear eigengap; among the
    admissible counts the rotation-alignment quality picks the winner
    (ties go to the larger count).
    """
    n = len(P)
    A = self_tuning_affinity(P, k)
    deg = A.sum(axis=1)
    deg = np.where(deg > 0, deg, np.finfo(float).tiny)
    isd = 1.0 / np.sqrt(deg)
    L = A
    L *= isd[:, None]
    L *= isd[None, :]
    c_top = min(max_clusters + 1, n)
    if n >= _CERTIFY_MIN and _single_cluster_certified(L, deg):
        return np.zeros(n, dtype=int), 1
    w, V = _top_eigenpairs(L, c_top, _is_sparse(L))
    gaps = np.maximum(1.0 - w, _GAP_FLOOR)
    admissible = [c for c in range(2, c_top) if gaps[c] / gaps[c - 1] >= EIGENGAP_RATIO]
    if not admissible:
        return np.zeros(n, dtype=int), 1
    fits = {c: align_eigenvectors(V[:, :c]) for c in admissible}
    q_best = max(q for q, _ in fits.values())
    c = max(c for c, (q, _) in fits.items() if q >= q_best - 1e-3)
    return np.argmax(fits[c][1] ** 2, axis=1), c


def true_neighbors(ds, x, delta: float, tree: cKDTree | None = None,
                   base: NeighborSet | None = None, min_size: int = MIN_CLUSTER_SIZE) -> NeighborSet:
    """Euclidean neighbors restricted to the spectral cluster containing x."""
    X = _points(ds)
    x = np.asarray(x, dtype=float).reshape(-1)
    nb = base if base is not None else euclidean_neighbors(X, x, delta, tree)
    idx = nb.indices
    own = np.flatnonzero(np.all(X[idx] == x, axis=1))
    P = X[idx] if own.size else np.vstack([X[idx], x])
    if len(P) < min_size:
        return nb
    labels, c = self_tuning_clusters(P)
    if c == 1:
        return nb
    mine = labels[own[0]] if own.size else labels[-1]
    keep = idx[labels[: len(idx)] == mine]
    return NeighborSet(query=x, delta=nb.delta, indices=keep, filtered=True, n_clusters=c)
