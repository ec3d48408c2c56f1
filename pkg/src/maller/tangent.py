"""Local PCA estimate of the embedded tangent plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

DEFAULT_H_PCA = 0.015


class InsufficientNeighborsError(ValueError):
    def __init__(self, count: int, needed: int):
        super().__init__(f"local PCA needs at least {needed} neighbors, found {count}")
        self.count = count
        self.needed = needed


@dataclass(frozen=True)
class TangentFrame:
    x: np.ndarray
    basis: np.ndarray  # p x d, orthonormal columns
    h_pca: float
    n_local: int
    eigenvalues: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    def rotated(self, Q: np.ndarray) -> "TangentFrame":
        return TangentFrame(self.x, self.basis @ Q, self.h_pca, self.n_local, self.eigenvalues)


def _sign_fix(B: np.ndarray) -> np.ndarray:
    pivot = np.argmax(np.abs(B), axis=0)
    signs = np.sign(B[pivot, np.arange(B.shape[1])])
    signs[signs == 0] = 1.0
    return B * signs


def local_pca(neighbors: np.ndarray, x, d: int, h_pca: float, n_total: int | None = None) -> TangentFrame:
    """Top-d eigenvectors of the neighbor covariance (divided by ``n_total``).

    ``neighbors`` holds the true neighbors of x at bandwidth h_pca, one per row.
    """
    P = np.asarray(neighbors, dtype=float)
    x = np.asarray(x, dtype=float).reshape(-1)
    N, p = P.shape if P.ndim == 2 else (0, x.size)
    if d > p:
        raise ValueError(f"dimension {d} exceeds ambient dimension {p}")
    if N < d + 1:
        raise InsufficientNeighborsError(N, d + 1)
    n_total = N if n_total is None else n_total
    C = P - P.mean(axis=0)
    if p <= 3 * N:
        evals, evecs = np.linalg.eigh(C.T @ C / n_total)
        B = evecs[:, ::-1][:, :d]
        evals = evals[::-1]
    else:
        # p >> N: right singular vectors of the centered block
        _, s, Vt = np.linalg.svd(C, full_matrices=False)
        B = Vt[:d].T
        evals = s ** 2 / n_total
    return TangentFrame(x=x, basis=_sign_fix(B), h_pca=float(h_pca), n_local=N, eigenvalues=evals)


def tangent_coords(frame: TangentFrame, points) -> np.ndarray:
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[1] != frame.basis.shape[0]:
        raise ValueError(f"points have {P.shape[1]} columns, frame expects {frame.basis.shape[0]}")
    return (P - frame.x) @ frame.basis


def principal_angle(frame: TangentFrame, subspace: np.ndarray) -> float:
    """Largest principal angle (radians) between span(B_x) and ``subspace``."""
    return float(np.max(subspace_angles(frame.basis, np.asarray(subspace, dtype=float))))


def pca_bandwidth_rate(n: int, d: int, c: float = 1.0) -> float:
    """Theory-rate local PCA bandwidth c * n^{-2/(d+1)}."""
    return c * n ** (-2.0 / (d + 1))
