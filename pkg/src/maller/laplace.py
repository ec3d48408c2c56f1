"""Graph operators approximating the Laplace-Beltrami operator and their spectra.

Three constructions are provided: the kernel random walk A = D^{-1} W with
L0 = (A - I)/h, the density-normalized L1, and Lp = (Ap - I)/h where Ap
stacks the local-linear smoothing rows at the sample points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .data import Dataset
from .kernels import Kernel, default_kernel, kernel_moment
from .llr import Maller

ROW_SUM_TOL = {"A": 1e-12, "Ap": 1e-9, "L0": 1e-8, "L1": 1e-8, "Lp": 1e-8}


class OperatorBuildError(RuntimeError):
    def __init__(self, row: int, cause: Exception):
        super().__init__(f"smoothing row {row} failed: {cause}")
        self.row = row


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class OperatorMatrix:
    kind: str
    h: float
    matrix: np.ndarray
    h_pca: float | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def row_sum_error(self) -> float:
        target = 1.0 if self.kind in ("A", "Ap") else 0.0
        return float(np.max(np.abs(self.matrix.sum(axis=1) - target)))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # complex, descending real part
    eigenvectors: np.ndarray
    multiplicity_clusters: list[list[int]]
    residuals: np.ndarray
    scale: float = 1.0

    @property
    def cluster_sizes(self) -> list[int]:
        return [len(c) for c in self.multiplicity_clusters]

    def cluster_medians(self) -> list[float]:
        re = self.eigenvalues.real
        return [float(np.median(re[c])) for c in self.multiplicity_clusters]

    def cluster_ids(self) -> np.ndarray:
        ids = np.empty(len(self.eigenvalues), dtype=int)
        for k, c in enumerate(self.multiplicity_clusters):
            ids[c] = k
        return ids


def _points(ds) -> np.ndarray:
    return ds.predictors if isinstance(ds, Dataset) else np.atleast_2d(np.asarray(ds, dtype=float))


def kernel_weights(ds, h: float, kernel: Kernel | None = None) -> np.ndarray:
    X = _points(ds)
    kernel = kernel or default_kernel()
    return kernel(cdist(X, X) / np.sqrt(h))


def build_random_walk(ds, h: float, kernel: Kernel | None = None) -> tuple[OperatorMatrix, OperatorMatrix]:
    """A = D^{-1} W and L0 = (A - I) / h."""
    W = kernel_weights(ds, h, kernel)
    A = W / W.sum(axis=1, keepdims=True)
    L0 = (A - np.eye(len(A))) / h
    return OperatorMatrix("A", h, A), OperatorMatrix("L0", h, L0)


def build_density_normalized(ds, h: float, kernel: Kernel | None = None) -> OperatorMatrix:
    """L1 = (D1^{-1} W1 - I) / h with W1 = D^{-1} W D^{-1}."""
    W = kernel_weights(ds, h, kernel)
    q = 1.0 / W.sum(axis=1)
    W1 = W * q[:, None] * q[None, :]
    P = W1 / W1.sum(axis=1, keepdims=True)
    return OperatorMatrix("L1", h, (P - np.eye(len(P))) / h)


def build_maller_operator(ds: Dataset, h: float, h_pca: float, d: int, kernel: Kernel | None = None,
                          model: Maller | None = None) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Ap with row i the smoothing row at X_i, and Lp = (Ap - I) / h."""
    model = model or Maller(ds, d, h_pca=h_pca, kernel=kernel)
    n = model.n
    Ap = np.zeros((n, n))
    for i in range(n):
        try:
            sm = model.smoother(h=h, index=i)
        except Exception as exc:
            raise OperatorBuildError(i, exc) from exc
        Ap[i, sm.indices] = sm.hat[0]
    Lp = (Ap - np.eye(n)) / h
    return OperatorMatrix("Ap", h, Ap, h_pca), OperatorMatrix("Lp", h, Lp, h_pca)


def laplacian_scale(d: int, kernel: Kernel | None = None) -> float:
    """2d / mu_{1,2} for the kernel normalized to mu_{1,0} = 1."""
    k = (kernel or default_kernel()).normalized_for(d)
    return 2.0 * d / kernel_moment(k, 1, 2, d)


def empirical_laplacian_scale(model: Maller, Ap: OperatorMatrix) -> float:
    """2d / median_i c_i, with c_i = (Lp q_i)(i) for q_i = |B_i^T (X - X_i)|^2.

    q_i has Laplacian 2d in the tangent plane, so c_i is the discrete
    counterpart of mu_{1,2}; it tends to the kernel moment as n h^{d/2} grows
    but also accounts for the weight each row puts on its own sample.
    """
    X = model.X
    c = np.empty(model.n)
    for i in range(model.n):
        B = model.frame(index=i).basis
        row = Ap.matrix[i]
        nz = np.flatnonzero(row)
        t = (X[nz] - X[i]) @ B
        c[i] = row[nz] @ np.einsum("ij,ij->i", t, t) / Ap.h
    return 2.0 * model.d / float(np.median(c))


def group_eigenvalues(values, rel_gap: float = 0.15, floor: float = 1.0) -> list[list[int]]:
    """Split a descending sequence where a consecutive drop exceeds rel_gap * max(|value|, floor)."""
    re = np.asarray(values).real
    if re.size == 0:
        return []
    clusters = [[0]]
    for k in range(1, re.size):
        if re[k - 1] - re[k] > rel_gap * max(abs(re[k]), abs(re[k - 1]), floor):
            clusters.append([])
        clusters[-1].append(k)
    return clusters


def assign_to_reference(values, reference, frac: float = 0.25) -> np.ndarray:
    """Index of the reference value each eigenvalue falls near, or -1.

    A value matches reference r_j when within ``frac`` of the spacing to the
    neighboring reference values.
    """
    ref = np.asarray(reference, dtype=float)
    re = np.asarray(values).real
    spacing = np.abs(np.diff(ref))
    out = np.full(re.size, -1)
    for k, v in enumerate(re):
        j = int(np.argmin(np.abs(ref - v)))
        side = spacing[j - 1] if (v > ref[j] and j > 0) or j == len(ref) - 1 else spacing[min(j, len(spacing) - 1)]
        if abs(v - ref[j]) <= frac * side:
            out[k] = j
    return out


def spectrum(op: OperatorMatrix, k: int, scale: float = 1.0, rel_gap: float = 0.15,
             residual_tol: float = 1e-6) -> SpectrumReport:
    """k eigenpairs of scale * op.matrix with the largest real parts (dense solver)."""
    n = op.n
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    M = scale * op.matrix
    w, V = scipy.linalg.eig(M)
    order = np.argsort(-w.real, kind="stable")[:k]
    w, V = w[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    resid = np.linalg.norm(M @ V - V * w, axis=0)
    if np.any(resid > residual_tol * max(1.0, np.abs(w).max())):
        raise EigenSolverError(f"eigenpair residuals too large: {resid.max():.3g}")
    return SpectrumReport(eigenvalues=w, eigenvectors=V, multiplicity_clusters=group_eigenvalues(w, rel_gap),
                          residuals=resid, scale=scale)


def sphere_eigenvalues(d: int, levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Laplace-Beltrami eigenvalues -l(l+d-1) of S^d and their multiplicities."""
    from math import comb

    l = np.arange(levels)
    mult = np.array([comb(d + j, d) - (comb(d + j - 2, d) if j >= 2 else 0) for j in l])
    return -l * (l + d - 1.0), mult


def write_spectrum_csv(path, report: SpectrumReport) -> None:
    ids = report.cluster_ids()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "real", "imag", "cluster_id", "residual"])
        for i, (lam, r) in enumerate(zip(report.eigenvalues, report.residuals)):
            w.writerow([i, repr(float(lam.real)), repr(float(lam.imag)), int(ids[i]), repr(float(r))])


SCALE_MODES = ("empirical", "asymptotic", "raw")


@dataclass(frozen=True)
class OperatorSpectrum:
    """Spectrum of Lp together with every normalization, for reporting."""

    report: SpectrumReport
    raw_eigenvalues: np.ndarray
    scales: dict
    scale_mode: str
    row_sum_error: float


def maller_spectrum(ds: Dataset, d: int, h: float, h_pca: float, k: int, scale_mode: str = "empirical",
                    kernel: Kernel | None = None, rel_gap: float = 0.15) -> OperatorSpectrum:
    """Build Lp on ``ds`` and return its k leading eigenpairs in the chosen units.

    ``empirical`` divides by the operator's own second moment (see
    :func:`empirical_laplacian_scale`), ``asymptotic`` by the kernel moment
    2d / mu_{1,2}, and ``raw`` leaves Lp unscaled.
    """
    if scale_mode not in SCALE_MODES:
        raise ValueError(f"scale_mode must be one of {SCALE_MODES}")
    model = Maller(ds, d, h_pca=h_pca, kernel=kernel)
    Ap, Lp = build_maller_operator(ds, h, h_pca, d, kernel, model=model)
    scales = {"raw": 1.0, "asymptotic": laplacian_scale(d, kernel), "empirical": empirical_laplacian_scale(model, Ap)}
    report = spectrum(Lp, k, scales[scale_mode], rel_gap=rel_gap)
    return OperatorSpectrum(report=report, raw_eigenvalues=report.eigenvalues / scales[scale_mode], scales=scales,
                            scale_mode=scale_mode, row_sum_error=Lp.row_sum_error())


def leading_nontrivial_mode(report: SpectrumReport, coords: np.ndarray) -> np.ndarray:
    """Direction orthogonal to constants within the two leading eigenvectors.

    On an interval Lp annihilates both constants and linear functions, so the
    leading eigenspace is two dimensional and the individual eigenvectors are
    only defined up to mixing; this picks the non-constant direction and signs
    it to correlate positively with ``coords``.
    """
    Q = np.real(report.eigenvectors[:, :2])
    Q, _ = np.linalg.qr(Q)
    ones = np.ones(Q.shape[0]) / np.sqrt(Q.shape[0])
    c = ones @ Q
    u = Q @ np.array([-c[1], c[0]])
    u = u - ones * (ones @ u)
    u /= np.linalg.norm(u)
    if np.dot(u, coords - coords.mean()) < 0:
        u = -u
    return u
