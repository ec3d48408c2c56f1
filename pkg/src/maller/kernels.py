"""Radial kernels with compact support on [0, 1] and their moments."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammaln


def _exp7(u):
    return np.exp(-7.0 * np.square(u))


def sphere_area(d: int) -> float:
    """Surface area |S^{d-1}| of the unit sphere in R^d."""
    return float(np.exp(np.log(2.0) + 0.5 * d * np.log(np.pi) - gammaln(0.5 * d)))


@dataclass(frozen=True)
class Kernel:
    """Radial profile K(u), zero for u > 1.

    ``scale`` multiplies the profile; it is 1 for unnormalized kernels and
    ``1 / mu_{1,0}`` once :meth:`normalized_for` has been applied.
    """

    profile: Callable[[np.ndarray], np.ndarray] = field(default=_exp7)
    name: str = "exp7"
    scale: float = 1.0
    normalized_dim: int | None = None

    @property
    def normalized(self) -> bool:
        return self.normalized_dim is not None

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError("kernel argument must be nonnegative")
        inside = u <= 1.0
        out = np.where(inside, self.profile(np.where(inside, u, 0.0)), 0.0)
        out = self.scale * out
        return float(out) if out.ndim == 0 else out

    def normalized_for(self, d: int) -> "Kernel":
        """Rescaled copy with mu_{1,0} = 1 over the unit ball of R^d."""
        base = replace(self, scale=1.0, normalized_dim=None)
        mass = kernel_moment(base, 1, 0, d)
        return replace(self, scale=1.0 / mass, normalized_dim=d)


def default_kernel() -> Kernel:
    """K(u) = exp(-7 u^2) on [0, 1], unnormalized."""
    return Kernel()


def indicator_kernel() -> Kernel:
    return Kernel(profile=np.ones_like, name="indicator")


def kernel_eval(kernel: Kernel, u: float) -> float:
    if u < 0:
        raise ValueError(f"kernel argument must be nonnegative, got {u}")
    return kernel(u)


def kernel_moment(kernel: Kernel, i: int, j: int, d: int) -> float:
    """mu_{i,j} = int_{|u|<=1} K(|u|)^i |u|^j du, reduced to a radial integral."""
    if i < 1 or j < 0 or d < 1:
        raise ValueError(f"invalid moment indices i={i}, j={j}, d={d}")
    radial, _ = integrate.quad(
        lambda t: kernel(t) ** i * t ** (j + d - 1), 0.0, 1.0, epsabs=1e-10, epsrel=1e-12, limit=200
    )
    return sphere_area(d) * radial
