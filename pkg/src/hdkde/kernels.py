"""The gamma-kernel family ``K(x) = exp(d [c - f(|x|^2/d)])`` with ``f(u) = u**gamma / (2 gamma)``.

Kernel values are exposed in the log domain: at d in the hundreds the
kernel itself under- or overflows double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

_LOG_2PI = math.log(2.0 * math.pi)
# exp() stays finite below this (log of the largest double is ~709.78)
_EXP_CLAMP = 700.0


def c_gamma(gamma: float) -> float:
    """Large-d normalization constant ``-(log(2 pi) + 1 - 1/gamma) / 2``."""
    if not gamma >= 1.0:
        raise DomainError(f"gamma must be >= 1, got {gamma!r}")
    return -0.5 * (_LOG_2PI + 1.0 - 1.0 / gamma)


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0.0) or np.any(np.isnan(arr)):
        raise DomainError("scaled squared distance must be non-negative")
    return arr


def f_gamma(u, gamma: float):
    """Rate function ``u**gamma / (2 gamma)``; accepts scalars or arrays."""
    arr = _check_u(u)
    out = np.power(arr, gamma) / (2.0 * gamma)
    return float(out) if out.ndim == 0 else out


def f_gamma_prime(u, gamma: float):
    """``u**(gamma - 1) / 2``."""
    arr = _check_u(u)
    out = 0.5 * np.power(arr, gamma - 1.0)
    return float(out) if out.ndim == 0 else out


def f_gamma_second(u, gamma: float):
    arr = _check_u(u)
    if gamma == 1.0:
        out = np.zeros_like(arr)
    else:
        out = 0.5 * (gamma - 1.0) * np.power(arr, gamma - 2.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GammaKernel:
    """A gamma-kernel; ``gamma = 1`` is the Gaussian kernel."""

    gamma: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.gamma, (int, float)) and self.gamma >= 1.0):
            raise DomainError(f"gamma must be a real number >= 1, got {self.gamma!r}")
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def c_gamma(self) -> float:
        return c_gamma(self.gamma)

    def f(self, u):
        return f_gamma(u, self.gamma)

    def f_prime(self, u):
        return f_gamma_prime(u, self.gamma)

    def f_second(self, u):
        return f_gamma_second(u, self.gamma)


def log_kernel(u, h: float, d: int, kernel: GammaKernel):
    """``log K((x - y)/h)`` as a function of ``u = |x - y|^2 / d``.

    Returns ``d * (c_gamma - f(u / h^2))``. The ``-d log h`` volume factor
    of the estimator is *not* included.
    """
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")
    if d < 1:
        raise DomainError(f"dimension must be >= 1, got {d!r}")
    arr = _check_u(u)
    out = d * (kernel.c_gamma - np.power(arr / (h * h), kernel.gamma) / (2.0 * kernel.gamma))
    return float(out) if out.ndim == 0 else out


def kernel_value(u, h: float, d: int, kernel: GammaKernel):
    """Exponentiated :func:`log_kernel`, clamped to stay finite.

    Diagnostic use only; values whose log exceeds +-700 are saturated.
    """
    lk = np.clip(np.asarray(log_kernel(u, h, d, kernel)), -_EXP_CLAMP, _EXP_CLAMP)
    out = np.exp(lk)
    return float(out) if out.ndim == 0 else out


def log_mass(d: int, kernel: GammaKernel) -> float:
    """Exact ``log of the integral of K over R^d`` at finite d.

    Zero for the Gaussian kernel at every d. For ``gamma > 1`` it is
    ``O(log d)``, i.e. ``O(log d / d)`` per dimension, because ``c_gamma``
    is the large-d constant.
    """
    g = kernel.gamma
    if g == 1.0:
        return 0.0
    half = 0.5 * d
    # integral of s^(d/2-1) exp(-d s^g / (2g)) ds = Gamma(d/(2g)) / (g * (d/(2g))^(d/(2g)))
    radial = gammaln(half / g) - math.log(g) - (half / g) * math.log(d / (2.0 * g))
    return d * kernel.c_gamma + half * math.log(math.pi * d) - gammaln(half) + radial
