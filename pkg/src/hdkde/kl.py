"""Per-dimension KL divergence between the Gaussian density and its kernel estimate.

``(1/d) KL = (1/d) int rho log rho - f`` where ``f`` is the concentrated
free entropy: ``phi(1)`` while ``D(alpha, h) < 0`` and ``phi(m*)`` once the
estimator has condensed.

In the condensed phase stationarity in ``m`` pins ``Q(l_hat) = alpha``, so
``l_hat`` and ``l = u_G`` do not depend on ``h`` and the KL reduces to
``alpha - <log lam>/2 - f(u*) + log u*/2 + log h + f(u_G/h^2)`` with
``u* = 1`` for every gamma-kernel.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional

from . import _numerics
from .errors import DomainError, PreconditionError
from .gaussian_theory import (
    _psi,
    big_d,
    conjugate_at_rate,
    distance_of_conjugate,
    phi,
)
from .kernels import GammaKernel
from .phase_diagram import h_g as _h_g
from .phase_diagram import m_star as _m_star
from .spectral import SpectralDensity

_HALF_LOG_2PI_E = 0.5 * (math.log(2.0 * math.pi) + 1.0)


class Phase(str, enum.Enum):
    RS = "RS"
    RSB = "RSB"


@dataclass(frozen=True)
class KLCurvePoint:
    h: float
    dkl_per_d: float
    phase: Phase
    m_used: float
    gamma: float = 1.0


def neg_entropy_per_d(spectrum: SpectralDensity) -> float:
    """``(1/d) int rho log rho = -log(2 pi e)/2 - <log lam>/2``."""
    return -_HALF_LOG_2PI_E - 0.5 * spectrum.mean_log


def dkl(alpha: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity) -> KLCurvePoint:
    """Leading-order ``(1/d) KL(rho || rho_hat_h)``."""
    if not (alpha > 0.0 and h > 0.0):
        raise DomainError("alpha and h must be positive")
    if big_d(alpha, h, kernel, spectrum) <= 0.0:
        f = phi(alpha, h, 1.0, kernel, spectrum)
        return KLCurvePoint(h, neg_entropy_per_d(spectrum) - f, Phase.RS, 1.0, kernel.gamma)
    m = _m_star(alpha, h, kernel, spectrum, check_precondition=False)
    f = phi(alpha, h, m, kernel, spectrum)
    return KLCurvePoint(h, neg_entropy_per_d(spectrum) - f, Phase.RSB, m, kernel.gamma)


def kl_curve(alpha: float, h_grid: Iterable[float], kernel: GammaKernel,
             spectrum: SpectralDensity) -> list[KLCurvePoint]:
    return [dkl(alpha, float(h), kernel, spectrum) for h in h_grid]


def u_star(kernel: GammaKernel) -> float:
    """Root of ``2 f'(u) u = 1`` (equal to 1 for every gamma-kernel)."""
    return _numerics.bisect_root(lambda u: 2.0 * kernel.f_prime(u) * u - 1.0, 1e-6, 1e6,
                                 xtol=1e-15)


def dkl_condensed_closed_form(alpha: float, h: float, kernel: GammaKernel,
                              spectrum: SpectralDensity, check_precondition: bool = True) -> float:
    """Condensed-phase KL written through ``u*`` and the ``h``-independent ``(l, l_hat)``."""
    if check_precondition:
        hg = _h_g(alpha, kernel, spectrum)
        if not h < hg:
            raise PreconditionError(f"closed form needs h < h_g = {hg:.10g}, got {h!r}")
    us = u_star(kernel)
    l = distance_of_conjugate(conjugate_at_rate(alpha, spectrum), spectrum)
    return (alpha - 0.5 * spectrum.mean_log + 0.5 * math.log(us) - kernel.f(us)
            + math.log(h) + kernel.f(l / (h * h)))


def dkl_variational(l: float, l_hat: float, m: float, h: float, alpha: float,
                    kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    """KL as an explicit function of all four variational parameters.

    Stationary in each of ``(l, l_hat, m, h)`` at the optimal bandwidth.
    """
    h2 = h * h
    gbar = (m * kernel.c_gamma - m * math.log(h) + _psi(l_hat, spectrum)
            + 0.5 * l_hat * l - m * kernel.f(l / h2))
    return neg_entropy_per_d(spectrum) - ((1.0 - m) / m * alpha + gbar / m)


@dataclass(frozen=True)
class OptimalBandwidth:
    h_opt: float
    dkl_min_per_d: float
    l: float
    l_hat: float
    m: float
    h_g: float


class HOpt(NamedTuple):
    h_opt: float
    dkl_min_per_d: float


def optimal_bandwidth(alpha: float, kernel: GammaKernel,
                      spectrum: SpectralDensity) -> OptimalBandwidth:
    """Solve the closed optimality system.

    ``Q(l_hat) = alpha`` fixes ``l_hat``; ``l = L(l_hat)``; the ``h``
    condition ``(l/h^2) f'(l/h^2) = 1/2`` gives ``h = sqrt(l/u*)``; and the
    saddle equation gives ``m = l_hat h^2 / (2 f'(l/h^2))``.
    """
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    l_hat = conjugate_at_rate(alpha, spectrum)
    l = distance_of_conjugate(l_hat, spectrum)
    us = u_star(kernel)
    h = math.sqrt(l / us)
    m = l_hat * h * h / (2.0 * kernel.f_prime(us))
    dmin = alpha - 0.5 * spectrum.mean_log + 0.5 * math.log(l)
    hg = _h_g(alpha, kernel, spectrum)
    if not h < hg:
        raise PreconditionError(f"optimal bandwidth {h!r} is not below h_g = {hg!r}")
    return OptimalBandwidth(h, dmin, l, l_hat, m, hg)


def h_opt(alpha: float, kernel: GammaKernel, spectrum: SpectralDensity) -> HOpt:
    res = optimal_bandwidth(alpha, kernel, spectrum)
    return HOpt(res.h_opt, res.dkl_min_per_d)


def minimize_dkl_curve(alpha: float, kernel: GammaKernel, spectrum: SpectralDensity,
                       h_lo: Optional[float] = None, h_hi: Optional[float] = None) -> HOpt:
    """Direct numerical minimization of :func:`dkl` over ``h``; a cross-check."""
    s = math.sqrt(spectrum.mean)
    lo = 0.05 * s if h_lo is None else h_lo
    hi = _h_g(alpha, kernel, spectrum) if h_hi is None else h_hi
    h = _numerics.golden_max(lambda x: -dkl(alpha, x, kernel, spectrum).dkl_per_d, lo, hi,
                             xtol=1e-9)
    return HOpt(h, dkl(alpha, h, kernel, spectrum).dkl_per_d)


def curve_rows(points: Iterable[KLCurvePoint]) -> list[dict]:
    return [{"h": p.h, "dkl_per_d": p.dkl_per_d, "phase": p.phase.value, "m_used": p.m_used}
            for p in points]
