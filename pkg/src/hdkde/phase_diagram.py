"""Transition lines in the (alpha, h) plane and regime classification.

Three regimes of the estimator's fluctuations at fixed query point:

* ``CLT`` for ``h > h_clt``: Gaussian fluctuations around the annealed value.
* ``Intermediate`` for ``h_g < h < h_clt``: heavy-tailed fluctuations with
  tail index ``m* in (1, 2)``, still concentrated at the annealed value.
* ``Condensed`` for ``h < h_g``: a few data points dominate; the typical
  value ``phi(m*)`` with ``m* in (0, 1)`` lies below the annealed one.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import _numerics
from .errors import DomainError, PreconditionError
from .gaussian_theory import big_d, dphi_dm, g_bar, phi, solve_saddle
from .kernels import GammaKernel
from .spectral import SpectralDensity

H_XTOL = 1e-10
SCAN_DECADES = 3.0
SCAN_POINTS = 200
M_BRACKET = (1e-3, 2.0 - 1e-3)
M_FLOOR = 1e-200


class Regime(str, enum.Enum):
    CLT = "CLT"
    INTERMEDIATE = "Intermediate"
    CONDENSED = "Condensed"


@dataclass(frozen=True)
class PhasePoint:
    """Regime and concentrated free entropy at one ``(alpha, h)``."""

    alpha: float
    h: float
    regime: Regime
    m_star: Optional[float]
    D: float
    f: float
    h_clt: float
    h_g: float


def _check_alpha(alpha: float):
    if not (alpha > 0.0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be positive and finite, got {alpha!r}")


def _scale(spectrum: SpectralDensity) -> float:
    return math.sqrt(spectrum.mean)


def clt_gap(alpha: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    """``g_bar(2) - 2 g_bar(1) - alpha``; positive below the CLT line."""
    return g_bar(2.0, h, kernel, spectrum) - 2.0 * g_bar(1.0, h, kernel, spectrum) - alpha


def h_clt(alpha: float, kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    """Bandwidth at which the second moment of ``rho_hat`` stops being dominated by its mean."""
    _check_alpha(alpha)
    return _numerics.geometric_root(lambda h: clt_gap(alpha, h, kernel, spectrum),
                                    _scale(spectrum), SCAN_DECADES, SCAN_POINTS, H_XTOL)


def h_g(alpha: float, kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    """Condensation bandwidth: root of ``D(alpha, h) = 0``."""
    _check_alpha(alpha)
    return _numerics.geometric_root(lambda h: big_d(alpha, h, kernel, spectrum),
                                    _scale(spectrum), SCAN_DECADES, SCAN_POINTS, H_XTOL)


def m_star(alpha: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity,
           check_precondition: bool = True) -> float:
    """Root of ``d phi / d m`` in ``(0, 2)``; below 1 exactly when ``h < h_g``.

    Requires ``h < h_clt(alpha)``. Pass ``check_precondition=False`` to skip
    the extra root solve when the caller already knows it holds.
    """
    _check_alpha(alpha)
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")
    if check_precondition:
        hc = h_clt(alpha, kernel, spectrum)
        if not h < hc:
            raise PreconditionError(f"m* needs h < h_clt = {hc:.10g}, got h = {h!r}")

    def slope(m):
        return dphi_dm(alpha, h, m, kernel, spectrum)

    lo, hi = M_BRACKET
    # steep kernels at small h push m* below the starting bracket
    while lo > M_FLOOR and slope(lo) > 0.0:
        lo *= 1e-3
    return _numerics.bisect_root(slope, lo, hi, xtol=min(1e-14, 1e-12 * lo))


def dphi_dm_fd(alpha: float, h: float, m: float, kernel: GammaKernel,
               spectrum: SpectralDensity, eps: float = 1e-5) -> float:
    """Central finite difference of ``phi`` in ``m``; cross-check for :func:`dphi_dm`."""
    return (phi(alpha, h, m + eps, kernel, spectrum)
            - phi(alpha, h, m - eps, kernel, spectrum)) / (2.0 * eps)


def classify(alpha: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity,
             boundaries: Optional[tuple[float, float]] = None) -> PhasePoint:
    """Fill a :class:`PhasePoint`; ``boundaries=(h_clt, h_g)`` skips recomputing them."""
    _check_alpha(alpha)
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")
    if boundaries is None:
        hc, hg = h_clt(alpha, kernel, spectrum), h_g(alpha, kernel, spectrum)
    else:
        hc, hg = boundaries
    D = big_d(alpha, h, kernel, spectrum)
    f_annealed = phi(alpha, h, 1.0, kernel, spectrum, saddle=solve_saddle(1.0, h, kernel, spectrum))
    if h > hc:
        return PhasePoint(alpha, h, Regime.CLT, None, D, f_annealed, hc, hg)
    ms = m_star(alpha, h, kernel, spectrum, check_precondition=False)
    if h > hg:
        return PhasePoint(alpha, h, Regime.INTERMEDIATE, ms, D, f_annealed, hc, hg)
    return PhasePoint(alpha, h, Regime.CONDENSED, ms, D, phi(alpha, h, ms, kernel, spectrum), hc, hg)


def scott_wand_h(n: int, d: int, kernel_constants: tuple[float, float],
                 laplacian_l2: float) -> float:
    """Classical fixed-d AMISE bandwidth ``n^(-1/(d+4)) [c2 d / (kappa^2 R)]^(1/(d+4))``.

    ``kernel_constants = (c2, kappa)``, ``laplacian_l2`` is the integral of
    the squared Laplacian of the density.
    """
    c2, kappa = kernel_constants
    if n < 1 or d < 1:
        raise DomainError("n and d must be >= 1")
    if not (c2 > 0 and kappa > 0 and laplacian_l2 > 0):
        raise DomainError("kernel constants and the Laplacian norm must be positive")
    p = 1.0 / (d + 4)
    return n ** (-p) * (c2 * d / (kappa ** 2 * laplacian_l2)) ** p


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    h_clt: float
    h_g: float
    h_opt: Optional[float]

    def as_dict(self) -> dict:
        out = {"alpha": self.alpha, "h_clt": self.h_clt, "h_g": self.h_g}
        if self.h_opt is not None:
            out["h_opt"] = self.h_opt
        out["h_clt_sq"] = self.h_clt ** 2
        out["h_g_sq"] = self.h_g ** 2
        if self.h_opt is not None:
            out["h_opt_sq"] = self.h_opt ** 2
        return out


def sweep(alphas: Iterable[float], kernel: GammaKernel, spectrum: SpectralDensity,
          include_h_opt: bool = True, threads: int = 1) -> list[SweepRow]:
    """Both transition lines (and the optimal bandwidth) over an alpha grid."""
    from .kl import h_opt as _h_opt

    def row(a):
        hc = h_clt(a, kernel, spectrum)
        hg = h_g(a, kernel, spectrum)
        ho = _h_opt(a, kernel, spectrum).h_opt if include_h_opt else None
        return SweepRow(float(a), hc, hg, ho)

    alphas = list(alphas)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(row, alphas))
    return [row(a) for a in alphas]


def observed_monotonicity(values: Sequence[float]) -> str:
    """``"increasing"``, ``"decreasing"`` or ``"non-monotone"``."""
    diffs = [b - a for a, b in zip(values, values[1:])]
    if all(x > 0 for x in diffs):
        return "increasing"
    if all(x < 0 for x in diffs):
        return "decreasing"
    return "non-monotone"
