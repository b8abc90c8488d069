"""Large-d theory for a centered Gaussian density with covariance spectrum ``rho_C``.

Notation used throughout:

* ``u = |x - y|^2 / d`` for two independent draws ``x, y``.
* ``psi(t) = -1/2 <log(1 + t lam) + t lam / (1 + t lam)>`` is the quenched
  cumulant of ``-u/2``: ``psi(t) = lim (1/d) E_x log E_y exp(-t d u / 2)``.
* ``L(t) = -2 psi'(t) = <lam/(1 + t lam) + lam/(1 + t lam)^2>`` maps the
  conjugate variable to the scaled distance.
* ``J(u) = sup_t [-psi(t) - t u / 2]`` is the rate function of ``u``.
* ``Q(t) = J(L(t)) = 1/2 <log(1 + t lam) - t lam / (1 + t lam)^2>``.

``psi`` is convex in ``t`` (its second derivative is a positive spectral
average), so the inner sup defining ``J`` is a concave maximization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _numerics
from .errors import BracketError, ConvergenceError, DomainError
from .kernels import GammaKernel
from .spectral import SpectralDensity

DAMPING = 0.5
SADDLE_TOL = 1e-12
SADDLE_MAXITER = 10_000
DEFAULT_GRID_NODES = 512
DEFAULT_GRID_SPAN = (0.05, 1.5)


# ---------------------------------------------------------------------------
# cumulant function and its derivatives

def _t_floor(spectrum: SpectralDensity) -> float:
    """Lower end of the domain of ``psi``: ``1 + t lam_max > 0``."""
    return -1.0 / spectrum.max


def _check_t(t: float, spectrum: SpectralDensity):
    if not t > _t_floor(spectrum):
        raise DomainError(f"t={t!r} outside the domain t > {_t_floor(spectrum)!r}")


def _psi(t: float, spectrum: SpectralDensity) -> float:
    lam, w = spectrum.eigenvalues, spectrum.weights
    x = t * lam
    return -0.5 * float(np.dot(w, np.log1p(x) + x / (1.0 + x)))


def psi(t: float, spectrum: SpectralDensity) -> float:
    """Quenched cumulant ``psi(t)`` for ``t >= 0``."""
    if not t >= 0.0:
        raise DomainError(f"psi is defined here for t >= 0, got {t!r}")
    return _psi(float(t), spectrum)


def psi_extended(t: float, spectrum: SpectralDensity) -> float:
    """``psi`` continued to ``-1/lam_max < t < 0`` (needed for ``u > u_typ``)."""
    _check_t(t, spectrum)
    return _psi(float(t), spectrum)


def psi_prime(t: float, spectrum: SpectralDensity) -> float:
    _check_t(t, spectrum)
    return -0.5 * distance_of_conjugate(t, spectrum)


def psi_second(t: float, spectrum: SpectralDensity) -> float:
    _check_t(t, spectrum)
    lam, w = spectrum.eigenvalues, spectrum.weights
    a = 1.0 + t * lam
    return 0.5 * float(np.dot(w, lam * lam / a ** 2 + 2.0 * lam * lam / a ** 3))


def distance_of_conjugate(t: float, spectrum: SpectralDensity) -> float:
    """``L(t) = <lam/(1 + t lam) + lam/(1 + t lam)^2>``; strictly decreasing."""
    lam, w = spectrum.eigenvalues, spectrum.weights
    a = 1.0 + t * lam
    return float(np.dot(w, lam / a + lam / a ** 2))


def glass_function(t: float, spectrum: SpectralDensity) -> float:
    """``Q(t) = 1/2 <log(1 + t lam) - t lam/(1 + t lam)^2>``, equal to ``J(L(t))``.

    Increasing on ``t > 0`` from ``Q(0) = 0``.
    """
    lam, w = spectrum.eigenvalues, spectrum.weights
    x = t * lam
    return 0.5 * float(np.dot(w, np.log1p(x) - x / (1.0 + x) ** 2))


def typical_distance(spectrum: SpectralDensity) -> float:
    """``u_typ = 2 <lam>``, the zero of ``J``."""
    return 2.0 * spectrum.mean


# ---------------------------------------------------------------------------
# rate function

def _conjugate_bracket(u: float, spectrum: SpectralDensity) -> tuple[float, float]:
    """Interval of ``t`` on which the concave objective has its maximum.

    The objective's derivative is ``(L(t) - u)/2``; ``L`` is decreasing, so
    the maximizer sits where ``L`` crosses ``u``.
    """
    u_typ = typical_distance(spectrum)
    if u <= u_typ:
        hi = _numerics.expand_until(lambda t: distance_of_conjugate(t, spectrum) <= u, 1.0)
        return 0.0, hi
    floor = _t_floor(spectrum)
    frac = 0.5
    while distance_of_conjugate(floor * frac, spectrum) < u:
        frac = 0.5 * (1.0 + frac)
        if frac >= 1.0 - 1e-15:
            raise BracketError("distance too large for the conjugate domain", (floor, 0.0))
    return floor * frac, 0.0


def conjugate_of_distance(u: float, spectrum: SpectralDensity) -> float:
    """Maximizer ``t(u)`` of ``-psi(t) - t u / 2``, i.e. the root of ``L(t) = u``.

    Golden-section search on the concave objective, then Newton steps on
    the stationarity condition.
    """
    if not u > 0.0:
        raise DomainError(f"scaled distance must be positive, got {u!r}")
    lo, hi = _conjugate_bracket(u, spectrum)

    def objective(t):
        return -_psi(t, spectrum) - 0.5 * t * u

    t = _numerics.golden_max(objective, lo, hi, xtol=1e-10)
    for _ in range(50):
        resid = distance_of_conjugate(t, spectrum) - u
        slope = -2.0 * psi_second(t, spectrum)
        step = resid / slope
        t_new = t - step
        if not (lo <= t_new <= hi):
            t_new = 0.5 * (t + (lo if t_new < lo else hi))
        t = t_new
        if abs(step) <= 1e-15 * (1.0 + abs(t)):
            break
    resid = distance_of_conjugate(t, spectrum) - u
    if abs(resid) > 1e-9 * max(1.0, u):
        raise ConvergenceError(f"conjugate maximization failed at u={u!r}", abs(resid), 50)
    return float(t)


def rate_value(u: float, spectrum: SpectralDensity) -> float:
    """``J(u) = sup_t [-psi(t) - t u / 2]``."""
    t = conjugate_of_distance(u, spectrum)
    return max(-_psi(t, spectrum) - 0.5 * t * u, 0.0)


def rate_derivative(u: float, spectrum: SpectralDensity) -> float:
    """``J'(u) = -t(u) / 2`` by the envelope theorem."""
    return -0.5 * conjugate_of_distance(u, spectrum)


def distance_at_rate(alpha: float, spectrum: SpectralDensity) -> float:
    """Smallest ``u`` with ``J(u) = alpha``; below ``u_typ``."""
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    return distance_of_conjugate(conjugate_at_rate(alpha, spectrum), spectrum)


def conjugate_at_rate(alpha: float, spectrum: SpectralDensity) -> float:
    """Root ``t > 0`` of ``Q(t) = alpha``."""
    hi = _numerics.expand_until(lambda t: glass_function(t, spectrum) >= alpha, 1.0)
    return _numerics.bisect_root(lambda t: glass_function(t, spectrum) - alpha,
                                 0.0, hi, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True, eq=False)
class RateFunction:
    """Tabulated rate function of the scaled distance ``u``."""

    u: np.ndarray
    J: np.ndarray
    J_prime: np.ndarray
    t: np.ndarray
    u_typ: float
    u_G: Optional[float] = None
    alpha: Optional[float] = None

    def interpolate(self, u):
        return np.interp(u, self.u, self.J)


def default_u_grid(spectrum: SpectralDensity, nodes: int = DEFAULT_GRID_NODES) -> np.ndarray:
    u_typ = typical_distance(spectrum)
    lo, hi = DEFAULT_GRID_SPAN
    return np.geomspace(lo * u_typ, hi * u_typ, nodes)


def rate_function(spectrum: SpectralDensity, u_grid=None,
                  alpha: Optional[float] = None) -> RateFunction:
    """Tabulate ``J`` (and ``J'``) on ``u_grid``; also ``u_G`` when ``alpha`` is given."""
    grid = default_u_grid(spectrum) if u_grid is None else np.asarray(u_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0.0):
        raise DomainError("u_grid must be a non-empty 1-d array of positive values")
    ts = np.empty_like(grid)
    J = np.empty_like(grid)
    failures = []
    for i, u in enumerate(grid):
        try:
            ts[i] = conjugate_of_distance(float(u), spectrum)
        except (ConvergenceError, BracketError) as exc:
            failures.append(f"u={u!r}: {exc}")
            ts[i] = math.nan
            J[i] = math.nan
            continue
        J[i] = max(-_psi(ts[i], spectrum) - 0.5 * ts[i] * u, 0.0)
    if failures:
        raise ConvergenceError("rate function failed at %d node(s): %s"
                               % (len(failures), "; ".join(failures[:3])),
                               iterations=len(failures))
    u_g = distance_at_rate(alpha, spectrum) if alpha is not None else None
    return RateFunction(u=grid, J=J, J_prime=-0.5 * ts, t=ts,
                        u_typ=typical_distance(spectrum), u_G=u_g, alpha=alpha)


def conjugate_psi(t: float, spectrum: SpectralDensity, u_lo: float | None = None,
                  u_hi: float | None = None) -> float:
    """Recover ``psi(t) = -inf_u [J(u) + t u / 2]`` from the rate function alone.

    The minimization over ``u`` evaluates ``J`` pointwise and never uses the
    closed form of ``psi``; it is the second half of a Legendre round trip.
    """
    u_typ = typical_distance(spectrum)
    lo = 1e-3 * u_typ if u_lo is None else u_lo
    hi = 3.0 * u_typ if u_hi is None else u_hi
    best = _numerics.golden_max(lambda u: -(rate_value(u, spectrum) + 0.5 * t * u), lo, hi,
                                xtol=1e-12)
    return -(rate_value(best, spectrum) + 0.5 * t * best)


# ---------------------------------------------------------------------------
# saddle point

@dataclass(frozen=True)
class SaddleSolution:
    """Stationary pair ``(l, l_hat)`` at replica parameter ``m``."""

    l: float
    l_hat: float
    m: float
    h: float
    converged: bool
    residual: float
    iterations: int = 0
    method: str = "closed-form"


def _lhat_target(l: float, m: float, h: float, kernel: GammaKernel) -> float:
    """``2 (m/h^2) f'(l/h^2)``."""
    h2 = h * h
    return (m / h2) * (l / h2) ** (kernel.gamma - 1.0)


def saddle_residuals(l: float, l_hat: float, m: float, h: float, kernel: GammaKernel,
                     spectrum: SpectralDensity) -> tuple[float, float]:
    """Relative residuals of the two stationarity equations."""
    r1 = (l_hat - _lhat_target(l, m, h, kernel)) / max(1.0, abs(l_hat))
    r2 = (l - distance_of_conjugate(l_hat, spectrum)) / max(1.0, abs(l))
    return r1, r2


def _validate_mh(m: float, h: float):
    if not m > 0.0:
        raise DomainError(f"replica parameter m must be positive, got {m!r}")
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")


def solve_saddle(m: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity,
                 method: str = "auto", tol: float = SADDLE_TOL,
                 maxiter: int = SADDLE_MAXITER) -> SaddleSolution:
    """Solve ``l_hat = (m/h^2)(l/h^2)^(gamma-1)`` together with ``l = L(l_hat)``.

    ``method``: ``"auto"`` (closed form for gamma=1, else damped iteration
    with a bisection fallback), ``"iterate"`` or ``"bisect"``.
    The composed map ``l_hat -> target(L(l_hat))`` is non-increasing, so the
    fixed point is unique.
    """
    _validate_mh(m, h)
    if method not in ("auto", "iterate", "bisect"):
        raise DomainError(f"unknown saddle method {method!r}")
    if method == "auto" and kernel.gamma == 1.0:
        l_hat = m / (h * h)
        l = distance_of_conjugate(l_hat, spectrum)
        r = max(abs(x) for x in saddle_residuals(l, l_hat, m, h, kernel, spectrum))
        return SaddleSolution(l, l_hat, m, h, True, r, 0, "closed-form")

    def composed(lh):
        return _lhat_target(distance_of_conjugate(lh, spectrum), m, h, kernel)

    if method in ("auto", "iterate"):
        lh = composed(0.0)
        resid = math.inf
        for it in range(1, maxiter + 1):
            new = (1.0 - DAMPING) * lh + DAMPING * composed(lh)
            resid = abs(new - lh) / max(1.0, abs(new))
            lh = new
            if resid < tol:
                l = distance_of_conjugate(lh, spectrum)
                r = max(abs(x) for x in saddle_residuals(l, lh, m, h, kernel, spectrum))
                if r < 10 * tol:
                    return SaddleSolution(l, lh, m, h, True, r, it, "iterate")
        if method == "iterate":
            raise ConvergenceError("damped saddle iteration did not converge", resid, maxiter)

    def gap(lh):
        return lh - composed(lh)

    hi = _numerics.expand_until(lambda x: gap(x) >= 0.0, max(1.0, composed(0.0)))
    lh = _numerics.bisect_root(gap, 0.0, hi, xtol=1e-300, rtol=8.9e-16)
    l = distance_of_conjugate(lh, spectrum)
    r = max(abs(x) for x in saddle_residuals(l, lh, m, h, kernel, spectrum))
    if r > 1e-10:
        raise ConvergenceError("saddle bisection did not reach tolerance", r, 0)
    return SaddleSolution(l, lh, m, h, True, r, 0, "bisect")


# ---------------------------------------------------------------------------
# free entropy

def _gbar_from(sol: SaddleSolution, kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    m, h = sol.m, sol.h
    h2 = h * h
    return (m * kernel.c_gamma - m * math.log(h) + _psi(sol.l_hat, spectrum)
            + 0.5 * sol.l_hat * sol.l - m * kernel.f(sol.l / h2))


def g_bar(m: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity,
          saddle: Optional[SaddleSolution] = None) -> float:
    """``lim (1/d) E_x log E_y K_h(x - y)^m`` including the ``-m log h`` volume term.

    Evaluated as ``m c - m log h + sup_l [-J(l) - m f(l/h^2)]`` at the
    stationary point, where ``-J(l) = psi(l_hat) + l_hat l / 2``.
    """
    sol = saddle or solve_saddle(m, h, kernel, spectrum)
    return _gbar_from(sol, kernel, spectrum)


def phi(alpha: float, h: float, m: float, kernel: GammaKernel, spectrum: SpectralDensity,
        saddle: Optional[SaddleSolution] = None) -> float:
    """Replica free entropy ``(1 - m)/m * alpha + g_bar(m)/m``."""
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha!r}")
    sol = saddle or solve_saddle(m, h, kernel, spectrum)
    return (1.0 - m) / m * alpha + _gbar_from(sol, kernel, spectrum) / m


def phi_closed_form_gaussian(alpha: float, h: float, m: float,
                             spectrum: SpectralDensity) -> float:
    """Free entropy for the Gaussian kernel in closed form (no saddle solve)."""
    _validate_mh(m, h)
    lam, w = spectrum.eigenvalues, spectrum.weights
    h2 = h * h
    return ((1.0 - m) / m * (alpha + math.log(h)) - 0.5 * math.log(2.0 * math.pi)
            - 0.5 / m * float(np.dot(w, np.log(h2 + m * lam)))
            - 0.5 * float(np.dot(w, lam / (h2 + m * lam))))


def dphi_dm(alpha: float, h: float, m: float, kernel: GammaKernel,
            spectrum: SpectralDensity, saddle: Optional[SaddleSolution] = None) -> float:
    """``d phi / d m = (J(l) - alpha) / m^2`` with ``J(l) = Q(l_hat)``.

    Only the explicit ``m`` dependence contributes because ``(l, l_hat)``
    is stationary.
    """
    sol = saddle or solve_saddle(m, h, kernel, spectrum)
    return (glass_function(sol.l_hat, spectrum) - alpha) / (m * m)


def big_d(alpha: float, h: float, kernel: GammaKernel, spectrum: SpectralDensity) -> float:
    """``D(alpha, h) = d phi/d m`` at ``m = 1``; positive means condensed."""
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")
    sol = solve_saddle(1.0, h, kernel, spectrum)
    return glass_function(sol.l_hat, spectrum) - alpha
