"""Generalized random energy model: ``n = e^(alpha d)`` iid energies with
``P(eps) ~ exp(-d I(eps))`` and partition function ``Z = sum_i exp(-d beta eps_i)``.

The kernel estimator at a fixed query point is an instance with
``eps_i = f(|x - y_i|^2 / (d h^2))`` (see :func:`kde_rem_spec`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.interpolate import CubicSpline
from scipy.special import gammaln, log_ndtr, ndtri_exp

from . import _numerics
from .errors import BracketError, DomainError, ResourceCapError
from .rng import generator

N_CAP = 2 ** 26
K_EXACT = 1024
_CHUNK = 2 ** 20
_REM_TAG = 0x5E3


@dataclass(frozen=True)
class RemSpec:
    """Rate function ``I`` (with derivative), level density exponent ``alpha``, size ``d``.

    ``eps_typ`` is the zero of ``I``; it is located numerically if omitted.
    ``domain`` bounds the energies (``I`` may diverge at a finite edge).
    """

    rate: Callable[[float], float]
    rate_prime: Callable[[float], float]
    alpha: float
    d: int = 100
    beta: float = 1.0
    eps_typ: Optional[float] = None
    domain: tuple[float, float] = (-math.inf, math.inf)
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise DomainError(f"alpha must be positive, got {self.alpha!r}")
        if self.d < 1:
            raise DomainError(f"d must be >= 1, got {self.d!r}")
        if not self.beta > 0.0:
            raise DomainError(f"beta must be positive, got {self.beta!r}")
        if self.eps_typ is None:
            object.__setattr__(self, "eps_typ", _find_zero_of_derivative(self))

    @classmethod
    def gaussian(cls, alpha: float, d: int = 100, beta: float = 1.0) -> "RemSpec":
        """``I(eps) = eps^2``: energies ``N(0, 1/(2d))``."""
        return cls(lambda e: e * e, lambda e: 2.0 * e, alpha, d, beta, eps_typ=0.0,
                   label="gaussian")

    @classmethod
    def from_table(cls, eps: Sequence[float], values: Sequence[float], alpha: float,
                   d: int = 100, beta: float = 1.0) -> "RemSpec":
        """Rate function tabulated on a grid, interpolated by a cubic spline."""
        eps = np.asarray(eps, dtype=float)
        spline = CubicSpline(eps, np.asarray(values, dtype=float))
        deriv = spline.derivative()
        return cls(lambda e: float(spline(e)), lambda e: float(deriv(e)), alpha, d, beta,
                   domain=(float(eps[0]), float(eps[-1])), label="table")

    @property
    def n(self) -> float:
        return math.exp(self.alpha * self.d)


def _toward(edge: float, origin: float, k: int) -> float:
    """Point at distance ``2^k`` from ``origin`` toward ``edge``, never past it."""
    step = 2.0 ** k
    if math.isfinite(edge):
        return origin + (edge - origin) * (1.0 - 2.0 ** (-k - 1))
    return origin + math.copysign(step, edge - origin)


def _find_zero_of_derivative(spec: RemSpec) -> float:
    lo, hi = spec.domain
    start = 0.0 if lo < 0.0 < hi else 0.5 * (lo + hi)
    if spec.rate_prime(start) == 0.0:
        return start
    edge = lo if spec.rate_prime(start) > 0 else hi
    for k in range(60):
        x = _toward(edge, start, k)
        if np.sign(spec.rate_prime(x)) != np.sign(spec.rate_prime(start)):
            a, b = sorted((start, x))
            return _numerics.bisect_root(spec.rate_prime, a, b, xtol=1e-15)
    raise BracketError("rate function has no stationary point", (lo, hi))


def _root_toward(func, origin: float, edge: float) -> float:
    """Root of ``func`` between ``origin`` and ``edge`` (sign change assumed)."""
    f0 = func(origin)
    for k in range(80):
        x = _toward(edge, origin, k)
        fx = func(x)
        if np.sign(fx) != np.sign(f0):
            a, b = sorted((origin, x))
            return _numerics.bisect_root(func, a, b, xtol=1e-15)
    raise BracketError("no root found", tuple(sorted((origin, edge))))


@dataclass(frozen=True)
class RemAnalysis:
    eps0: float
    eps1: float
    beta_c: float
    condensed: bool
    phi: float
    m_star: float
    eps_tilde: Optional[float]


def analyze(spec: RemSpec) -> RemAnalysis:
    """Band edges, condensation temperature, and ``lim (1/d) log Z``."""
    def excess(e):
        return spec.alpha - spec.rate(e)

    lo, hi = spec.domain
    et = spec.eps_typ
    eps0 = _root_toward(excess, et, lo)
    eps1 = _root_toward(excess, et, hi)
    beta_c = -spec.rate_prime(eps0)
    m = beta_c / spec.beta
    if spec.beta > beta_c:
        return RemAnalysis(eps0, eps1, beta_c, True, -spec.beta * eps0, m, None)
    eps_t = _root_toward(lambda e: spec.rate_prime(e) + spec.beta, et, lo)
    value = spec.alpha - spec.rate(eps_t) - spec.beta * eps_t
    return RemAnalysis(eps0, eps1, beta_c, False, value, m, eps_t)


def _eps_bar(spec: RemSpec, m: float) -> float:
    return _root_toward(lambda e: spec.rate_prime(e) + m * spec.beta, spec.eps_typ,
                        spec.domain[0])


def phi_rem(spec: RemSpec, m: float) -> float:
    """``(alpha + g(m)) / m`` with ``g(m) = sup_eps [-I(eps) - m beta eps]``."""
    if not m > 0.0:
        raise DomainError(f"m must be positive, got {m!r}")
    e = _eps_bar(spec, m)
    return (spec.alpha - spec.rate(e) - m * spec.beta * e) / m


def dphi_rem_dm(spec: RemSpec, m: float) -> float:
    """``(I(eps_bar(m)) - alpha) / m^2``."""
    e = _eps_bar(spec, m)
    return (spec.rate(e) - spec.alpha) / (m * m)


def rem_m_star(spec: RemSpec) -> float:
    """Stationary point of ``phi_rem`` by bisection on its derivative."""
    hi = _numerics.expand_until(lambda m: dphi_rem_dm(spec, m) > 0.0, 1.0)
    lo = 1.0
    while dphi_rem_dm(spec, lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-12:
            raise BracketError("m* below 1e-12", (lo, hi))
    return _numerics.bisect_root(lambda m: dphi_rem_dm(spec, m), lo, hi, xtol=1e-14)


def condensation_threshold(rate: Callable[[float], float], rate_prime: Callable[[float], float],
                           beta: float = 1.0, eps_typ: float = 0.0,
                           domain: tuple[float, float] = (-math.inf, math.inf)) -> float:
    """Level exponent ``alpha_c`` at which ``-I'(eps0) = beta``.

    ``eps0`` at threshold solves ``I'(eps0) = -beta``; then ``alpha_c = I(eps0)``.
    """
    e = _root_toward(lambda x: rate_prime(x) + beta, eps_typ, domain[0])
    return rate(e)


def participation_ratios(m_star: float, k: int) -> float:
    """Mean participation ratio ``E[Y_k] = Gamma(k - m)/(Gamma(k) Gamma(1 - m))``."""
    if not 0.0 < m_star < 1.0:
        raise DomainError(f"m* must lie in (0, 1), got {m_star!r}")
    if k < 2 or int(k) != k:
        raise DomainError(f"k must be an integer >= 2, got {k!r}")
    return math.exp(gammaln(k - m_star) - gammaln(k) - gammaln(1.0 - m_star))


def participation_ratios_alt(m_star: float, k: int) -> float:
    """Alternative display ``Gamma(k - m)/(Gamma(k) Gamma(m))``; kept for adjudication only."""
    if not 0.0 < m_star < 1.0:
        raise DomainError(f"m* must lie in (0, 1), got {m_star!r}")
    return math.exp(gammaln(k - m_star) - gammaln(k) - gammaln(m_star))


# ---------------------------------------------------------------------------
# samplers

@dataclass(frozen=True)
class GaussianEnergies:
    """Energies ``N(center, scale^2)``; ``scale = 1/sqrt(2d)`` realises ``I = eps^2``."""

    scale: float
    center: float = 0.0

    @classmethod
    def for_spec(cls, spec: RemSpec) -> "GaussianEnergies":
        if spec.label != "gaussian":
            raise DomainError("GaussianEnergies.for_spec needs a Gaussian RemSpec")
        return cls(1.0 / math.sqrt(2.0 * spec.d))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.center + self.scale * rng.standard_normal(size)

    def lowest(self, rng: np.random.Generator, n: float, k: int) -> np.ndarray:
        """Exact joint law of the ``k`` smallest of ``n`` draws, ascending.

        Uses ``U_(j) = S_j / S_(n+1)`` with ``S`` partial sums of unit
        exponentials; ``S_(n+1) - S_k`` is a single Gamma(n + 1 - k) draw.
        """
        k = int(min(k, n))
        s = np.cumsum(rng.standard_exponential(k))
        total = s[-1] + (rng.standard_gamma(n + 1.0 - k) if n > k else 0.0)
        log_u = np.log(s) - math.log(total)
        return self.center + self.scale * ndtri_exp(log_u)

    def log_partial_moment(self, c: float, above: float, count: float) -> float:
        """``log(count * E[exp(-c eps) | eps > above])``."""
        mu, sig = self.center, self.scale
        z0 = (above - mu) / sig
        return (math.log(count) - c * mu + 0.5 * (c * sig) ** 2
                + float(log_ndtr(-(z0 + c * sig))) - float(log_ndtr(-z0)))


# ---------------------------------------------------------------------------
# simulation

@dataclass(frozen=True, eq=False)
class RemSamples:
    """Per-trial output of :func:`simulate_rem`."""

    log_z_over_d: np.ndarray
    eps_min: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    entropy_per_d: Optional[np.ndarray]
    top_weights: np.ndarray
    lowest: Optional[np.ndarray]
    seed: int
    method: str
    n: float
    d: int
    alpha: float
    beta: float

    def rows(self) -> list[dict]:
        return [{"trial": i, "log_Z_over_d": float(self.log_z_over_d[i]),
                 "eps_min": float(self.eps_min[i]), "Y2": float(self.y2[i]),
                 "Y3": float(self.y3[i])} for i in range(self.log_z_over_d.size)]

    def metadata(self) -> dict:
        return {"seed": self.seed, "method": self.method, "n": self.n, "d": self.d,
                "alpha": self.alpha, "beta": self.beta}


class _Accumulator:
    """Streaming log-domain sums of ``z``, ``z eps``, ``z^2`` and ``z^3`` for ``z = exp(x)``."""

    def __init__(self):
        self.shift = -math.inf
        self.s0 = self.s1 = self.s2 = self.s3 = 0.0

    def add(self, x: np.ndarray, eps: np.ndarray):
        top = float(x.max())
        if top > self.shift:
            r = math.exp(self.shift - top) if math.isfinite(self.shift) else 0.0
            self.s0 *= r
            self.s1 *= r
            self.s2 *= r * r
            self.s3 *= r * r * r
            self.shift = top
        w = np.exp(x - self.shift)
        self.s0 += float(w.sum())
        self.s1 += float(np.dot(w, eps))
        w2 = w * w
        self.s2 += float(w2.sum())
        self.s3 += float(np.dot(w2, w))

    @property
    def log_z(self) -> float:
        return self.shift + math.log(self.s0)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return generator(seed, _REM_TAG, trial)


def _direct_trial(spec, sampler, rng, n: int, n_top: int):
    c = spec.d * spec.beta
    acc = _Accumulator()
    eps_min = math.inf
    best = np.empty(0)
    remaining = n
    while remaining > 0:
        size = min(_CHUNK, remaining)
        eps = sampler.sample(rng, size)
        remaining -= size
        acc.add(-c * eps, eps)
        eps_min = min(eps_min, float(eps.min()))
        part = np.partition(eps, min(n_top, size) - 1)[:n_top] if size > n_top else eps
        best = np.sort(np.concatenate([best, part]))[:n_top]
    log_z = acc.log_z
    y2 = acc.s2 / acc.s0 ** 2
    y3 = acc.s3 / acc.s0 ** 3
    mean_eps = acc.s1 / acc.s0
    entropy = (log_z + c * mean_eps) / spec.d
    weights = np.exp(-c * best - log_z)
    return log_z, eps_min, y2, y3, entropy, weights, best


def _extreme_trial(spec, sampler, rng, n: float, k: int, n_top: int):
    c = spec.d * spec.beta
    low = sampler.lowest(rng, n, k)
    x = -c * low
    log_top = float(np.logaddexp.reduce(x))
    if n > low.size:
        log_rest = sampler.log_partial_moment(c, float(low[-1]), n - low.size)
        log_z = float(np.logaddexp(log_top, log_rest))
    else:
        log_z = log_top
    p = np.exp(x - log_z)
    return log_z, float(low[0]), float(np.sum(p ** 2)), float(np.sum(p ** 3)), None, \
        p[:n_top], low


def simulate_rem(spec: RemSpec, sampler, trials: int, seed: int = 0, method: str = "auto",
                 k_exact: int = K_EXACT, n_cap: int = N_CAP, n_top: int = 8,
                 keep_lowest: bool = False) -> RemSamples:
    """Draw ``trials`` independent REM instances with ``n = round(e^(alpha d))`` levels.

    ``method="direct"`` draws every energy (refused above ``n_cap``).
    ``method="extreme"`` draws the ``k_exact`` lowest energies exactly and
    replaces the rest of the partition sum by its conditional mean; the
    entropy is then not available. ``"auto"`` picks direct when ``n``
    fits under ``k_exact`` levels or under the cap without a closed-form
    sampler, extreme otherwise.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    n = float(round(spec.n)) if spec.n < 2 ** 53 else spec.n
    if n < 1:
        raise DomainError(f"n = e^(alpha d) rounds to {n!r}")
    has_extreme = hasattr(sampler, "lowest") and hasattr(sampler, "log_partial_moment")
    if method == "auto":
        method = "extreme" if (has_extreme and n > k_exact) else "direct"
    if method == "direct" and n > n_cap:
        raise ResourceCapError(
            f"n = {n:.4g} levels per trial exceeds the cap of {n_cap}; lower d or alpha, "
            "or use the extreme-value sampler")
    if method == "extreme" and not has_extreme:
        raise DomainError("sampler does not support the extreme-value method")
    if method not in ("direct", "extreme"):
        raise DomainError(f"unknown method {method!r}")

    log_z = np.empty(trials)
    eps_min = np.empty(trials)
    y2 = np.empty(trials)
    y3 = np.empty(trials)
    ent = np.empty(trials) if method == "direct" else None
    top = np.zeros((trials, n_top))
    lows = []
    width = int(min(n, k_exact))
    for i in range(trials):
        rng = _trial_rng(seed, i)
        if method == "direct":
            out = _direct_trial(spec, sampler, rng, int(n), min(n_top, int(n)) if not keep_lowest
                                else width)
        else:
            out = _extreme_trial(spec, sampler, rng, n, k_exact, n_top)
        log_z[i], eps_min[i], y2[i], y3[i] = out[0], out[1], out[2], out[3]
        if ent is not None:
            ent[i] = out[4]
        w = out[5][:n_top]
        top[i, :w.size] = w
        if keep_lowest:
            lows.append(out[6][:width])
    return RemSamples(log_z / spec.d, eps_min, y2, y3, ent, top,
                      np.vstack(lows) if keep_lowest else None, seed, method, n, spec.d,
                      spec.alpha, spec.beta)


# ---------------------------------------------------------------------------
# extreme-value and tail diagnostics

@dataclass(frozen=True)
class GumbelFit:
    location: float
    rate: float
    ks_statistic: float
    ks_pvalue: float
    count: int


def gumbel_min_cdf(u, location: float, rate: float):
    """CDF of the rescaled minimum: ``1 - exp(-exp(rate (u - location)))``."""
    return -np.expm1(-np.exp(rate * (np.asarray(u) - location)))


def fit_gumbel_min(u: np.ndarray, rate: float) -> GumbelFit:
    """Location MLE at fixed ``rate`` and the KS distance to the fitted law."""
    u = np.asarray(u, dtype=float)
    top = float(u.max())
    loc = (top + math.log(np.mean(np.exp(rate * (u - top)))) / rate)
    res = stats.kstest(u, lambda v: gumbel_min_cdf(v, loc, rate))
    return GumbelFit(loc, rate, float(res.statistic), float(res.pvalue), int(u.size))


def level_tail_slope(lowest: np.ndarray, eps0: float, d: int, beta: float = 1.0,
                     z_min: float = 1.0, z_max: Optional[float] = None, bins: int = 20) -> float:
    """Log-log slope of the pooled level density of ``z = exp(-beta d (eps - eps0))``.

    Only the window ``z >= z_min`` is used; ``lowest`` must contain every
    level in that window for each trial.
    """
    z = np.exp(-beta * d * (np.asarray(lowest, dtype=float) - eps0)).ravel()
    z = z[z >= z_min]
    hi = z.max() if z_max is None else z_max
    edges = np.geomspace(z_min, hi, bins + 1)
    counts, _ = np.histogram(z, edges)
    widths = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    keep = counts >= 5
    slope, _ = np.polyfit(np.log(centers[keep]), np.log(counts[keep] / widths[keep]), 1,
                          w=np.sqrt(counts[keep]))
    return float(slope)


# ---------------------------------------------------------------------------
# kernel estimator seen as a REM

def kde_rem_spec(alpha: float, h: float, kernel, spectrum, d: int = 100) -> RemSpec:
    """REM whose levels are ``eps = f(u / h^2)`` with ``u`` the scaled squared distance.

    ``I(eps) = J(u(eps))`` with ``u(eps) = h^2 (2 gamma eps)^(1/gamma)``.
    The kernel free entropy then reads
    ``phi_kde(m) = -alpha + c_gamma - log h + phi_rem(m)``.
    """
    from .gaussian_theory import rate_derivative, rate_value, typical_distance

    g = kernel.gamma
    h2 = h * h

    def u_of(e):
        return h2 * (2.0 * g * e) ** (1.0 / g)

    def rate(e):
        return rate_value(u_of(e), spectrum)

    def rate_prime(e):
        du = h2 * 2.0 * (2.0 * g * e) ** (1.0 / g - 1.0)
        return rate_derivative(u_of(e), spectrum) * du

    eps_typ = kernel.f(typical_distance(spectrum) / h2)
    return RemSpec(rate, rate_prime, alpha, d, 1.0, eps_typ=eps_typ,
                   domain=(0.0, math.inf), label="kde")
