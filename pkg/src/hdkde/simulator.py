"""Monte-Carlo experiments on the kernel density estimator at finite ``d``.

Work is cut into fixed units (a block of dataset resamples, or one query
point) and every unit draws from its own counter-based stream, so a run is
bit-reproducible for a given seed whatever the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import DomainError
from .gaussian_theory import big_d, g_bar
from .kernels import GammaKernel, log_mass
from .rng import generator
from .spectral import SpectralDensity

ELEMENT_BUDGET = 4_000_000
TAIL_QUANTILE = 0.95
TAIL_FLOOR = 3.0
TAIL_MIN_COUNT = 200

_TAG_QUERY = 11
_TAG_RESAMPLE = 12
_TAG_DATASET = 13
_TAG_KL_QUERY = 14


@dataclass(frozen=True)
class ExperimentConfig:
    d: int
    n: int
    h: float
    kernel: GammaKernel = field(default_factory=GammaKernel)
    spectrum: SpectralDensity = field(default_factory=SpectralDensity.identity)
    num_datasets: int = 1
    num_queries: int = 1
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise DomainError("d and n must be >= 1")
        if not self.h > 0.0:
            raise DomainError(f"bandwidth must be positive, got {self.h!r}")
        if self.num_datasets < 1 or self.num_queries < 1:
            raise DomainError("num_datasets and num_queries must be >= 1")
        if self.seed < 0:
            raise DomainError("seed must be non-negative")

    @property
    def alpha(self) -> float:
        return math.log(self.n) / self.d


def coordinate_variances(spectrum: SpectralDensity, d: int) -> np.ndarray:
    """Per-coordinate variances: atom ``i`` gets ``floor(w_i d)`` coordinates plus
    one more for the largest fractional remainders (ties broken by atom order)."""
    quota = spectrum.weights * d
    counts = np.floor(quota).astype(int)
    short = d - int(counts.sum())
    if short:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1
    return np.repeat(spectrum.eigenvalues, counts)


def _draw(rng: np.random.Generator, std: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    return rng.standard_normal(shape + (std.size,)) * std


def sample_dataset(config: ExperimentConfig, index: int = 0) -> np.ndarray:
    """Dataset ``index`` of the experiment: an ``(n, d)`` array drawn from ``N(0, C)``."""
    std = np.sqrt(coordinate_variances(config.spectrum, config.d))
    return _draw(generator(config.seed, _TAG_DATASET, index), std, (config.n,))


def sample_query(config: ExperimentConfig, index: int = 0) -> np.ndarray:
    std = np.sqrt(coordinate_variances(config.spectrum, config.d))
    return _draw(generator(config.seed, _TAG_QUERY, index), std, ())


def _log_terms(u: np.ndarray, h: float, d: int, kernel: GammaKernel) -> np.ndarray:
    """``log K_h`` for scaled squared distances ``u`` (without the ``-d log h``)."""
    return d * (kernel.c_gamma - np.power(u / (h * h), kernel.gamma) / (2.0 * kernel.gamma))


def _normalizer(n: int, d: int, h: float, kernel: GammaKernel, normalize: bool) -> float:
    off = -math.log(n) - d * math.log(h)
    if normalize:
        off -= log_mass(d, kernel)
    return off


def log_density_at(x: np.ndarray, dataset: np.ndarray, h: float, kernel: GammaKernel,
                   normalize: bool = False) -> float:
    """``log rho_hat(x) = -log n - d log h + logsumexp_i log K((x - y_i)/h)``.

    ``normalize=True`` also divides by the exact finite-d kernel mass, which
    differs from 1 for ``gamma > 1``.
    """
    x = np.asarray(x, dtype=float)
    dataset = np.atleast_2d(np.asarray(dataset, dtype=float))
    n, d = dataset.shape
    if x.shape != (d,):
        raise DomainError(f"query has shape {x.shape}, dataset has dimension {d}")
    if not h > 0.0:
        raise DomainError(f"bandwidth must be positive, got {h!r}")
    u = np.sum((dataset - x) ** 2, axis=1) / d
    return float(logsumexp(_log_terms(u, h, d, kernel))) + _normalizer(n, d, h, kernel, normalize)


def scaled_distances(queries: np.ndarray, dataset: np.ndarray) -> np.ndarray:
    """``|x_j - y_i|^2 / d`` for all pairs, shape ``(len(queries), len(dataset))``."""
    q = np.atleast_2d(queries)
    d = q.shape[1]
    sq = (np.sum(q * q, axis=1)[:, None] + np.sum(dataset * dataset, axis=1)[None, :]
          - 2.0 * q @ dataset.T)
    return np.maximum(sq, 0.0) / d


def log_density_batch(queries: np.ndarray, dataset: np.ndarray, h: float,
                      kernel: GammaKernel, normalize: bool = False) -> np.ndarray:
    n, d = dataset.shape
    u = scaled_distances(queries, dataset)
    return logsumexp(_log_terms(u, h, d, kernel), axis=1) + _normalizer(n, d, h, kernel, normalize)


# ---------------------------------------------------------------------------
# fluctuations at a fixed query point

@dataclass(frozen=True)
class TailFit:
    exponent: float
    ci_low: float
    ci_high: float
    threshold: float
    count: int


def hill_tail_fit(z: np.ndarray, quantile: float = TAIL_QUANTILE, floor: float = TAIL_FLOOR,
                  min_count: int = TAIL_MIN_COUNT) -> Optional[TailFit]:
    """Maximum-likelihood Pareto exponent of ``z`` above ``max(q_quantile, floor)``.

    Returns ``None`` when fewer than ``min_count`` samples exceed the threshold.
    """
    z = np.asarray(z, dtype=float)
    thr = max(float(np.quantile(z, quantile)), floor)
    tail = z[z > thr]
    k = tail.size
    if k < min_count:
        return None
    m = k / float(np.sum(np.log(tail / thr)))
    half = 1.96 * m / math.sqrt(k)
    return TailFit(m, m - half, m + half, thr, k)


@dataclass(frozen=True, eq=False)
class EmpiricalSummary:
    """Statistics of ``rho_hat(x)`` over dataset resamples at one query point."""

    log_rho_over_d: np.ndarray
    annealed_log_over_d: float
    annealed_exact_over_d: Optional[float]
    typical_log_over_d: float
    standard_error: float
    z: np.ndarray
    g: np.ndarray
    stable_l: np.ndarray
    tail_exponent: Optional[TailFit]
    y2: np.ndarray
    y3: np.ndarray
    d_min_sq_over_d: np.ndarray
    log_rho_from_dmin_over_d: np.ndarray
    x_sq_over_d: float
    config: ExperimentConfig

    @property
    def tail_reported(self) -> bool:
        return self.tail_exponent is not None

    @property
    def y_k(self) -> dict[int, float]:
        return {2: float(np.mean(self.y2)), 3: float(np.mean(self.y3))}

    def y_k_standard_error(self, k: int) -> float:
        arr = {2: self.y2, 3: self.y3}[k]
        return float(np.std(arr, ddof=1) / math.sqrt(arr.size))


def _resample_block(config: ExperimentConfig, x: np.ndarray, std: np.ndarray,
                    x_index: int, unit: int, size: int):
    rng = generator(config.seed, _TAG_RESAMPLE, x_index, unit)
    ys = _draw(rng, std, (size, config.n))
    d = config.d
    u = np.sum((ys - x) ** 2, axis=2) / d
    t = _log_terms(u, config.h, d, config.kernel)
    top = t.max(axis=1, keepdims=True)
    w = np.exp(t - top)
    s1 = w.sum(axis=1)
    s2 = np.sum(w * w, axis=1)
    s3 = np.sum(w * w * w, axis=1)
    lse = top[:, 0] + np.log(s1)
    log_sq = top[:, 0] + 0.5 * np.log(s2)
    return lse, log_sq, s2 / s1 ** 2, s3 / s1 ** 3, u.min(axis=1), top[:, 0]


def _units(total: int, per_unit: int) -> list[tuple[int, int]]:
    return [(i, min(per_unit, total - i * per_unit)) for i in range(-(-total // per_unit))]


def _gaussian_annealed_exact(x: np.ndarray, var: np.ndarray, h: float) -> float:
    """``(1/d) log E_D rho_hat(x)`` for the Gaussian kernel: the ``N(0, C + h^2)`` density."""
    s = var + h * h
    return float(-0.5 * np.mean(np.log(2.0 * math.pi * s)) - 0.5 * np.mean(x * x / s))


def fluctuation_study(config: ExperimentConfig, x_index: int = 0,
                      x: Optional[np.ndarray] = None) -> EmpiricalSummary:
    """Resample the dataset ``num_datasets`` times at one fixed query point."""
    d, n, h = config.d, config.n, config.h
    var = coordinate_variances(config.spectrum, d)
    std = np.sqrt(var)
    if x is None:
        x = sample_query(config, x_index)
    per_unit = max(1, ELEMENT_BUDGET // (n * d))
    units = _units(config.num_datasets, per_unit)

    def run(unit):
        return _resample_block(config, x, std, x_index, unit[0], unit[1])

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(run, units))
    else:
        parts = [run(u) for u in units]
    lse, log_sq, y2, y3, umin, top = (np.concatenate([p[i] for p in parts]) for i in range(6))

    off = -math.log(n) - d * math.log(h)
    log_rho = lse + off
    s = log_rho / d
    mean_s = math.fsum(s) / s.size
    se = float(np.std(s, ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.nan
    z = np.exp(log_rho - d * mean_s)

    # rescale before exponentiating: g is invariant under a common factor
    shift = float(log_rho.max())
    rho = np.exp(log_rho - shift)
    mean_rho = math.fsum(rho) / rho.size
    sd_rho = float(np.std(rho, ddof=1)) if rho.size > 1 else math.nan
    g = (rho - mean_rho) / sd_rho
    # phi(1) = g_bar(1) for every alpha, including n = 1
    annealed = g_bar(1.0, h, config.kernel, config.spectrum)
    if n > 1 and big_d(config.alpha, h, config.kernel, config.spectrum) > 0.0:
        stable = z
    else:
        norm2 = math.fsum(log_sq + off) / log_sq.size
        stable = (rho - mean_rho) * np.exp(shift - norm2)
    exact = _gaussian_annealed_exact(x, var, h) if config.kernel.gamma == 1.0 else None
    return EmpiricalSummary(
        log_rho_over_d=s, annealed_log_over_d=annealed, annealed_exact_over_d=exact,
        typical_log_over_d=mean_s, standard_error=se, z=z, g=g, stable_l=stable,
        tail_exponent=hill_tail_fit(z), y2=y2, y3=y3, d_min_sq_over_d=umin,
        log_rho_from_dmin_over_d=(top + off) / d, x_sq_over_d=float(np.mean(x * x)),
        config=config)


def moments(sample: np.ndarray) -> tuple[float, float]:
    """Skewness and excess kurtosis."""
    return float(stats.skew(sample)), float(stats.kurtosis(sample))


def normality_pvalue(sample: np.ndarray) -> float:
    """D'Agostino-Pearson omnibus test."""
    return float(stats.normaltest(sample).pvalue)


# ---------------------------------------------------------------------------
# minimal distance

@dataclass(frozen=True, eq=False)
class DminStatistics:
    d_min_sq_over_d: np.ndarray
    mean: float
    standard_error: float
    reconstruction_gap: float
    x_sq_over_d: float


def d_min_statistics(config: ExperimentConfig, x_index: int = 0) -> DminStatistics:
    """``min_i |x - y_i|^2 / d`` over resamples, and how well it alone predicts ``log rho_hat``.

    ``reconstruction_gap`` is the mean of ``(1/d) log rho_hat`` minus its
    single-term reconstruction ``(1/d) log[K_h(d_min)/(n h^d)]``; it is
    non-negative and small in the condensed regime.
    """
    summ = fluctuation_study(config, x_index)
    u = summ.d_min_sq_over_d
    gap = float(np.mean(summ.log_rho_over_d - summ.log_rho_from_dmin_over_d))
    se = float(np.std(u, ddof=1) / math.sqrt(u.size)) if u.size > 1 else math.nan
    return DminStatistics(u, float(np.mean(u)), se, gap, summ.x_sq_over_d)


def expected_min_distance_identity(x_sq: float, d: int, n: int, lam: float = 1.0) -> float:
    """Exact ``E min_i |x - y_i|^2 / d`` for ``y_i ~ N(0, lam I)`` at fixed ``|x|^2``.

    ``|x - y|^2 / lam`` is noncentral chi-square with ``d`` degrees of freedom
    and noncentrality ``|x|^2 / lam``; ``E min = int (1 - F)^n``.
    """
    from scipy import integrate

    dist = stats.ncx2(d, x_sq / lam)

    def surv_n(s):
        return math.exp(n * float(dist.logsf(s)))

    lo, mid = float(dist.ppf(1e-12 / n)), float(dist.ppf(0.5))
    val = lo + integrate.quad(surv_n, lo, mid, limit=500, epsabs=1e-12, epsrel=1e-12)[0]
    val += integrate.quad(surv_n, mid, np.inf, limit=200, epsabs=1e-12)[0]
    return val * lam / d


# ---------------------------------------------------------------------------
# empirical KL

@dataclass(frozen=True)
class EmpiricalKL:
    h: float
    gamma: float
    dkl_per_d: float
    standard_error: float


def exact_neg_entropy_per_d(config: ExperimentConfig) -> float:
    var = coordinate_variances(config.spectrum, config.d)
    return float(-0.5 * math.log(2.0 * math.pi * math.e) - 0.5 * np.mean(np.log(var)))


def _kl_inputs(config: ExperimentConfig):
    dataset = sample_dataset(config, 0)
    std = np.sqrt(coordinate_variances(config.spectrum, config.d))
    queries = _draw(generator(config.seed, _TAG_KL_QUERY), std, (config.num_queries,))
    return dataset, queries


def empirical_kl_curve(config: ExperimentConfig, h_grid: Sequence[float],
                       kernels: Sequence[GammaKernel], normalize: bool = True) -> list[EmpiricalKL]:
    """Held-out estimate of ``(1/d) KL`` for every ``(h, kernel)`` on one dataset.

    ``(1/d) KL = (1/d) int rho log rho - mean_j (1/d) log rho_hat(y_j)`` with
    fresh queries ``y_j ~ rho``; the standard error is over the queries.
    The distance matrix is computed once and shared across the grid.
    """
    dataset, queries = _kl_inputs(config)
    u = scaled_distances(queries, dataset)
    n, d = dataset.shape
    ent = exact_neg_entropy_per_d(config)
    out = []
    for kern in kernels:
        for h in h_grid:
            lr = (logsumexp(_log_terms(u, float(h), d, kern), axis=1)
                  + _normalizer(n, d, float(h), kern, normalize)) / d
            est = ent - math.fsum(lr) / lr.size
            se = float(np.std(lr, ddof=1) / math.sqrt(lr.size)) if lr.size > 1 else math.nan
            out.append(EmpiricalKL(float(h), kern.gamma, est, se))
    return out


def empirical_kl(config: ExperimentConfig, normalize: bool = True) -> EmpiricalKL:
    return empirical_kl_curve(config, [config.h], [config.kernel], normalize)[0]


# ---------------------------------------------------------------------------
# histograms

def histogram_rows(sample: np.ndarray, bins: int = 80,
                   range_: Optional[tuple[float, float]] = None) -> list[dict]:
    counts, edges = np.histogram(np.asarray(sample, dtype=float), bins=bins, range=range_)
    return [{"bin_left": float(edges[i]), "bin_right": float(edges[i + 1]),
             "count": int(counts[i])} for i in range(counts.size)]


def histogram_mode(sample: np.ndarray, bins: int = 80) -> float:
    counts, edges = np.histogram(np.asarray(sample, dtype=float), bins=bins)
    i = int(np.argmax(counts))
    return 0.5 * float(edges[i] + edges[i + 1])


# ---------------------------------------------------------------------------
# averaging over the query point as well

_TAG_PAIR = 15


@dataclass(frozen=True, eq=False)
class PairAverage:
    """``(1/d) log rho_hat(x)`` with a fresh query ``x`` for every dataset."""

    log_rho_over_d: np.ndarray
    mean: float
    standard_error: float
    y2: np.ndarray


def _pair_block(config: ExperimentConfig, std: np.ndarray, unit: int, size: int):
    rng = generator(config.seed, _TAG_PAIR, unit)
    xs = _draw(rng, std, (size, 1))
    ys = _draw(rng, std, (size, config.n))
    u = np.sum((ys - xs) ** 2, axis=2) / config.d
    t = _log_terms(u, config.h, config.d, config.kernel)
    top = t.max(axis=1, keepdims=True)
    w = np.exp(t - top)
    s1 = w.sum(axis=1)
    return top[:, 0] + np.log(s1), np.sum(w * w, axis=1) / s1 ** 2


def pair_average_study(config: ExperimentConfig) -> PairAverage:
    """Estimate ``(1/d) E_x E_D log rho_hat(x)`` from ``num_datasets`` independent pairs.

    The free entropy is an average over the query point too; at small ``d``
    a single fixed ``x`` carries an ``O(d^-1/2)`` offset through ``|x|^2/d``.
    """
    d, n, h = config.d, config.n, config.h
    std = np.sqrt(coordinate_variances(config.spectrum, d))
    per_unit = max(1, ELEMENT_BUDGET // ((n + 1) * d))
    units = _units(config.num_datasets, per_unit)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(lambda u: _pair_block(config, std, *u), units))
    else:
        parts = [_pair_block(config, std, *u) for u in units]
    lse = np.concatenate([p[0] for p in parts])
    y2 = np.concatenate([p[1] for p in parts])
    s = (lse - math.log(n) - d * math.log(h)) / d
    se = float(np.std(s, ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.nan
    return PairAverage(s, math.fsum(s) / s.size, se, y2)
