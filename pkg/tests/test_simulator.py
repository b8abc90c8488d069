import math

import numpy as np
import pytest

from hdkde import simulator as sim
from hdkde.errors import DomainError
from hdkde.gaussian_theory import distance_at_rate, typical_distance
from hdkde.kernels import GammaKernel, c_gamma
from hdkde.phase_diagram import m_star
from hdkde.rng import generator
from hdkde.spectral import SpectralDensity

ID = SpectralDensity.identity()
TWO = SpectralDensity.from_atoms([(0.5, 0.5), (1.5, 0.5)])
ALPHA_FIG = math.log(164) / 51


def fig_config(h, resamples, seed=0, threads=1):
    return sim.ExperimentConfig(d=51, n=164, h=h, num_datasets=resamples, seed=seed,
                                threads=threads)


def test_config_validation_and_alpha():
    c = sim.ExperimentConfig(d=51, n=164, h=1.0)
    assert c.alpha == pytest.approx(ALPHA_FIG)
    with pytest.raises(DomainError):
        sim.ExperimentConfig(d=10, n=10, h=0.0)
    with pytest.raises(DomainError):
        sim.ExperimentConfig(d=10, n=10, h=1.0, num_queries=0)
    with pytest.raises(DomainError):
        sim.ExperimentConfig(d=10, n=10, h=1.0, seed=-1)


def test_largest_remainder_allocation():
    v = sim.coordinate_variances(TWO, 100)
    assert np.count_nonzero(v == 0.5) == 50 and np.count_nonzero(v == 1.5) == 50
    three = SpectralDensity.from_atoms([(1.0, 0.45), (2.0, 0.35), (3.0, 0.2)])
    v = sim.coordinate_variances(three, 11)  # quotas 4.95, 3.85, 2.2
    assert [np.count_nonzero(v == lam) for lam in (1.0, 2.0, 3.0)] == [5, 4, 2]
    assert sim.coordinate_variances(three, 7).size == 7


def test_dataset_moments():
    c = sim.ExperimentConfig(d=50, n=4000, h=1.0, spectrum=TWO, seed=5)
    y = sim.sample_dataset(c)
    assert y.shape == (4000, 50)
    var = y.var(axis=0)
    lam = sim.coordinate_variances(TWO, 50)
    se = lam * math.sqrt(2 / 4000)
    assert np.all(np.abs(var - lam) < 4 * se)


def test_mean_vector_scaling():
    n, d, reps = 50, 40, 400
    vals = []
    for i in range(reps):
        y = sim.sample_dataset(sim.ExperimentConfig(d=d, n=n, h=1.0, seed=i))
        vals.append(np.sum(y.mean(axis=0) ** 2) / d)
    vals = np.array(vals)
    assert abs(vals.mean() - 1 / n) < 3 * vals.std(ddof=1) / math.sqrt(reps)


def test_dataset_reproducible():
    c = sim.ExperimentConfig(d=20, n=30, h=1.0, seed=9)
    assert sim.sample_dataset(c, 2).tobytes() == sim.sample_dataset(c, 2).tobytes()
    assert sim.sample_dataset(c, 2).tobytes() != sim.sample_dataset(c, 3).tobytes()


@pytest.mark.parametrize("gamma", [1.0, 2.0, 3.0])
def test_single_point_at_peak(gamma):
    k = GammaKernel(gamma)
    x = np.linspace(-1, 1, 30)
    h = 0.7
    assert sim.log_density_at(x, x[None, :], h, k) == pytest.approx(30 * (c_gamma(gamma) - math.log(h)),
                                                                    rel=1e-14)


def test_translation_invariance_and_batch():
    rng = generator(1, 2)
    y = rng.standard_normal((40, 25))
    q = rng.standard_normal((5, 25))
    shift = rng.standard_normal(25) * 3
    k = GammaKernel(2)
    base = sim.log_density_batch(q, y, 1.1, k)
    moved = sim.log_density_batch(q + shift, y + shift, 1.1, k)
    np.testing.assert_allclose(base, moved, rtol=1e-12, atol=1e-9)
    single = [sim.log_density_at(x, y, 1.1, k) for x in q]
    np.testing.assert_allclose(base, single, rtol=1e-12)


def test_log_domain_is_finite_at_large_d():
    rng = generator(3)
    d = 10_000
    y = rng.standard_normal((20, d))
    x = rng.standard_normal(d)
    v = sim.log_density_at(x, y, 0.3, GammaKernel(3))
    assert math.isfinite(v) and v < -1e4


def test_normalization_only_matters_above_gamma_one():
    rng = generator(4)
    y = rng.standard_normal((30, 40))
    x = rng.standard_normal(40)
    assert sim.log_density_at(x, y, 1.0, GammaKernel(1), normalize=True) == \
        sim.log_density_at(x, y, 1.0, GammaKernel(1))
    a = sim.log_density_at(x, y, 1.0, GammaKernel(2), normalize=True)
    b = sim.log_density_at(x, y, 1.0, GammaKernel(2))
    assert a != b and abs(a - b) < 1.0


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        sim.log_density_at(np.zeros(3), np.zeros((4, 5)), 1.0, GammaKernel())


# --- fluctuation studies -----------------------------------------------------

def test_fluctuation_study_fields_and_bounds():
    s = sim.fluctuation_study(fig_config(0.9, 5000))
    assert s.log_rho_over_d.shape == (5000,)
    assert np.all((s.y2 > 0) & (s.y2 <= 1)) and np.all((s.y3 > 0) & (s.y3 <= s.y2))
    assert s.typical_log_over_d == pytest.approx(s.log_rho_over_d.mean())
    assert np.all(s.log_rho_from_dmin_over_d <= s.log_rho_over_d + 1e-12)
    assert abs(np.mean(s.g)) < 1e-12 and np.std(s.g, ddof=1) == pytest.approx(1.0)
    assert s.annealed_exact_over_d is not None
    assert s.tail_exponent is not None and s.tail_exponent.count >= 200


def test_tail_fit_withheld_when_sample_small():
    s = sim.fluctuation_study(fig_config(0.9, 500))
    assert s.tail_exponent is None and not s.tail_reported


def test_fluctuation_study_bit_reproducible_across_threads():
    a = sim.fluctuation_study(fig_config(0.9, 2500, seed=3, threads=1))
    b = sim.fluctuation_study(fig_config(0.9, 2500, seed=3, threads=4))
    assert a.log_rho_over_d.tobytes() == b.log_rho_over_d.tobytes()
    assert a.y2.tobytes() == b.y2.tobytes()
    assert a.tail_exponent == b.tail_exponent


def test_exact_annealed_value_matches_resampling_at_large_h():
    # at h = 3 the mean of rho_hat (not of its log) is the N(0, 1 + h^2) density at x
    s = sim.fluctuation_study(fig_config(3.0, 4000))
    d = 51
    rho = np.exp(d * s.log_rho_over_d - d * s.annealed_exact_over_d)
    assert abs(rho.mean() - 1) < 4 * rho.std(ddof=1) / math.sqrt(rho.size)


def test_hill_fit_recovers_pareto_exponent():
    rng = generator(0)
    z = rng.pareto(0.5, 200_000) + 1.0
    fit = sim.hill_tail_fit(z)
    assert fit.ci_low < 0.5 < fit.ci_high
    assert fit.threshold == pytest.approx(max(np.quantile(z, 0.95), 3.0))
    assert sim.hill_tail_fit(z[:1000]) is None


@pytest.mark.xfail(strict=True, reason="g is skewed (~0.19) at d=51 (see README, known deviations)")
def test_clt_regime_moments_claim():
    s = sim.fluctuation_study(fig_config(3.0, 20_000))
    skew, kurt = sim.moments(s.g)
    assert abs(skew) < 0.1 and abs(kurt) < 0.1


@pytest.mark.xfail(strict=True, reason="finite-d drift of the tail exponent at d=51 (see README, known deviations)")
def test_tail_exponent_ci_across_h_claim():
    for h in (0.7, 0.9, 1.1):
        fit = sim.fluctuation_study(fig_config(h, 20_000)).tail_exponent
        ms = m_star(ALPHA_FIG, h, GammaKernel(), ID)
        assert fit.ci_low < ms < fit.ci_high


def test_moment_helpers():
    x = generator(10).standard_normal(50_000)
    skew, kurt = sim.moments(x)
    assert abs(skew) < 0.05 and abs(kurt) < 0.1
    assert sim.normality_pvalue(x) > 0.01
    assert sim.normality_pvalue(np.exp(x)) < 1e-10


# --- minimal distance ----------------------------------------------------------

def test_dmin_matches_exact_finite_d_oracle():
    st = sim.d_min_statistics(fig_config(0.9, 4000))
    exact = sim.expected_min_distance_identity(st.x_sq_over_d * 51, 51, 164)
    assert abs(st.mean - exact) < 3 * st.standard_error


def test_dmin_single_point_is_typical_distance():
    c = sim.ExperimentConfig(d=40, n=1, h=1.0, spectrum=TWO, num_datasets=4000)
    # average over query points too: the typical distance is an x-average
    vals = [sim.d_min_statistics(sim.ExperimentConfig(d=40, n=1, h=1.0, spectrum=TWO,
                                                      num_datasets=50, seed=s)).mean
            for s in range(80)]
    assert np.mean(vals) == pytest.approx(typical_distance(TWO), abs=4 * np.std(vals) / math.sqrt(80))
    st = sim.d_min_statistics(c)
    assert st.reconstruction_gap == pytest.approx(0.0, abs=1e-12)


def test_dmin_reconstruction_by_regime():
    cond = sim.d_min_statistics(fig_config(0.9, 2000))
    clt = sim.d_min_statistics(fig_config(3.0, 2000))
    assert 0 < cond.reconstruction_gap < 0.02
    assert clt.reconstruction_gap > cond.reconstruction_gap
    assert clt.reconstruction_gap > 0.05


@pytest.mark.xfail(strict=True, reason="d_min^2/d at d=51 is ~1.32, not u_G ~1.08 (see README, known deviations)")
def test_dmin_near_rate_root_claim():
    st = sim.d_min_statistics(fig_config(0.9, 2000))
    assert st.mean == pytest.approx(distance_at_rate(ALPHA_FIG, ID), abs=0.02)


def test_exact_dmin_oracle_single_point():
    # n = 1: E |x-y|^2/d = (|x|^2 + d lam)/d
    assert sim.expected_min_distance_identity(30.0, 40, 1) == pytest.approx((30 + 40) / 40, rel=1e-8)


# --- empirical KL and pairs ----------------------------------------------------

def test_empirical_kl_curve_consistent():
    c = sim.ExperimentConfig(d=60, n=400, h=1.2, num_queries=40, seed=2)
    ks = [GammaKernel(1), GammaKernel(2)]
    curve = sim.empirical_kl_curve(c, [0.8, 1.2, 1.6], ks)
    assert [(p.gamma, p.h) for p in curve] == [(g, h) for g in (1.0, 2.0) for h in (0.8, 1.2, 1.6)]
    single = sim.empirical_kl(c)
    assert single.dkl_per_d == curve[1].dkl_per_d
    assert all(p.standard_error > 0 and math.isfinite(p.dkl_per_d) for p in curve)
    assert sim.exact_neg_entropy_per_d(c) == pytest.approx(-0.5 * math.log(2 * math.pi * math.e))


def test_pair_average_reproducible():
    c = sim.ExperimentConfig(d=51, n=164, h=3.0, num_datasets=600, seed=4)
    a = sim.pair_average_study(c)
    b = sim.pair_average_study(sim.ExperimentConfig(d=51, n=164, h=3.0, num_datasets=600,
                                                    seed=4, threads=3))
    assert a.log_rho_over_d.tobytes() == b.log_rho_over_d.tobytes()
    assert a.mean == pytest.approx(a.log_rho_over_d.mean())
    assert np.all((a.y2 > 0) & (a.y2 <= 1))


def test_histograms():
    x = generator(12).standard_normal(5000)
    rows = sim.histogram_rows(x, bins=40)
    assert len(rows) == 40 and sum(r["count"] for r in rows) == 5000
    assert rows[0]["bin_right"] == rows[1]["bin_left"]
    assert abs(sim.histogram_mode(x, bins=40)) < 0.3
