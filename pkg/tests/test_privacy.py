from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lifelong_dp.exceptions import ConfigurationError, ParameterError
from lifelong_dp.privacy import (GAUSSIAN_BASELINE_GRID, BudgetReport, NoiseBundle,
                                 PrivacyConfig, compute_sensitivities, draw_noise,
                                 gaussian_baseline_config, laplace_cdf, laplace_sample,
                                 lifelong_budget, lifelong_budget_exact, naive_budget)


def test_laplace_variance_and_ks():
    x = laplace_sample(1.0, 10**6, np.random.default_rng(0))
    assert 1.9 <= x.var() <= 2.1
    assert stats.kstest(x, laplace_cdf).statistic < 0.002


def test_laplace_mean_half_scale():
    x = laplace_sample(0.5, 10**6, np.random.default_rng(1))
    assert abs(x.mean()) < 0.01


def test_laplace_deterministic():
    a = laplace_sample(1.0, 5, np.random.default_rng(7))
    b = laplace_sample(1.0, 5, np.random.default_rng(7))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("scale", [0.0, -1.0, float("nan")])
def test_laplace_rejects_bad_scale(scale):
    with pytest.raises(ParameterError):
        laplace_sample(scale, 3, np.random.default_rng(0))


def test_laplace_cdf_matches_scipy():
    x = np.linspace(-6, 6, 101)
    assert np.allclose(laplace_cdf(x, 1.5), stats.laplace.cdf(x, scale=1.5), atol=1e-15)


@pytest.mark.parametrize("args, expected", [
    ((4, 3, 5, 100), (20.0, 10.0, 0.2, 0.4)),
    ((1, 1, 1, 1), (3.0, 2.0, 3.0, 6.0)),
])
def test_sensitivity_examples(args, expected):
    s = compute_sensitivities(*args, PrivacyConfig(0.1, 0.1))
    assert (s.delta_R, s.delta_L, s.gamma_x, s.gamma) == pytest.approx(expected, rel=1e-15)


def test_sensitivity_large_input():
    # 784 * (128 + 2) = 101920; 101920 / 128 = 796.25
    s = compute_sensitivities(784, 128, 128, 128, PrivacyConfig(0.1, 0.1))
    assert s.delta_R == 101920.0
    assert s.gamma_x == 796.25


@pytest.mark.parametrize("bad", [(0, 3, 5, 100), (4, 0, 5, 100), (4, 3, 0, 100), (4, 3, 5, 0)])
def test_sensitivity_rejects_zero_dims(bad):
    with pytest.raises(ParameterError):
        compute_sensitivities(*bad, PrivacyConfig(0.1, 0.1))


def test_norm_bound_scales_gamma():
    s = compute_sensitivities(4, 3, 5, 100, PrivacyConfig(0.1, 0.1, theta1_column_norm_bound=4))
    assert s.gamma == pytest.approx(0.1)


def test_worked_budget():
    cfg = PrivacyConfig(0.1, 0.1)
    s = compute_sensitivities(4, 3, 5, 100, cfg)
    assert lifelong_budget(s, cfg, 5).total_epsilon == pytest.approx(0.95, abs=1e-15)
    assert lifelong_budget_exact("0.1", "0.1", 4, 3, 100) == Fraction(19, 20)


def test_budget_independent_of_task_count():
    cfg = PrivacyConfig(0.1, 0.1)
    s = compute_sensitivities(4, 3, 5, 100, cfg)
    reports = [lifelong_budget(s, cfg, m) for m in (1, 2, 5, 50)]
    assert len({r.total_epsilon for r in reports}) == 1
    assert len({r.per_component for r in reports}) == 1


@pytest.mark.parametrize("eps1", [0.0, -0.1])
def test_privacy_config_rejects_nonpositive_eps(eps1):
    with pytest.raises(ParameterError):
        PrivacyConfig(eps1, 0.1)


def test_naive_budget_examples():
    pairs = [(0.3, 0.2)] * 5
    assert naive_budget(pairs, "sum").total_epsilon == pytest.approx(2.5)
    assert naive_budget(pairs, "max").total_epsilon == pytest.approx(0.5)
    for mode in ("max", "sum"):
        assert naive_budget([(0.4, 0.0)], mode).total_epsilon == 0.4
    with pytest.raises(ParameterError):
        naive_budget([], "sum")
    with pytest.raises(ParameterError):
        naive_budget(pairs, "mean")


def test_naive_sum_grows_linearly():
    totals = [naive_budget([(0.3, 0.2)] * m, "sum").total_epsilon for m in range(1, 8)]
    assert np.allclose(np.diff(totals), 0.5)


def test_gaussian_grid():
    assert gaussian_baseline_config(4.0) == (2.2, 0.01)
    assert gaussian_baseline_config(7.0) == (1.7, 0.01)
    assert gaussian_baseline_config(10.0) == (1.4, 0.01)
    assert gaussian_baseline_config(5.0, override=(2.0, 0.1)) == (2.0, 0.1)
    with pytest.raises(ConfigurationError):
        gaussian_baseline_config(5.0)
    assert set(GAUSSIAN_BASELINE_GRID) == {4.0, 7.0, 10.0}


def test_draw_noise_scales(rng):
    cfg = PrivacyConfig(0.1, 0.2)
    s = compute_sensitivities(4, 3, 5, 1000, cfg)
    noise = draw_noise(4, 3, 5, s, cfg, np.random.default_rng(3))
    ref = np.random.default_rng(3)
    assert np.array_equal(noise.chi1, laplace_sample(200.0, 4, ref))
    assert np.array_equal(noise.chi2, laplace_sample(200.0, 3, ref))
    assert np.array_equal(noise.chi3, laplace_sample(50.0, 5, ref))
    assert noise.shape == (4, 3, 5)


def test_noise_bundle_read_only_and_digest():
    a = NoiseBundle(np.ones(3), np.zeros(2), np.arange(4.0))
    with pytest.raises(ValueError):
        a.chi1[0] = 5.0
    b = NoiseBundle(np.ones(3), np.zeros(2), np.arange(4.0))
    assert a.digest() == b.digest()
    assert a.digest() != NoiseBundle.zeros(3, 2, 4).digest()


def test_budget_report_csv():
    cfg = PrivacyConfig(0.1, 0.1)
    rep = lifelong_budget(compute_sensitivities(4, 3, 5, 100, cfg), cfg, 3)
    header, row = rep.to_csv().strip().split("\n")
    assert header.split(",")[0] == "total_epsilon"
    assert row.endswith("lifelong,3")
    assert isinstance(rep, BudgetReport)


@settings(max_examples=50, deadline=None)
@given(eps1=st.floats(1e-3, 10), eps2=st.floats(1e-3, 10), d=st.integers(1, 1000),
       h1=st.integers(1, 256), n=st.integers(1, 5000), bound=st.floats(0.1, 50),
       m=st.integers(1, 100))
def test_budget_formula_property(eps1, eps2, d, h1, n, bound, m):
    cfg = PrivacyConfig(eps1, eps2, theta1_column_norm_bound=bound)
    s = compute_sensitivities(d, h1, 3, n, cfg)
    rep = lifelong_budget(s, cfg, m)
    expected = eps1 + eps1 * n / (d * (h1 + 2)) + eps1 * n * bound / (2 * d * (h1 + 2)) + eps2
    assert rep.total_epsilon == pytest.approx(expected, rel=1e-12)
    assert rep.total_epsilon == lifelong_budget(s, cfg, 1).total_epsilon
