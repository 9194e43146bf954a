import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthkit.distributions import DistSpec, derive_seed, sample
from depthkit.evt import (
    KPath,
    fit_evt,
    hill,
    k_path,
    moment_estimator,
    scale_estimator,
    select_k_stable,
    w_gamma,
)
from depthkit.exceptions import ConfigurationError, DegenerateDataError, DomainError

E = math.e
HAND = np.array([0.5, 1.0, E, E**2])


def test_hand_evaluated_estimators():
    assert hill(HAND, 2) == pytest.approx(1.5, rel=1e-14)
    assert moment_estimator(HAND, 2) == pytest.approx(-2.5, rel=1e-12)
    assert scale_estimator(HAND, 2) == pytest.approx(7.5, rel=1e-12)


def test_fit_bundles_threshold_and_estimates():
    fit = fit_evt(HAND, 2)
    assert fit.b_hat == 1.0
    assert fit.gamma_hat == pytest.approx(-2.5)
    assert fit.a_hat == pytest.approx(7.5)
    assert fit_evt(HAND, 2, "hill").gamma_hat == pytest.approx(1.5)
    with pytest.raises(ConfigurationError):
        fit_evt(HAND, 2, "pickands")


def test_order_of_input_is_irrelevant():
    shuffled = HAND[[2, 0, 3, 1]]
    assert hill(shuffled, 2) == hill(HAND, 2)
    assert moment_estimator(shuffled, 2) == moment_estimator(HAND, 2)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(0, 2**31 - 1),
    st.floats(0.01, 1000.0),
    st.integers(2, 40),
)
def test_scale_invariance(seed, c, k):
    x = np.abs(np.random.default_rng(seed).standard_cauchy(100)) + 1e-3
    assert hill(c * x, k) == pytest.approx(hill(x, k), rel=1e-12, abs=1e-14)
    assert moment_estimator(c * x, k) == pytest.approx(moment_estimator(x, k), rel=1e-12, abs=1e-12)
    assert scale_estimator(c * x, k) == pytest.approx(c * scale_estimator(x, k), rel=1e-12)


def test_fixed_constants_from_examples():
    x = np.abs(np.random.default_rng(0).standard_cauchy(200)) + 0.01
    assert hill(7.3 * x, 30) == pytest.approx(hill(x, 30), rel=1e-12)
    assert moment_estimator(3 * x, 30) == pytest.approx(moment_estimator(x, 30), rel=1e-12)
    assert scale_estimator(2 * x, 30) == pytest.approx(2 * scale_estimator(x, 30), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 100.0), min_size=5, max_size=60), st.data())
def test_hill_is_nonnegative(values, data):
    k = data.draw(st.integers(1, len(values) - 1))
    assert hill(values, k) >= 0.0


def test_hill_is_zero_on_tied_top_and_moment_degenerates():
    x = np.array([0.5, 2.0, 3.0, 3.0, 3.0, 3.0])
    assert hill(x, 3) == 0.0
    with pytest.raises(DegenerateDataError):
        moment_estimator(x, 3)
    with pytest.raises(DegenerateDataError):
        scale_estimator(x, 3)


def test_constant_log_excesses_are_degenerate_for_moment():
    x = np.array([1.0, 1.0, E, E])
    assert hill(x, 2) == pytest.approx(1.0)
    with pytest.raises(DegenerateDataError):
        moment_estimator(x, 2)


def test_domain_and_configuration_errors():
    with pytest.raises(DomainError):
        hill(np.array([-3.0, -1.0, 0.0, 1.0, 2.0]), 2)
    with pytest.raises(ConfigurationError):
        hill(HAND, 4)
    with pytest.raises(ConfigurationError):
        hill(HAND, 0)
    with pytest.raises(ConfigurationError):
        hill([1.0, 2.0], 1)


def test_w_gamma_examples():
    assert w_gamma(0.0, E**2) == pytest.approx(2.0, rel=1e-14)
    assert w_gamma(1.0, E**2) == pytest.approx(1 + E**-2, rel=1e-14)
    t = 1e8
    ratio = w_gamma(1.0, t) / math.log(t)
    assert 0.9 <= ratio <= 1.0


@pytest.mark.parametrize("t", [2.0, 10.0, 1e3])
def test_w_gamma_is_continuous_at_zero(t):
    base = w_gamma(0.0, t)
    for g in (1e-9, -1e-9):
        assert abs(w_gamma(g, t) - base) <= 1e-6
    # both branches agree where they meet
    for g in (0.0099, 0.0101, -0.0099, -0.0101):
        lt = math.log(t)
        closed = lt / g + math.expm1(-g * lt) / g**2
        assert w_gamma(g, t) == pytest.approx(closed, rel=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5.0, 5.0), st.floats(1.0001, 1e6))
def test_w_gamma_matches_quadrature_and_is_positive(g, t):
    from scipy.integrate import quad

    val = w_gamma(g, t)
    assert val > 0
    # substitute s = exp(u): t^-g * int_0^log t u exp(g u) du
    L = math.log(t)
    ref = quad(lambda u: u * math.exp(g * (u - L)), 0.0, L, epsabs=0, epsrel=1e-11, limit=200)[0]
    assert val == pytest.approx(ref, rel=1e-8)


def test_w_gamma_requires_t_above_one():
    with pytest.raises(ConfigurationError):
        w_gamma(0.5, 1.0)


def test_k_path_constant_when_weighted_spacings_are_constant():
    # Hill(k) = mean of i * (log X_{n-i+1:n} - log X_{n-i:n}) over i <= k,
    # so log-spacings of gamma / i make every Hill estimate equal gamma
    gamma, n = 0.7, 300
    logs = -gamma * np.cumsum(1.0 / np.arange(1, n))
    x = np.exp(np.concatenate([[0.0], logs]))
    path = k_path(x, "hill", 10, 120)
    assert np.allclose(path.gamma_hat, gamma, rtol=1e-12)


def test_k_path_agrees_with_pointwise_calls():
    x = np.abs(sample(DistSpec("cauchy1d"), 2000, 13).data.ravel())
    path = k_path(x, "hill", 10, 300)
    assert path.value_at(100) == hill(x, 100)
    for k, g in path.rows()[::37]:
        assert g == hill(x, k)
    mpath = k_path(x, "moment", 10, 300)
    for k, g in mpath.rows()[::41]:
        assert g == moment_estimator(x, k)
    assert len(path) == 300 - 10 + 1


def test_k_path_records_missing_entries():
    # the threshold is nonpositive for large k
    x = np.concatenate([-np.ones(30), np.linspace(1, 5, 30)])
    path = k_path(x, "hill", 5, 40)
    assert path.missing == list(range(30, 41))
    assert len(path) == 40 - 5 + 1 - len(path.missing)
    with pytest.raises(KeyError):
        path.value_at(35)


def test_k_path_bad_ranges():
    x = np.linspace(1, 2, 50)
    with pytest.raises(ConfigurationError):
        k_path(x, "hill", 20, 10)
    with pytest.raises(ConfigurationError):
        k_path(x, "hill", 1, 50)
    with pytest.raises(ConfigurationError):
        k_path(np.concatenate([-np.ones(45), np.ones(5)]), "hill", 10, 20)


def _path(ks, vals):
    return KPath(np.asarray(ks), np.asarray(vals, dtype=float), "hill")


def test_select_k_on_constructed_plateau():
    rng = np.random.default_rng(3)
    ks = np.arange(10, 200)
    vals = 1.0 + rng.normal(0, 0.3, ks.size)
    vals[(ks >= 50) & (ks <= 100)] = 0.8
    assert abs(select_k_stable(_path(ks, vals)) - 75) <= 2


def test_select_k_on_linear_path_takes_earliest_window():
    ks = np.arange(10, 100)
    assert select_k_stable(_path(ks, 0.01 * ks), window=15) == 17


def test_select_k_errors():
    ks = np.arange(10, 40)
    with pytest.raises(DegenerateDataError):
        select_k_stable(_path(ks, np.full(ks.size, np.nan)))
    with pytest.raises(ConfigurationError):
        select_k_stable(_path(ks, ks * 1.0), window=2)
    with pytest.raises(ConfigurationError):
        select_k_stable(_path(ks[:10], ks[:10] * 1.0), window=15)


def test_select_k_ignores_windows_across_gaps():
    ks = np.concatenate([np.arange(10, 20), np.arange(40, 80)])
    vals = np.concatenate([np.zeros(10), 0.5 + 0.001 * np.arange(40)])
    k = select_k_stable(_path(ks, vals), window=15)
    assert 40 <= k <= 80


PROTOCOL_FAMILIES = ["cauchy1d", "t2_1d", "burr1d", "sphcauchy2d", "sphcauchy3d"]


@pytest.mark.slow
@pytest.mark.parametrize("family", PROTOCOL_FAMILIES)
def test_selected_k_is_in_reported_range(family):
    n = 500
    inside = 0
    for seed in range(20):
        x = sample(DistSpec(family), n, derive_seed(seed, 0)).data
        norms = np.abs(x.ravel()) if x.shape[1] == 1 else np.linalg.norm(x, axis=1)
        est = "moment" if x.shape[1] == 1 else "hill"
        k = select_k_stable(k_path(norms, est, 10, int(0.3 * n)))
        inside += 30 <= k <= 150
    assert inside >= 16


@pytest.mark.slow
def test_monte_carlo_calibration():
    hills, moments, scales = [], [], []
    for seed in range(30):
        hills.append(hill(np.abs(sample(DistSpec("cauchy1d"), 5000, seed).data), 200))
        moments.append(moment_estimator(sample(DistSpec("t2_1d"), 5000, seed).data, 200))
        scales.append(scale_estimator(np.random.default_rng(seed).standard_exponential(5000), 200))
    assert 0.8 <= np.median(hills) <= 1.2
    assert 0.3 <= np.median(moments) <= 0.7
    assert 0.7 <= np.median(scales) <= 1.3
