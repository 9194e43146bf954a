import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthkit.depth import HalfspaceDepth, depth_2d_exact
from depthkit.distributions import DistSpec, derive_seed, sample, true_depth
from depthkit.exceptions import ConfigurationError, DegenerateDataError
from depthkit.monitoring import (
    DepthRankChart,
    ParametricChart,
    RunResult,
    TrueDepth,
    average_run_length,
    f_upper_quantile,
    false_alarm_rate,
    run_length,
    signal,
)
from depthkit.refined import RefinedHalfspaceDepth

from .oracles import f_upper_quantile_2, t_upper_quantile

ALPHA = 0.0027


class _Constant:
    """Chart stub that always (or never) signals."""

    kind = "parametric"
    alpha = ALPHA

    def __init__(self, value):
        self.value = value

    def predict(self, Y):
        return np.full(len(Y), self.value)


def test_univariate_threshold_is_a_squared_t_quantile():
    n = 50
    X = np.random.default_rng(0).standard_normal((n, 1))
    chart = ParametricChart(alpha=0.01).fit(X)
    assert chart.threshold_ == pytest.approx((n + 1) / n * t_upper_quantile(0.005, n - 1) ** 2, rel=1e-10)


@pytest.mark.parametrize("m", [10, 98, 498])
def test_f_quantile_against_closed_form(m):
    assert f_upper_quantile(ALPHA, 2, m) == pytest.approx(f_upper_quantile_2(ALPHA, m), rel=1e-10)


def test_bivariate_threshold():
    X = sample(DistSpec("normal2d"), 500, 1).data
    chart = ParametricChart().fit(X)
    expected = 2 * (501 * 499) / (500 * 498) * f_upper_quantile_2(ALPHA, 498)
    assert chart.threshold_ == pytest.approx(expected, rel=1e-10)


def test_identity_covariance_is_recovered():
    X = sample(DistSpec("normal2d"), 100_000, 2).data
    chart = ParametricChart().fit(X)
    assert np.allclose(chart.precision_, np.eye(2), atol=1e-2)
    assert np.allclose(chart.covariance_, np.cov(X, rowvar=False, ddof=1))


def test_signal_examples():
    X = sample(DistSpec("normal2d"), 200, 3).data
    chart = ParametricChart().fit(X)
    assert chart.decision_function(chart.mean_[None])[0] == 0.0
    assert not signal(chart, chart.mean_)
    assert signal(chart, [30.0, 30.0])
    with pytest.raises(ConfigurationError):
        signal(chart, chart.mean_, 0.1)
    dchart = DepthRankChart().fit(X)
    assert not signal(dchart, [0.0, 0.0], 1.0)
    assert dchart.reference_depths_.min() > 0
    assert signal(dchart, [0.0, 0.0], 0.0)
    with pytest.raises(ConfigurationError):
        signal(dchart, [0.0, 0.0])


def test_trivial_far_and_arl():
    stream = sample(DistSpec("normal2d"), 100, 0)
    assert false_alarm_rate(_Constant(True), stream) == 1.0
    assert false_alarm_rate(_Constant(False), stream) == 0.0
    spec = DistSpec("normal2d")
    res = average_run_length(_Constant(True), spec, 7, cap=100)
    assert res.arl == 1.0 and not res.capped.any()
    res = average_run_length(_Constant(False), spec, 5, cap=100)
    assert res.arl == 100.0 and res.capped.all()
    with pytest.raises(ConfigurationError):
        average_run_length(_Constant(True), spec, 3, cap=0)


def test_run_result_properties():
    r = RunResult(signals=np.array([True, False, False, False]), run_lengths=np.array([2, 4]))
    assert r.far == 0.25 and r.arl == 3.0
    assert np.isnan(RunResult().far) and np.isnan(RunResult().arl)


def test_run_length_is_first_passage():
    X = sample(DistSpec("normal2d"), 300, 4).data
    chart = ParametricChart().fit(X)
    spec = DistSpec("normal2d", shift=(2, 2), scale=2.0)
    rl, capped = run_length(chart, spec, 10_000, 17)
    # replay the same stream blocks and find the first signal by brute force
    ss = np.random.SeedSequence(17)
    ys, block = [], 16
    for child in ss.spawn(64):
        ys.append(sample(spec, block, child.generate_state(1)[0]).data)
        block *= 2
        if sum(len(y) for y in ys) >= rl:
            break
    stream = np.vstack(ys)
    first = int(np.flatnonzero(chart.predict(stream))[0]) + 1
    assert (rl, capped) == (first, False)
    assert run_length(chart, spec, 10_000, 17) == (rl, capped)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_parametric_chart_is_affine_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((100, 2))
    Y = rng.standard_normal((300, 2)) * 1.7
    A = rng.standard_normal((2, 2))
    if abs(np.linalg.det(A)) < 0.1:
        A = A + np.eye(2)
    b = rng.standard_normal(2) * 5
    c1 = ParametricChart(alpha=0.05).fit(X)
    c2 = ParametricChart(alpha=0.05).fit(X @ A.T + b)
    t1, t2 = c1.decision_function(Y), c2.decision_function(Y @ A.T + b)
    assert np.allclose(t1, t2, rtol=1e-9, atol=1e-9)
    margin = np.abs(t1 - c1.threshold_) > 1e-7
    assert np.array_equal(c1.predict(Y)[margin], c2.predict(Y @ A.T + b)[margin])


@pytest.mark.parametrize(
    "engine", [RefinedHalfspaceDepth(k=50), TrueDepth(DistSpec("sphcauchy2d"))], ids=["R_n", "D_oracle"]
)
@pytest.mark.parametrize("alpha", [ALPHA, 0.05, 0.2])
def test_self_application_calibration(engine, alpha):
    X = sample(DistSpec("sphcauchy2d"), 500, 5).data
    chart = DepthRankChart(engine, alpha).fit(X)
    assert np.mean(chart.predict(X)) <= alpha + 1 / 500


def test_self_application_with_tied_empirical_depths():
    # every point tied at the smallest D_n value has rank 0 under the strict rule,
    # so the hull vertices alone can exceed alpha + 1/n
    X = sample(DistSpec("sphcauchy2d"), 500, 5).data
    chart = DepthRankChart(HalfspaceDepth(), ALPHA).fit(X)
    d = chart.reference_depths_
    lowest = np.mean(d == d[0])
    assert d[0] == 1 / 500
    assert np.mean(chart.predict(X)) == lowest


def test_empirical_depth_chart_signals_outside_hull():
    X = sample(DistSpec("normal2d"), 300, 6).data
    chart = DepthRankChart(HalfspaceDepth()).fit(X)
    Y = sample(DistSpec("normal2d"), 3000, 7).data
    outside = depth_2d_exact(X, Y) == 0
    assert outside.any()
    assert np.all(chart.predict(Y)[outside])
    assert chart.engine_tag() == "D_n"


def test_engine_tags_and_true_depth():
    spec = DistSpec("normal2d")
    X = sample(spec, 100, 0).data
    oracle = DepthRankChart(TrueDepth(spec)).fit(X)
    assert oracle.engine_tag() == "D_oracle"
    assert np.allclose(oracle.reference_depths_, np.sort(true_depth(spec, X)))
    assert DepthRankChart(RefinedHalfspaceDepth(k=10)).fit(X).engine_tag() == "R_n"
    with pytest.raises(ConfigurationError):
        TrueDepth().fit()


def test_configuration_and_degenerate_errors():
    with pytest.raises(DegenerateDataError):
        ParametricChart().fit(np.column_stack([np.arange(10.0), 2 * np.arange(10.0)]))
    with pytest.raises(ConfigurationError):
        ParametricChart().fit(np.ones((2, 2)))
    with pytest.raises(ConfigurationError):
        ParametricChart(alpha=1.5).fit(np.random.default_rng(0).standard_normal((10, 2)))
    with pytest.raises(ConfigurationError):
        DepthRankChart().fit(np.ones((5, 2))).rank()
    with pytest.raises(ConfigurationError):
        average_run_length(_Constant(True), "normal2d", 3)


@pytest.mark.slow
def test_in_control_false_alarm_rates():
    spec = DistSpec("normal2d")
    par, emp, orc = [], [], []
    for rep in range(30):
        X = sample(spec, 500, derive_seed(7, rep, 0)).data
        stream = sample(spec, 5000, derive_seed(7, rep, 1))
        par.append(false_alarm_rate(ParametricChart().fit(X), stream))
        emp.append(false_alarm_rate(DepthRankChart(HalfspaceDepth()).fit(X), stream))
        orc.append(false_alarm_rate(DepthRankChart(TrueDepth(spec)).fit(X), stream))
    assert abs(np.mean(par) - ALPHA) <= 0.0015
    assert np.mean(emp) > 0.01
    assert ALPHA / 2 <= np.mean(orc) <= 2 * ALPHA


@pytest.mark.slow
def test_refined_chart_tracks_oracle_arl_under_a_large_change():
    spec = DistSpec("elliptical2d")
    shifted = DistSpec("elliptical2d", shift=(4, 4), scale=2.0)
    # ARL varies a lot between reference samples: 10 references x 5 runs, shared streams
    a, b = [], []
    for r in range(10):
        X = sample(spec, 500, derive_seed(99, r)).data
        rn = DepthRankChart(RefinedHalfspaceDepth(k=50)).fit(X)
        oracle = DepthRankChart(TrueDepth(spec)).fit(X)
        a.append(average_run_length(rn, shifted, 5, seed=derive_seed(3, r)).arl)
        b.append(average_run_length(oracle, shifted, 5, seed=derive_seed(3, r)).arl)
    assert 1 / 1.5 <= np.mean(a) / np.mean(b) <= 1.5
