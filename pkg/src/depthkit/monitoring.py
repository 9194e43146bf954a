"""Multivariate control charts: Hotelling-type T^2 and depth-rank charts.

A depth-rank chart flags ``y`` as out of control when the fraction of
reference observations that are strictly less deep than ``y`` is below
``alpha``.  The depth engine is any fitted scorer with ``score_samples``:
:class:`~depthkit.depth.HalfspaceDepth` (D_n),
:class:`~depthkit.refined.RefinedHalfspaceDepth` (R_n) or :class:`TrueDepth`
(the population depth of a known distribution, for benchmarking).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .depth import HalfspaceDepth, depth_rank
from .distributions import DistSpec, derive_seed, sample, true_depth
from .exceptions import ConfigurationError, DegenerateDataError

DEFAULT_ALPHA = 0.0027


def f_upper_quantile(alpha, dfn, dfd):
    """Upper ``alpha`` quantile of the F(dfn, dfd) distribution."""
    return float(stats.f.isf(alpha, dfn, dfd))


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must be in (0, 1), got {alpha}")


class TrueDepth(BaseEstimator):
    """Population depth of a known :class:`DistSpec`; ``fit`` only records the dimension."""

    def __init__(self, spec=None):
        self.spec = spec

    def fit(self, X=None, y=None):
        if not isinstance(self.spec, DistSpec):
            raise ConfigurationError("TrueDepth needs a DistSpec")
        self.n_features_in_ = self.spec.dim
        return self

    def score_samples(self, X):
        check_is_fitted(self, "n_features_in_")
        return np.atleast_1d(true_depth(self.spec, check_array(X)))


class ParametricChart(BaseEstimator):
    """T^2 chart: signal when (y - mean)' S^-1 (y - mean) exceeds
    d (n+1)(n-1) / (n (n-d)) * F_{d, n-d}(alpha)."""

    kind = "parametric"

    def __init__(self, alpha=DEFAULT_ALPHA):
        self.alpha = alpha

    def fit(self, X, y=None):
        _check_alpha(self.alpha)
        X = check_array(X, ensure_min_samples=2)
        n, d = X.shape
        if n <= d:
            raise ConfigurationError(f"need n > d, got n={n}, d={d}")
        self.mean_ = X.mean(axis=0)
        S = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
        eig = np.linalg.eigvalsh(S)
        if not eig[0] > 1e-12 * max(eig[-1], 0.0):
            raise DegenerateDataError("reference covariance is not positive definite")
        self.covariance_ = S
        self.precision_ = np.linalg.inv(S)
        self.threshold_ = d * (n + 1) * (n - 1) / (n * (n - d)) * f_upper_quantile(self.alpha, d, n - d)
        self.n_features_in_ = d
        return self

    def decision_function(self, Y):
        check_is_fitted(self, "precision_")
        Y = check_array(Y)
        Z = Y - self.mean_
        return np.einsum("ij,jk,ik->i", Z, self.precision_, Z)

    def predict(self, Y, depths=None):
        """Boolean out-of-control signals."""
        if depths is not None:
            raise ConfigurationError("a parametric chart does not take depths")
        return self.decision_function(Y) > self.threshold_


class DepthRankChart(BaseEstimator):
    """Nonparametric chart on depth ranks.

    Parameters
    ----------
    depth : estimator
        Unfitted depth scorer; a clone is fitted on the reference sample and
        used to score both the reference points and new observations.
    alpha : float
        Nominal false alarm rate.
    """

    kind = "depth_rank"

    def __init__(self, depth=None, alpha=DEFAULT_ALPHA):
        self.depth = depth
        self.alpha = alpha

    def fit(self, X, y=None):
        _check_alpha(self.alpha)
        X = check_array(X)
        engine = HalfspaceDepth() if self.depth is None else clone(self.depth)
        self.depth_ = engine.fit(X)
        self.reference_depths_ = np.sort(self.depth_.score_samples(X))
        self.n_features_in_ = X.shape[1]
        return self

    def rank(self, Y=None, depths=None):
        check_is_fitted(self, "reference_depths_")
        if depths is None:
            if Y is None:
                raise ConfigurationError("need observations or their depths")
            depths = self.depth_.score_samples(check_array(Y))
        return np.atleast_1d(depth_rank(self.reference_depths_, depths))

    def predict(self, Y=None, depths=None):
        """Boolean signals; pass precomputed ``depths`` to skip scoring."""
        return self.rank(Y, depths) < self.alpha

    def engine_tag(self):
        name = type(self.depth_).__name__
        return {"HalfspaceDepth": "D_n", "RefinedHalfspaceDepth": "R_n", "TrueDepth": "D_oracle"}.get(name, name)


def signal(chart, y, depth_of_y=None):
    """Single-observation decision."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if chart.kind == "depth_rank":
        if depth_of_y is None:
            raise ConfigurationError("a depth-rank chart needs the depth of y")
        return bool(chart.predict(depths=np.atleast_1d(depth_of_y))[0])
    if depth_of_y is not None:
        raise ConfigurationError("a parametric chart does not take depths")
    return bool(chart.predict(y)[0])


@dataclass
class RunResult:
    signals: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    run_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    capped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def far(self):
        return float(np.mean(self.signals)) if self.signals.size else float("nan")

    @property
    def arl(self):
        return float(np.mean(self.run_lengths)) if self.run_lengths.size else float("nan")


def false_alarm_rate(chart, stream, depths=None):
    """Fraction of ``stream`` rows that trigger a signal."""
    data = stream.data if hasattr(stream, "data") else np.asarray(stream, dtype=float)
    if chart.kind == "depth_rank":
        sig = chart.predict(data, depths=depths)
    else:
        sig = chart.predict(data)
    return RunResult(signals=np.asarray(sig, dtype=bool)).far


def run_length(chart, spec, cap, seed):
    """Index (1-based) of the first signal on a stream drawn from ``spec``, capped."""
    ss = np.random.SeedSequence(seed)
    seen = 0
    block = 16
    for child in ss.spawn(64):
        size = min(block, cap - seen)
        ys = sample(spec, size, child.generate_state(1)[0]).data
        hits = np.flatnonzero(chart.predict(ys))
        if hits.size:
            return seen + int(hits[0]) + 1, False
        seen += size
        if seen >= cap:
            return cap, True
        block *= 2
    return cap, True


def average_run_length(chart, shift_spec, reps, cap=None, seed=0):
    """First-passage run lengths of ``reps`` independent streams from ``shift_spec``."""
    if not isinstance(shift_spec, DistSpec):
        raise ConfigurationError("shift_spec must be a DistSpec")
    if cap is None:
        cap = int(round(20.0 / chart.alpha))
    cap = int(cap)
    if cap < 1:
        raise ConfigurationError("cap must be >= 1")
    lengths, capped = [], []
    for rep in range(int(reps)):
        rl, c = run_length(chart, shift_spec, cap, derive_seed(seed, rep))
        lengths.append(rl)
        capped.append(c)
    return RunResult(run_lengths=np.array(lengths, dtype=int), capped=np.array(capped, dtype=bool))
