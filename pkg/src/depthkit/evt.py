"""Extreme value index and scale estimators, plus k-selection helpers.

All estimators work on the upper order statistics of a sample: with
``X_{1:n} <= ... <= X_{n:n}`` the threshold is ``X_{n-k:n}`` and the log
excesses are ``log X_{n-i:n} - log X_{n-k:n}`` for ``i < k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DegenerateDataError, DomainError

ESTIMATORS = ("hill", "moment")


def _log_excesses(x, k):
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    n = xs.size
    if n < 3:
        raise ConfigurationError(f"need at least 3 observations, got {n}")
    k = int(k)
    if not 1 <= k < n:
        raise ConfigurationError(f"k must satisfy 1 <= k < n={n}, got {k}")
    threshold = xs[n - k - 1]
    if not threshold > 0:
        raise DomainError(f"threshold order statistic X_(n-k:n)={threshold} is not positive")
    return np.log(xs[n - k:]) - np.log(threshold), threshold


def _log_moments(x, k):
    ex, threshold = _log_excesses(x, k)
    m1 = float(np.mean(ex))
    m2 = float(np.mean(ex * ex))
    if m2 == 0.0:
        raise DegenerateDataError("all top-k order statistics equal the threshold")
    denom = 1.0 - m1 * m1 / m2
    if denom <= 0.0:
        raise DegenerateDataError("log excesses are constant (M1^2 == M2)")
    return m1, m2, denom, threshold


def hill(x, k):
    """Hill estimator of a positive extreme value index from the top ``k`` order statistics."""
    ex, _ = _log_excesses(x, k)
    return float(np.mean(ex))


def moment_estimator(x, k):
    """Dekkers-Einmahl-de Haan moment estimator; valid for any real index."""
    m1, _, denom, _ = _log_moments(x, k)
    return m1 + 1.0 - 0.5 / denom


def scale_estimator(x, k):
    """Moment-based estimate of the scale function a(n/k).

    ``X_{n-k:n} * M1 * (1 - gamma_minus)`` with
    ``gamma_minus = 1 - 1 / (2 (1 - M1^2 / M2))``.
    """
    m1, _, denom, threshold = _log_moments(x, k)
    gamma_minus = 1.0 - 0.5 / denom
    return threshold * m1 * (1.0 - gamma_minus)


@dataclass(frozen=True)
class EvtFit:
    gamma_hat: float
    a_hat: float
    b_hat: float
    k: int
    estimator: str


def fit_evt(x, k, estimator="moment"):
    """Index, scale and location (``X_{n-k:n}``) of the upper tail in one call."""
    if estimator not in ESTIMATORS:
        raise ConfigurationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    b = float(xs[xs.size - int(k) - 1]) if 1 <= int(k) < xs.size else None
    if estimator == "hill":
        g = hill(xs, k)
        a = g * b  # Pareto-type tail: a = gamma * b
    else:
        g = moment_estimator(xs, k)
        a = scale_estimator(xs, k)
    return EvtFit(gamma_hat=g, a_hat=a, b_hat=b, k=int(k), estimator=estimator)


def w_gamma(gamma, t):
    """t^(-gamma) * int_1^t s^(gamma - 1) log(s) ds, for t > 1."""
    t = float(t)
    if not t > 1.0:
        raise ConfigurationError(f"t must exceed 1, got {t}")
    g = float(gamma)
    L = np.log(t)
    x = g * L
    if abs(x) < 1e-2:
        # L^2 * sum_{m>=2} (-x)^(m-2) / m!, avoids the cancellation near gamma = 0
        total, term = 0.0, 0.5
        for m in range(2, 20):
            total += term
            term *= -x / (m + 1)
        return L * L * total
    return L / g + np.expm1(-x) / (g * g)


def _estimate(estimator):
    if estimator == "hill":
        return hill
    if estimator == "moment":
        return moment_estimator
    raise ConfigurationError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")


@dataclass
class KPath:
    """Estimates along a range of k.  ``missing`` lists the k's that failed."""

    k: np.ndarray
    gamma_hat: np.ndarray
    estimator: str
    missing: list = field(default_factory=list)

    def __len__(self):
        return len(self.k)

    def value_at(self, k):
        idx = np.flatnonzero(self.k == k)
        if idx.size == 0:
            raise KeyError(k)
        return float(self.gamma_hat[idx[0]])

    def rows(self):
        return list(zip(self.k.tolist(), self.gamma_hat.tolist()))


def k_path(x, estimator="hill", k_min=10, k_max=None):
    """Evaluate the estimator at every k in ``[k_min, k_max]``."""
    fn = _estimate(estimator)
    xs = np.sort(np.asarray(x, dtype=float).ravel())
    n = xs.size
    if k_max is None:
        k_max = n // 2 - 1
    k_min, k_max = int(k_min), int(k_max)
    if not 1 <= k_min < k_max < n:
        raise ConfigurationError(f"need 1 <= k_min < k_max < n, got {k_min}, {k_max}, n={n}")
    ks, vals, missing = [], [], []
    for k in range(k_min, k_max + 1):
        try:
            vals.append(fn(xs, k))
            ks.append(k)
        except (DomainError, DegenerateDataError):
            missing.append(k)
    if not ks:
        raise ConfigurationError("no k in the requested range gives a valid estimate")
    return KPath(np.array(ks, dtype=int), np.array(vals, dtype=float), estimator, missing)


def select_k_stable(path, window=15):
    """Midpoint of the earliest stable stretch of a k-path.

    A window of consecutive k's qualifies when the standard deviation of the
    estimates in it is at most 1.5 times the smallest windowed deviation.  The
    earliest qualifying window is then grown to the right for as long as the
    deviation over the grown stretch does not exceed that of the starting
    window, and the midpoint of the stretch is returned.
    """
    window = int(window)
    if window < 3:
        raise ConfigurationError("window must be >= 3")
    ks = np.asarray(path.k)
    vals = np.asarray(path.gamma_hat, dtype=float)
    good = np.isfinite(vals)
    if not good.any():
        raise DegenerateDataError("k-path has no valid estimates")
    ks, vals = ks[good], vals[good]
    if ks.size < window:
        raise ConfigurationError(f"path has {ks.size} valid entries, fewer than window={window}")
    windows = np.lib.stride_tricks.sliding_window_view(vals, window)
    spans = np.lib.stride_tricks.sliding_window_view(ks, window)
    # a window must cover consecutive k's (missing entries break stretches)
    contiguous = (spans[:, -1] - spans[:, 0]) == window - 1
    sds = np.where(contiguous, windows.std(axis=1), np.inf)
    best = sds.min()
    if not np.isfinite(best):
        raise DegenerateDataError("no window of consecutive valid k's")
    tol = 1e-12 * max(1.0, float(np.max(np.abs(vals))))
    start = int(np.flatnonzero(sds <= 1.5 * best + tol)[0])
    limit = sds[start] + tol
    end = start + window - 1
    while end + 1 < ks.size and ks[end + 1] == ks[end] + 1 and vals[start:end + 2].std() <= limit:
        end += 1
    return int((ks[start] + ks[end]) // 2)
