"""Refined half-space depth R_n.

R_n agrees with the empirical depth D_n wherever D_n >= k/n and replaces it by
an extreme-value tail estimate elsewhere:

* d = 1: the empirical depth is glued at ``X_{k+1:n}`` and ``X_{n-k:n}`` to
  generalized-Pareto tail estimates of the left and right tails.
* d >= 2, ``method="ray"``: with ``s`` the distance from the center to the
  boundary of the region ``{D_n >= k/n}`` along the ray through ``x``,
  ``R_n(x) = (k/n) (|x - center| / s)^(-alpha)``.
* d >= 2, ``method="random"``: the infimum over a finite set of directions of
  one-dimensional tail estimates of the projections.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import evt
from .depth import (
    DirectionSet,
    depth_counts_1d,
    depth_counts_2d,
    depth_counts_random,
    ray_exit_distance,
    region_constraints_2d,
    region_constraints_random,
)
from .exceptions import ConfigurationError, DegenerateDataError, DomainError

GAMMA_ZERO_TOL = 1e-8
# Calibrated ray lengths are pulled inside the region by this relative amount,
# so the calibrated point itself still has depth >= k/n in floating point.
_RAY_SHRINK = 1e-10
_TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# univariate tails


@dataclass(frozen=True)
class TailModel1D:
    """A fitted tail.  Left tails are fitted on the negated data."""

    side: str
    k: int
    n: int
    gamma_hat: float
    a_hat: float
    b_hat: float


def _check_k(k, n):
    k = int(k)
    if not 1 <= k or not 2 * k < n:
        raise ConfigurationError(f"k must satisfy 1 <= k < n/2 (n={n}), got {k}")
    return k


def fit_tail_1d(x, k, side="right", estimator="moment"):
    """Fit the tail on one side of a univariate sample."""
    if side not in ("left", "right"):
        raise ConfigurationError(f"side must be 'left' or 'right', got {side!r}")
    x = np.asarray(x, dtype=float).ravel()
    k = _check_k(k, x.size)
    z = x if side == "right" else -x
    fit = evt.fit_evt(z, k, estimator)
    return TailModel1D(side, k, x.size, fit.gamma_hat, fit.a_hat, fit.b_hat)


def _gpd_tail(z, b, a, gamma, k, n):
    """(k/n) * max(0, 1 + gamma (z - b) / a)^(-1/gamma), with the gamma -> 0 limit."""
    z = np.asarray(z, dtype=float)
    if abs(gamma) < GAMMA_ZERO_TOL:
        return (k / n) * np.exp(-(z - b) / a)
    base = 1.0 + gamma * (z - b) / a
    with np.errstate(divide="ignore"):
        out = np.where(base > 0.0, np.maximum(base, 1e-300) ** (-1.0 / gamma), 0.0 if gamma < 0 else np.inf)
    return (k / n) * out


def tail_prob_1d(model, x):
    """Estimated tail probability beyond ``x`` (P(X >= x) right, P(X <= x) left)."""
    z = np.asarray(x, dtype=float)
    if model.side == "left":
        z = -z
    out = _gpd_tail(z, model.b_hat, model.a_hat, model.gamma_hat, model.k, model.n)
    return float(out) if out.ndim == 0 else out


def projection_tail_prob(w, w_threshold, alpha_hat, k, n):
    """(k/n) * (w / w_threshold)^(-alpha_hat), the Pareto-type tail of a projection."""
    if not w_threshold > 0:
        raise DomainError(f"threshold projection must be positive, got {w_threshold}")
    out = (k / n) * (np.asarray(w, dtype=float) / w_threshold) ** (-alpha_hat)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class Contour:
    """Star-shaped contour around ``center``: radius as a function of angle."""

    level: float
    theta: np.ndarray
    radius: np.ndarray
    center: np.ndarray

    @property
    def xy(self):
        return self.center + self.radius[:, None] * np.column_stack([np.cos(self.theta), np.sin(self.theta)])

    def rows(self):
        xy = self.xy
        return [(t, r, p[0], p[1]) for t, r, p in zip(self.theta, self.radius, xy)]


def _angles(n_angles):
    n_angles = int(n_angles)
    if n_angles < 3:
        raise ConfigurationError("need at least 3 angles")
    return 2.0 * np.pi * np.arange(n_angles) / n_angles


def empirical_contour(X, level_count=1, n_angles=500, center=None):
    """Boundary of {D_n >= level_count / n} along evenly spaced rays (exact, d = 2).

    With ``level_count=1`` this is the convex hull of the data.
    """
    X = check_array(X)
    if X.shape[1] != 2:
        raise ConfigurationError("contours are bivariate")
    c = np.zeros(2) if center is None else np.asarray(center, dtype=float)
    U, q = region_constraints_2d(X - c, level_count)
    if np.any(q <= 0):
        raise ConfigurationError("center is not inside the requested depth region")
    theta = _angles(n_angles)
    V = np.column_stack([np.cos(theta), np.sin(theta)])
    return Contour(level_count / X.shape[0], theta, ray_exit_distance(U, q, V), c)


# ---------------------------------------------------------------------------
# estimator


class RefinedHalfspaceDepth(BaseEstimator):
    """Extreme-value refined half-space depth R_n.

    Parameters
    ----------
    k : int
        Number of upper order statistics; R_n = D_n wherever D_n >= k/n.
    method : {"ray", "random"}
        Multivariate construction (ignored for d = 1).  ``ray`` scales the
        depth region ``{D_n >= k/n}`` along rays from the center; ``random``
        minimises one-dimensional tail estimates over random directions.
    alpha_est : {"hill", "moment"} or None
        Tail index estimator.  Defaults to the moment estimator for d = 1 and
        ``method="random"``, and to Hill on the norms for ``method="ray"``.
    center : {"origin", "median"} or array-like
        Anchor of the rays / projections.
    n_directions : int or None
        Direction count for ``method="random"`` (default 500) and for the
        d >= 3 depth approximation of ``method="ray"`` (default 1000).
    k_tail : int or None
        Separate k for the tail index estimate (defaults to ``k``).
    random_state : int or None
        Seed for the direction set.
    """

    def __init__(self, k=50, method="ray", alpha_est=None, center="origin",
                 n_directions=None, k_tail=None, random_state=None):
        self.k = k
        self.method = method
        self.alpha_est = alpha_est
        self.center = center
        self.n_directions = n_directions
        self.k_tail = k_tail
        self.random_state = random_state

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=3)
        n, d = X.shape
        self.k_ = _check_k(self.k, n)
        self.k_tail_ = self.k_ if self.k_tail is None else _check_k(self.k_tail, n)
        self.n_samples_ = n
        self.n_features_in_ = d
        self.sample_ = X
        if self.method not in ("ray", "random"):
            raise ConfigurationError(f"method must be 'ray' or 'random', got {self.method!r}")
        if d == 1:
            self._fit_1d(X[:, 0])
        else:
            self._fit_md(X)
        return self

    def _resolve_center(self, X):
        if isinstance(self.center, str):
            if self.center == "origin":
                return np.zeros(X.shape[1])
            if self.center == "median":
                return np.median(X, axis=0)
            raise ConfigurationError(f"center must be 'origin', 'median' or a vector, got {self.center!r}")
        c = np.asarray(self.center, dtype=float).ravel()
        if c.shape != (X.shape[1],):
            raise ConfigurationError("center dimension does not match the data")
        return c

    def _fit_1d(self, x):
        est = self.alpha_est or "moment"
        self.estimator_ = est
        self.sorted_ = np.sort(x)
        self.tail_right_ = fit_tail_1d(x, self.k_, "right", est)
        self.tail_left_ = fit_tail_1d(x, self.k_, "left", est)
        self.center_ = np.zeros(1)
        self.gamma_hat_ = self.tail_right_.gamma_hat
        self.alpha_hat_ = 1.0 / self.gamma_hat_ if self.gamma_hat_ > 0 else np.inf
        self.directions_ = None

    def _fit_md(self, X):
        n, d = X.shape
        k = self.k_
        self.center_ = self._resolve_center(X)
        Y = X - self.center_
        norms = np.linalg.norm(Y, axis=1)
        if self.method == "ray":
            est = self.alpha_est or "hill"
            gamma = evt.hill(norms, self.k_tail_) if est == "hill" else evt.moment_estimator(norms, self.k_tail_)
            if not gamma > 0:
                raise DomainError(f"ray scaling needs a positive tail index estimate, got gamma={gamma}")
            self.estimator_ = est
            self.gamma_hat_ = gamma
            self.alpha_hat_ = 1.0 / gamma
            if d == 2:
                self.directions_ = None
                U, q = region_constraints_2d(Y, k)
            else:
                m = self.n_directions or 1000
                self.directions_ = DirectionSet.random(d, m, self.random_state)
                U, q = region_constraints_random(Y, k, self.directions_)
            if np.any(q <= 0):
                raise ConfigurationError(
                    "the center does not have depth above k/n; use center='median' or a smaller k"
                )
            self.region_normals_, self.region_offsets_ = U, q
        else:
            est = self.alpha_est or "moment"
            self.estimator_ = est
            m = self.n_directions or 500
            self.directions_ = DirectionSet.random(d, m, self.random_state)
            gamma = evt.hill(norms, self.k_tail_) if est == "hill" else evt.moment_estimator(norms, self.k_tail_)
            self.gamma_hat_ = gamma
            self.alpha_hat_ = 1.0 / gamma if gamma > 0 else np.inf
            if est == "hill" and not gamma > 0:
                raise DomainError("Hill estimate must be positive")
            W = np.sort(Y @ self.directions_.directions.T, axis=0)
            self.projections_ = W
            b = W[n - k - 1]
            usable = b > 0
            a = np.full(m, np.nan)
            if est == "moment":
                for col in np.flatnonzero(usable):
                    try:
                        a[col] = evt.scale_estimator(W[:, col], k)
                    except (DomainError, DegenerateDataError):
                        usable[col] = False
            else:
                a = gamma * b
            self.b_hat_u_ = b
            self.a_hat_u_ = a
            self.usable_directions_ = usable
            self.skipped_directions_ = int((~usable).sum())
            if not usable.any():
                raise DomainError("no direction has a positive threshold projection")

    # -- scoring -----------------------------------------------------------

    def empirical_depth(self, X):
        """D_n of the fitted sample at the rows of ``X`` (same engine as R_n uses)."""
        check_is_fitted(self, "sample_")
        X = self._check_queries(X)
        n = self.n_samples_
        if self.n_features_in_ == 1:
            return depth_counts_1d(self.sample_, X[:, 0]) / n
        if self.n_features_in_ == 2 and self.directions_ is None:
            return depth_counts_2d(self.sample_, X) / n
        return depth_counts_random(self.sample_, X, self.directions_) / n

    def _check_queries(self, X):
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError("dimension mismatch between fitted sample and queries")
        return X

    def ray_calibrate(self, directions):
        """Largest t with D_n(center + t u) >= k/n, for each unit row u."""
        check_is_fitted(self, "sample_")
        if self.n_features_in_ == 1 or self.method != "ray":
            raise ConfigurationError("ray calibration needs a multivariate ray-scaling model")
        V = np.atleast_2d(np.asarray(directions, dtype=float))
        V = V / np.linalg.norm(V, axis=1, keepdims=True)
        s = ray_exit_distance(self.region_normals_, self.region_offsets_, V)
        return s * (1.0 - _RAY_SHRINK)

    def score_samples(self, X):
        """R_n at each row of ``X``."""
        return self.score_samples_with_flags(X)[0]

    def score_samples_with_flags(self, X):
        """R_n plus a boolean mask of values clamped to the smallest positive float."""
        check_is_fitted(self, "sample_")
        X = self._check_queries(X)
        if self.n_features_in_ == 1:
            out = self._score_1d(X[:, 0])
        elif self.method == "ray":
            out = self._score_ray(X)
        else:
            out = self._score_random(X)
        if self.n_features_in_ > 1 and self.method == "random":
            clamped = out <= 2.0 * _TINY
        else:
            clamped = np.zeros(out.shape, dtype=bool)
        return out, clamped

    def transform(self, X):
        return self.score_samples(X)[:, None]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)

    def _score_1d(self, x):
        n, k = self.n_samples_, self.k_
        lo, hi = self.sorted_[k], self.sorted_[n - k - 1]
        out = depth_counts_1d(self.sorted_, x) / n
        right = x >= hi
        left = (x <= lo) & ~right
        out[right] = tail_prob_1d(self.tail_right_, x[right])
        out[left] = tail_prob_1d(self.tail_left_, x[left])
        return out

    def _score_ray(self, X):
        n, k = self.n_samples_, self.k_
        D = self.empirical_depth(X)
        out = D.copy()
        outer = np.flatnonzero(D < k / n)
        if outer.size:
            Y = X[outer] - self.center_
            r = np.linalg.norm(Y, axis=1)
            s = self.ray_calibrate(Y / r[:, None])
            beyond = r > s
            vals = np.where(beyond, (k / n) * (r / s) ** (-self.alpha_hat_), D[outer])
            out[outer] = vals
        return out

    def _score_random(self, X):
        n, k = self.n_samples_, self.k_
        Y = X - self.center_
        U = self.directions_.directions
        W = self.projections_
        out = np.empty(X.shape[0])
        cols = np.flatnonzero(self.usable_directions_)
        for s in range(0, X.shape[0], 2048):
            wz = Y[s:s + 2048] @ U.T
            best = np.full(wz.shape[0], np.inf)
            overshoot = np.zeros(wz.shape[0])
            for col in cols:
                w = wz[:, col]
                b = self.b_hat_u_[col]
                emp = (n - np.searchsorted(W[:, col], w, side="left")) / n
                if self.estimator_ == "hill":
                    tail = (k / n) * (np.maximum(w, b) / b) ** (-self.alpha_hat_)
                else:
                    a, g = self.a_hat_u_[col], self.gamma_hat_
                    tail = _gpd_tail(np.maximum(w, b), b, a, g, k, n)
                    if g < 0:
                        # distance past the estimated endpoint, in units of a
                        overshoot = np.maximum(overshoot, (w - b) / a + 1.0 / g)
                best = np.minimum(best, np.where(w >= b, tail, emp))
            zero = best <= 0.0
            # points past an estimated endpoint keep their order: values in
            # [tiny, 2 tiny], decreasing in the overshoot
            best[zero] = _TINY * (1.0 + 1.0 / (1.0 + overshoot[zero]))
            out[s:s + 2048] = best
        return out

    # -- contours & metadata -------------------------------------------------

    def contour(self, level, n_angles=500):
        """R_n contour at ``level``: r_theta = s_theta (k / (n level))^(1/alpha)."""
        check_is_fitted(self, "sample_")
        if self.n_features_in_ != 2 or self.method != "ray":
            raise ConfigurationError("contours need a bivariate ray-scaling model")
        n, k = self.n_samples_, self.k_
        level = float(level)
        if not 0.0 < level <= k / n:
            raise ConfigurationError(f"level must be in (0, k/n={k / n}], got {level}")
        theta = _angles(n_angles)
        s = self.ray_calibrate(np.column_stack([np.cos(theta), np.sin(theta)]))
        radius = s * (k / (n * level)) ** (1.0 / self.alpha_hat_)
        return Contour(level, theta, radius, self.center_.copy())

    def manifest(self):
        check_is_fitted(self, "sample_")
        return {
            "center": self.center_.tolist(),
            "k": self.k_,
            "alpha_hat": float(self.alpha_hat_),
            "gamma_hat": float(self.gamma_hat_),
            "method": "univariate" if self.n_features_in_ == 1 else
            ("ray_scaling" if self.method == "ray" else "random_direction"),
            "alpha_est": self.estimator_,
            "seed": self.random_state,
            "n": self.n_samples_,
        }


def refined_depth_1d(x, k, query, estimator="moment"):
    """R_n of a univariate sample at ``query`` (scalar or array)."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    model = RefinedHalfspaceDepth(k=k, alpha_est=estimator).fit(x)
    q = np.asarray(query, dtype=float)
    out = model.score_samples(q.reshape(-1, 1))
    return float(out[0]) if q.ndim == 0 else out


def depth_contour(model, level, n_angles=500):
    return model.contour(level, n_angles)
