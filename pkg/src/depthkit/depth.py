"""Empirical half-space (Tukey) depth.

``D_n(x) = min_u #{i : u'X_i >= u'x} / n`` over unit vectors ``u``.  Exact
algorithms are used for d = 1 (counting) and d = 2 (angular sweep,
O(n log n) per query); for d >= 3 the minimum is taken over a finite
:class:`DirectionSet`, which gives an upper bound on the exact depth.

The module also describes depth regions ``{x : D_n(x) >= j/n}`` as finite
intersections of half-spaces, which is what the ray calibration of the
refined depth needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, ConvergenceError

TWO_PI = 2.0 * np.pi
_CHUNK = 1024


@dataclass(frozen=True)
class DirectionSet:
    """Unit vectors used to approximate the infimum over all directions."""

    directions: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if u.shape[0] == 0:
            raise ConfigurationError("a direction set cannot be empty")
        if np.any(np.abs(np.linalg.norm(u, axis=1) - 1.0) > 1e-12):
            raise ConfigurationError("directions must be unit vectors")
        object.__setattr__(self, "directions", u)

    @classmethod
    def random(cls, d, m, seed=None):
        """``m`` directions uniform on the sphere: normalised standard normal vectors."""
        if int(m) < 1 or int(d) < 1:
            raise ConfigurationError("need m >= 1 directions in dimension d >= 1")
        z = np.random.default_rng(seed).standard_normal((int(m), int(d)))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        return cls(z, seed)

    @classmethod
    def circle(cls, m, offset=0.0):
        """``m`` evenly spaced directions in the plane."""
        theta = offset + TWO_PI * np.arange(int(m)) / int(m)
        return cls(np.column_stack([np.cos(theta), np.sin(theta)]))

    @property
    def dim(self):
        return self.directions.shape[1]

    def __len__(self):
        return self.directions.shape[0]


def _as_2d(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0:
        raise ConfigurationError(f"{name} must be a nonempty (n, d) array")
    return X


def _queries(Q, d):
    Q = np.asarray(Q, dtype=float)
    scalar = Q.ndim == 0 or (Q.ndim == 1 and (d > 1 or Q.size == 1) and Q.size == d)
    Q = Q.reshape(1, d) if scalar else (Q[:, None] if Q.ndim == 1 else Q)
    if Q.shape[1] != d:
        raise ConfigurationError(f"query dimension {Q.shape[1]} does not match sample dimension {d}")
    return Q, scalar


# ---------------------------------------------------------------------------
# d = 1


def depth_counts_1d(X, Q):
    xs = np.sort(_as_2d(X)[:, 0])
    q = np.asarray(Q, dtype=float).ravel()
    le = np.searchsorted(xs, q, side="right")
    ge = xs.size - np.searchsorted(xs, q, side="left")
    return np.minimum(le, ge)


def depth_1d(X, x):
    """min(#{X_i <= x}, #{X_i >= x}) / n; ties at x count on both sides."""
    X = _as_2d(X)
    if X.shape[1] != 1:
        raise ConfigurationError("depth_1d needs univariate data")
    Q, scalar = _queries(x, 1)
    out = depth_counts_1d(X, Q[:, 0]) / X.shape[0]
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# d = 2, exact


def _normalized_angles(V):
    ang = np.arctan2(V[..., 1], V[..., 0])
    # map pi to -pi so that every direction has a single representative
    return np.where(ang >= np.pi, ang - TWO_PI, ang)


def _max_halfopen_semicircle(A, valid):
    """For each row of sorted angles, the max number of entries in any [a_i, a_i + pi).

    ``A`` is sorted along axis 1 with invalid entries (+inf) at the end.
    """
    r, m = A.shape
    A2 = np.concatenate([A, A + TWO_PI], axis=1)
    T = A + np.pi
    # stable sort with targets first: entries equal to a target sort after it
    combined = np.concatenate([T, A2], axis=1)
    order = np.argsort(combined, axis=1, kind="stable")
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(3 * m)[None, :].repeat(r, axis=0), axis=1)
    less_than_target = pos[:, :m] - np.arange(m)[None, :]
    # index of the first occurrence of each angle in its row
    idx = np.arange(m)[None, :].repeat(r, axis=0)
    change = np.ones((r, m), dtype=bool)
    change[:, 1:] = A[:, 1:] != A[:, :-1]
    first = np.maximum.accumulate(np.where(change, idx, 0), axis=1)
    counts = np.where(valid, less_than_target - first, 0)
    return counts.max(axis=1)


def depth_counts_2d(X, Q):
    """Exact integer depth counts of each query row w.r.t. the bivariate sample ``X``."""
    X = _as_2d(X)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = X.shape[0]
    out = np.empty(Q.shape[0], dtype=np.int64)
    for s in range(0, Q.shape[0], _CHUNK):
        q = Q[s:s + _CHUNK]
        V = X[None, :, :] - q[:, None, :]
        coincident = (V[..., 0] == 0.0) & (V[..., 1] == 0.0)
        ang = np.where(coincident, np.inf, _normalized_angles(V))
        ang.sort(axis=1)
        c0 = coincident.sum(axis=1)
        m = n - c0
        valid = np.arange(n)[None, :] < m[:, None]
        best = _max_halfopen_semicircle(ang, valid)
        # points coinciding with the query lie in every closed half-plane
        out[s:s + _CHUNK] = c0 + m - best
    return out


def depth_2d_exact(X, x):
    """Exact bivariate depth by angular sweep of the directions X_i - x."""
    X = _as_2d(X)
    if X.shape[1] != 2:
        raise ConfigurationError(f"depth_2d_exact needs bivariate data, got d={X.shape[1]}")
    Q, scalar = _queries(x, 2)
    out = depth_counts_2d(X, Q) / X.shape[0]
    return float(out[0]) if scalar else out


def depth_bruteforce(X, x, max_n=200):
    """Test oracle: minimum closed half-plane count over a finite candidate set.

    The candidates are +-(X_i - x) and their perpendiculars, each also rotated
    by +-1e-9 rad, which covers every arc on which the count is constant.
    """
    X = _as_2d(X)
    if X.shape[1] != 2:
        raise ConfigurationError("depth_bruteforce is bivariate only")
    n = X.shape[0]
    if n > max_n:
        raise ConfigurationError(f"depth_bruteforce is limited to n <= {max_n}, got {n}")
    x = np.asarray(x, dtype=float).ravel()
    V = X - x
    nz = V[np.any(V != 0.0, axis=1)]
    if nz.shape[0] == 0:
        return 1.0
    base = np.vstack([nz, -nz, np.column_stack([-nz[:, 1], nz[:, 0]]),
                      np.column_stack([nz[:, 1], -nz[:, 0]])])
    cands = [base]
    for eps in (1e-9, -1e-9):
        c, s = np.cos(eps), np.sin(eps)
        cands.append(base @ np.array([[c, s], [-s, c]]))
    U = np.vstack(cands)
    counts = ((V @ U.T) >= 0.0).sum(axis=0)
    return float(counts.min()) / n


# ---------------------------------------------------------------------------
# d >= 2, random directions


def _kth_largest_columns(P, j):
    """j-th largest entry of each column of P (j is 1-based)."""
    n = P.shape[0]
    return np.partition(P, n - j, axis=0)[n - j]


def depth_counts_random(X, Q, directions):
    X = _as_2d(X)
    U = directions.directions if isinstance(directions, DirectionSet) else np.atleast_2d(directions)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = X.shape[0]
    P = np.sort(X @ U.T, axis=0)  # (n, K)
    out = np.empty(Q.shape[0], dtype=np.int64)
    for s in range(0, Q.shape[0], _CHUNK):
        qp = Q[s:s + _CHUNK] @ U.T  # (m, K)
        cnt = np.empty(qp.shape, dtype=np.int64)
        for col in range(U.shape[0]):
            cnt[:, col] = n - np.searchsorted(P[:, col], qp[:, col], side="left")
        out[s:s + _CHUNK] = cnt.min(axis=1)
    return out


def depth_random(X, x, directions):
    """Minimum of #{u'X_i >= u'x}/n over the given directions (upper bound on D_n)."""
    X = _as_2d(X)
    if not isinstance(directions, DirectionSet):
        directions = DirectionSet(directions)
    if directions.dim != X.shape[1]:
        raise ConfigurationError("direction dimension does not match the sample")
    Q, scalar = _queries(x, X.shape[1])
    out = depth_counts_random(X, Q, directions) / X.shape[0]
    return float(out[0]) if scalar else out


def halfspace_depth(X, x, directions=None):
    """Dispatch: exact for d = 1, 2; direction-based for d >= 3 (directions required)."""
    X = _as_2d(X)
    d = X.shape[1]
    if d == 1:
        return depth_1d(X, x)
    if directions is not None:
        return depth_random(X, x, directions)
    if d == 2:
        return depth_2d_exact(X, x)
    raise ConfigurationError("d >= 3 requires an explicit DirectionSet")


def depth_rank(reference_depths, value):
    """Fraction of reference depths strictly below ``value``."""
    ref = np.sort(np.asarray(reference_depths, dtype=float).ravel())
    if ref.size == 0:
        raise ConfigurationError("reference depths are empty")
    v = np.asarray(value, dtype=float)
    out = np.searchsorted(ref, v, side="left") / ref.size
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# depth regions


def region_constraints_2d(Y, j):
    """Half-planes whose intersection is the exact region {y : D_n(y) >= j/n}.

    Returns ``(U, q)`` with unit normals ``U`` (K, 2) and offsets ``q`` such
    that the region is ``{y : U y <= q}``.  Only directions where the j-th
    largest projection switches between data points are needed: those normal
    to a line through two points with j-1 or j-2 points strictly beyond it.
    """
    Y = _as_2d(Y)
    n = Y.shape[0]
    j = int(j)
    if not 1 <= j <= n:
        raise ConfigurationError(f"depth level count must be in [1, n], got {j}")
    normals, offsets = [], []
    others = np.arange(n)
    for a in range(n):
        idx = others[others != a]
        V = Y[idx] - Y[a]
        ang = _normalized_angles(V)
        order = np.argsort(ang, kind="stable")
        srt = ang[order]
        doubled = np.concatenate([srt, srt + TWO_PI])
        # points strictly left of a -> b: angles in the open arc (theta_b, theta_b + pi)
        left = np.searchsorted(doubled, ang + np.pi, side="left") - np.searchsorted(doubled, ang, side="right")
        sel = (left == j - 1) | (left == j - 2)
        if not sel.any():
            continue
        v = V[sel]
        u = np.column_stack([-v[:, 1], v[:, 0]])
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        normals.append(u)
        offsets.append(u @ Y[a])
    if not normals:
        raise ConfigurationError(f"no supporting lines found for depth level {j}/{n}")
    return np.vstack(normals), np.concatenate(offsets)


def region_constraints_random(Y, j, directions):
    """Region {y : u'y <= (j-th largest u'Y_i) for every u in ``directions``}."""
    Y = _as_2d(Y)
    U = directions.directions if isinstance(directions, DirectionSet) else np.atleast_2d(directions)
    return U, _kth_largest_columns(Y @ U.T, int(j))


def ray_exit_distance(U, q, V):
    """Distance from the origin to the boundary of {y : U y <= q} along unit rays V."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    out = np.empty(V.shape[0])
    for s in range(0, V.shape[0], _CHUNK):
        A = V[s:s + _CHUNK] @ U.T
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(A > 0.0, q[None, :] / A, np.inf)
        out[s:s + _CHUNK] = ratio.min(axis=1)
    if not np.all(np.isfinite(out)):
        raise ConvergenceError("depth region is unbounded along some ray")
    return out


# ---------------------------------------------------------------------------
# estimator


class HalfspaceDepth(BaseEstimator):
    """Empirical half-space depth D_n as a fitted scorer.

    Parameters
    ----------
    method : {"auto", "exact", "random"}
        ``auto`` uses the exact algorithm for d <= 2 and random directions
        otherwise.
    n_directions : int
        Number of random directions for ``method="random"`` (or d >= 3).
    random_state : int or None
        Seed of the direction set.
    """

    def __init__(self, method="auto", n_directions=1000, random_state=None):
        self.method = method
        self.n_directions = n_directions
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        if self.method not in ("auto", "exact", "random"):
            raise ConfigurationError(f"unknown method {self.method!r}")
        d = X.shape[1]
        if self.method == "exact" and d > 2:
            raise ConfigurationError(f"exact depth is only available for d <= 2, got d={d}")
        use_random = self.method == "random" or (self.method == "auto" and d > 2)
        if use_random and d == 1:
            use_random = False
        self.sample_ = X
        self.n_features_in_ = d
        self.directions_ = (
            DirectionSet.random(d, self.n_directions, self.random_state) if use_random else None
        )
        return self

    def score_samples(self, X):
        check_is_fitted(self, "sample_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError("dimension mismatch between fitted sample and queries")
        n = self.sample_.shape[0]
        if self.directions_ is not None:
            return depth_counts_random(self.sample_, X, self.directions_) / n
        if self.n_features_in_ == 1:
            return depth_counts_1d(self.sample_, X[:, 0]) / n
        return depth_counts_2d(self.sample_, X) / n

    def transform(self, X):
        return self.score_samples(X)[:, None]

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
