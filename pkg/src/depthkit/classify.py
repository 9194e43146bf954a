"""Linear DD-classifier.

Each point is mapped to ``(depth w.r.t. sample F, depth w.r.t. sample G)``
and assigned to G when ``depth_g > slope * depth_f``.  Points exactly on the
line (in particular points of zero depth w.r.t. both samples) get a seeded
coin flip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .depth import depth_counts_2d
from .exceptions import ConfigurationError, DegenerateDataError
from .refined import RefinedHalfspaceDepth


@dataclass(frozen=True)
class DDModel:
    slope: float
    train_error: float
    engine: str = ""


def dd_coordinates(sample_f, sample_g, points, engine):
    """Depths of ``points`` w.r.t. each sample, as an (m, 2) array."""
    f = clone(engine).fit(sample_f)
    g = clone(engine).fit(sample_g)
    points = check_array(points)
    return np.column_stack([f.score_samples(points), g.score_samples(points)])


def _decide(slope, depth_f, depth_g):
    """+1 for G, -1 for F, 0 on the separating line depth_g = slope * depth_f.

    Compares depth_g / depth_f with the slope, the same quotient the candidate
    slopes are built from, so a candidate splits the ratios without rounding
    drift.  Points with depth_f = 0 sit on the line iff depth_g = 0
    (inf * 0 = 0).
    """
    pos = depth_f > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(pos, depth_g / np.where(pos, depth_f, 1.0), 0.0)
        out = np.where(pos, np.sign(ratio - slope), np.sign(depth_g))
    return np.nan_to_num(out, nan=0.0).astype(int)


def _errors(slopes, depth_f, depth_g, is_g):
    """Training error of each slope under "G iff depth_g > slope * depth_f"."""
    out = np.empty(len(slopes))
    for i, s in enumerate(slopes):
        says_g = _decide(s, depth_f, depth_g) > 0
        out[i] = np.count_nonzero(says_g != is_g) / depth_f.size
    return out


def candidate_slopes(depth_f, depth_g):
    pos = depth_f > 0
    return np.unique(np.concatenate([[0.0, np.inf], depth_g[pos] / depth_f[pos]]))


def fit_linear_dd(depth_f, depth_g, is_g, engine=""):
    """Slope through the origin minimising training misclassification."""
    depth_f = np.asarray(depth_f, dtype=float)
    depth_g = np.asarray(depth_g, dtype=float)
    is_g = np.asarray(is_g, dtype=bool)
    if is_g.all() or not is_g.any():
        raise ConfigurationError("need at least one training point of each label")
    if not (np.any(depth_f > 0) or np.any(depth_g > 0)):
        raise DegenerateDataError("all training depths are zero")
    slopes = candidate_slopes(depth_f, depth_g)
    err = _errors(slopes, depth_f, depth_g, is_g)
    best = int(np.argmin(err))  # slopes are sorted: ties go to the smaller slope
    return DDModel(float(slopes[best]), float(err[best]), engine)


def classify(model, depth_f, depth_g, seed=0):
    """True for G.  Ties are settled by a coin seeded with (seed, point index)."""
    depth_f = np.atleast_1d(np.asarray(depth_f, dtype=float))
    depth_g = np.atleast_1d(np.asarray(depth_g, dtype=float))
    dec = _decide(model.slope, depth_f, depth_g)
    out = dec > 0
    for i in np.flatnonzero(dec == 0):
        out[i] = np.random.default_rng([int(seed), int(i)]).random() < 0.5
    return out


def zero_hull_mask(test, sample_f, sample_g):
    """True where a point has zero empirical depth w.r.t. both samples (bivariate)."""
    test = np.atleast_2d(np.asarray(test, dtype=float))
    return (depth_counts_2d(sample_f, test) == 0) & (depth_counts_2d(sample_g, test) == 0)


class DDClassifier(ClassifierMixin, BaseEstimator):
    """Two-class linear DD-classifier.

    Parameters
    ----------
    depth : estimator or None
        Unfitted depth scorer, cloned once per class.  Defaults to R_n with
        rays anchored at each sample's coordinatewise median.
    random_state : int
        Seed for the coin flips of points on the separating line.
    """

    def __init__(self, depth=None, random_state=0):
        self.depth = depth
        self.random_state = random_state

    def _engine(self):
        if self.depth is None:
            return RefinedHalfspaceDepth(center="median")
        return self.depth

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ConfigurationError(f"DD-classification needs exactly 2 classes, got {self.classes_.size}")
        engine = self._engine()
        self.depth_f_ = clone(engine).fit(X[y == self.classes_[0]])
        self.depth_g_ = clone(engine).fit(X[y == self.classes_[1]])
        dd = self.dd_transform(X)
        self.model_ = fit_linear_dd(dd[:, 0], dd[:, 1], y == self.classes_[1], type(engine).__name__)
        self.slope_ = self.model_.slope
        self.train_error_ = self.model_.train_error
        self.n_features_in_ = X.shape[1]
        return self

    def dd_transform(self, X):
        check_is_fitted(self, "depth_g_")
        X = check_array(X)
        return np.column_stack([self.depth_f_.score_samples(X), self.depth_g_.score_samples(X)])

    def predict(self, X, dd=None):
        check_is_fitted(self, "model_")
        if dd is None:
            dd = self.dd_transform(X)
        is_g = classify(self.model_, dd[:, 0], dd[:, 1], self.random_state)
        return np.where(is_g, self.classes_[1], self.classes_[0])
