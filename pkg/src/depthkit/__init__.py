"""Empirical and extreme-value refined half-space depth.

Estimators follow the scikit-learn conventions (``fit`` / ``score_samples`` /
``transform`` / ``predict``):

* :class:`HalfspaceDepth` - empirical Tukey depth D_n.
* :class:`RefinedHalfspaceDepth` - D_n with extreme-value tails (R_n).
* :class:`ParametricChart`, :class:`DepthRankChart` - multivariate control charts.
* :class:`DDClassifier` - linear depth-versus-depth classifier.
"""

__version__ = "0.1.0"

from .classify import DDClassifier, dd_coordinates, fit_linear_dd, zero_hull_mask
from .depth import DirectionSet, HalfspaceDepth, depth_rank, halfspace_depth
from .distributions import DistSpec, Sample, derive_seed, pdf, quantile_point, sample, true_depth
from .evt import fit_evt, hill, k_path, moment_estimator, scale_estimator, select_k_stable
from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DegenerateDataError,
    DepthkitError,
    DepthkitNumericError,
    DomainError,
)
from .monitoring import DepthRankChart, ParametricChart, TrueDepth, average_run_length, false_alarm_rate
from .refined import RefinedHalfspaceDepth, fit_tail_1d, refined_depth_1d, tail_prob_1d

__all__ = [
    "ConfigurationError", "ConvergenceError", "DDClassifier", "DegenerateDataError", "DepthRankChart",
    "DepthkitError", "DepthkitNumericError", "DirectionSet", "DistSpec", "DomainError", "HalfspaceDepth",
    "ParametricChart", "RefinedHalfspaceDepth", "Sample", "TrueDepth", "average_run_length", "dd_coordinates",
    "depth_rank", "derive_seed", "false_alarm_rate", "fit_evt", "fit_linear_dd", "fit_tail_1d", "halfspace_depth",
    "hill", "k_path", "moment_estimator", "pdf", "quantile_point", "refined_depth_1d", "sample", "scale_estimator",
    "select_k_stable", "tail_prob_1d", "true_depth", "zero_hull_mask",
]
