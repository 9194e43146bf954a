"""Test distributions: seeded samplers, densities and true half-space depths.

Ten families are supported, four univariate and six multivariate.  Each one
can be shifted and scaled coordinatewise through :class:`DistSpec`, which is
how the out-of-control processes of the monitoring studies are described.

True depths are closed form for the normal, Cauchy, t(2), Burr and spherical
Cauchy families.  The bivariate elliptical family is reduced to its spherical
version by the map ``(x, y) -> (x / 2, y)`` and the clover family is handled by
minimising one-dimensional angular quadratures over directions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .exceptions import ConfigurationError, ConvergenceError
from . import io as _io

FAMILIES = {
    "normal1d": 1,
    "cauchy1d": 1,
    "t2_1d": 1,
    "burr1d": 1,
    "normal2d": 2,
    "sphcauchy2d": 2,
    "elliptical2d": 2,
    "clover2d": 2,
    "sphcauchy3d": 3,
    "sphcauchy4d": 4,
}

# Tail index gamma of each family (0 for the normal ones).
EXTREME_VALUE_INDEX = {
    "normal1d": 0.0,
    "cauchy1d": 1.0,
    "t2_1d": 0.5,
    "burr1d": 1.0 / 3.0,
    "normal2d": 0.0,
    "sphcauchy2d": 1.0,
    "elliptical2d": 1.0 / 3.0,
    "clover2d": 1.0 / 3.0,
    "sphcauchy3d": 1.0,
    "sphcauchy4d": 1.0,
}

CLOVER_ENVELOPE = 3.6


def _solve_r0():
    # Nonzero root of (1 + 5/2 s)^2 = (1 + s)^3 with s = r0**6; s = 0 is the trivial root.
    s = optimize.brentq(lambda s: (1.0 + s) ** 3 - (1.0 + 2.5 * s) ** 2, 1.0, 10.0, xtol=1e-15)
    return s ** (1.0 / 6.0)


R0 = _solve_r0()
assert abs(R0 - 1.2481) < 1e-3, R0
_S0 = R0 ** 6
# Constant density level inside r0 (times 3/(2 pi) for the spherical version).
_C0 = R0 ** 4 * (1.0 + _S0) ** -1.5
# Probability mass of the spherical version inside the disc of radius r0.
_MASS_IN = 1.5 * _S0 * (1.0 + _S0) ** -1.5


@dataclass(frozen=True)
class DistSpec:
    """One of the supported families, optionally shifted and scaled.

    The observation is ``shift + scale * Z`` with ``Z`` from the base family.
    """

    family: str
    shift: tuple = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unsupported family {self.family!r}; choose from {sorted(FAMILIES)}"
            )
        d = FAMILIES[self.family]
        shift = (0.0,) * d if self.shift is None else tuple(float(v) for v in np.ravel(self.shift))
        if len(shift) != d:
            raise ConfigurationError(
                f"shift has dimension {len(shift)} but {self.family} has dimension {d}"
            )
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigurationError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def dim(self):
        return FAMILIES[self.family]

    @property
    def gamma(self):
        return EXTREME_VALUE_INDEX[self.family]

    def to_dict(self):
        return {"family": self.family, "shift": list(self.shift), "scale": self.scale}


@dataclass
class Sample:
    """An ``n x d`` data table plus the distribution and seed that produced it."""

    data: np.ndarray
    dist: DistSpec | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ConfigurationError("a sample needs n >= 1 rows of dimension d >= 1")
        self.data = data

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def manifest(self):
        out = {"n": self.n, "seed": self.seed}
        if self.dist is not None:
            out.update(self.dist.to_dict())
        else:
            out.update({"family": None, "shift": None, "scale": None})
        return out

    def to_csv(self, path):
        """Write ``path`` (CSV, header x1..xd) and a ``.json`` sidecar manifest."""
        path = Path(path)
        _io.write_table(path, [f"x{j + 1}" for j in range(self.d)], self.data)
        sidecar = path.with_suffix(".json")
        _io.write_json(sidecar, self.manifest())
        return [path, sidecar]

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        header, rows = _io.read_table(path)
        if not header or any(h != f"x{j + 1}" for j, h in enumerate(header)):
            raise ConfigurationError(f"{path}: expected header x1..xd, got {header}")
        dist, seed = None, None
        sidecar = path.with_suffix(".json")
        if sidecar.exists():
            man = json.loads(sidecar.read_text())
            seed = man.get("seed")
            if man.get("family"):
                dist = DistSpec(man["family"], tuple(man["shift"]), man["scale"])
        return cls(rows, dist=dist, seed=seed)


# ---------------------------------------------------------------------------
# sampling


def _spherical_radius(rng, size):
    """Radii of the spherical version of the elliptical/clover families (inverse CDF)."""
    v = rng.random(size)
    r = np.empty(size)
    inner = v < _MASS_IN
    r[inner] = R0 * np.sqrt(v[inner] / _MASS_IN)
    tail = 1.0 - v[~inner]  # P(R > r) = (1 + r^6)^(-1/2)
    r[~inner] = (tail ** -2.0 - 1.0) ** (1.0 / 6.0)
    return r


def _clover_ratio(r, theta):
    """Clover density divided by the spherical envelope density, at polar (r, theta)."""
    s2 = np.sin(2.0 * theta) ** 2
    return np.where(
        r >= R0,
        (9.0 - 8.0 * s2) / 5.0,
        (5.0 + (r / R0) * (4.0 - 8.0 * s2)) / 5.0,
    )


def _sample_clover(rng, n):
    """Rejection sampler; returns the points and the number of proposals used."""
    out = []
    have = 0
    proposed = 0
    while have < n:
        batch = max(64, int(1.2 * CLOVER_ENVELOPE * (n - have)))
        r = _spherical_radius(rng, batch)
        theta = rng.uniform(0.0, 2.0 * np.pi, batch)
        u = rng.random(batch)
        keep = u * CLOVER_ENVELOPE < _clover_ratio(r, theta)
        idx = np.flatnonzero(keep)
        need = n - have
        if idx.size >= need:
            # proposals past the last accepted one are not counted
            proposed += int(idx[need - 1]) + 1
            idx = idx[:need]
        else:
            proposed += batch
        out.append(np.column_stack([r[idx] * np.cos(theta[idx]), r[idx] * np.sin(theta[idx])]))
        have += idx.size
    return np.vstack(out), proposed


def _sample_base(family, n, rng):
    d = FAMILIES[family]
    if family == "normal1d" or family == "normal2d":
        return rng.standard_normal((n, d))
    if family == "cauchy1d":
        return rng.standard_cauchy((n, 1))
    if family == "t2_1d":
        return rng.standard_t(2, (n, 1))
    if family == "burr1d":
        v = 1.0 - rng.random(n)  # in (0, 1]
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (sign * (v ** -2.0 - 1.0) ** (1.0 / 6.0))[:, None]
    if family.startswith("sphcauchy"):
        z = rng.standard_normal((n, d))
        chi = np.abs(rng.standard_normal(n))
        return z / chi[:, None]
    if family == "elliptical2d":
        r = _spherical_radius(rng, n)
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        return np.column_stack([2.0 * r * np.cos(theta), r * np.sin(theta)])
    if family == "clover2d":
        return _sample_clover(rng, n)[0]
    raise ConfigurationError(f"unsupported family {family!r}")


def derive_seed(master, *path):
    """Child seed for ``path`` (e.g. a replicate index) under ``master``.

    Counter based, so replicate ``i`` gets the same seed whatever the total
    replicate count.
    """
    return int(np.random.SeedSequence([int(master), *map(int, path)]).generate_state(1)[0])


def sample(spec, n, seed):
    """Draw ``n`` i.i.d. observations from ``spec``; deterministic in ``(spec, n, seed)``."""
    if not isinstance(spec, DistSpec):
        spec = DistSpec(spec)
    if int(n) < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    z = _sample_base(spec.family, int(n), rng)
    data = np.asarray(spec.shift) + spec.scale * z
    return Sample(data, dist=spec, seed=None if seed is None else int(seed))


# ---------------------------------------------------------------------------
# densities and CDFs


def _standardize(spec, point):
    x = np.asarray(point, dtype=float)
    scalar = x.ndim <= 1 and not (spec.dim == 1 and x.ndim == 1 and x.size > 1)
    if spec.dim == 1:
        x = x.reshape(-1, 1)
    else:
        x = np.atleast_2d(x)
    if x.shape[1] != spec.dim:
        raise ConfigurationError(
            f"point has dimension {x.shape[1]} but {spec.family} has dimension {spec.dim}"
        )
    return (x - np.asarray(spec.shift)) / spec.scale, scalar


def _spherical_radial_density(r):
    """Density (per unit area) of the spherical version at radius r."""
    r = np.asarray(r, dtype=float)
    out = np.full(r.shape, 3.0 / (2.0 * np.pi) * _C0)
    outer = r >= R0
    ro = r[outer]
    out[outer] = 3.0 * ro ** 4 / (2.0 * np.pi * (1.0 + ro ** 6) ** 1.5)
    return out


def _base_pdf(family, z):
    if family in ("normal1d", "normal2d"):
        d = z.shape[1]
        return np.exp(-0.5 * np.sum(z * z, axis=1)) / (2.0 * np.pi) ** (d / 2.0)
    if family == "cauchy1d":
        return 1.0 / (np.pi * (1.0 + z[:, 0] ** 2))
    if family == "t2_1d":
        return (2.0 + z[:, 0] ** 2) ** -1.5
    if family == "burr1d":
        x = np.abs(z[:, 0])
        return 3.0 * x ** 5 / (2.0 * (1.0 + x ** 6) ** 1.5)
    if family.startswith("sphcauchy"):
        d = z.shape[1]
        # Multivariate t with one degree of freedom.
        const = math.gamma((d + 1) / 2.0) / (math.pi ** ((d + 1) / 2.0))
        return const * (1.0 + np.sum(z * z, axis=1)) ** (-(d + 1) / 2.0)
    if family == "elliptical2d":
        q = np.sqrt(z[:, 0] ** 2 / 4.0 + z[:, 1] ** 2)
        return 0.5 * _spherical_radial_density(q)
    if family == "clover2d":
        x, y = z[:, 0], z[:, 1]
        rr = x * x + y * y
        r = np.sqrt(rr)
        inner = 3.0 / (10.0 * np.pi) * _C0 * (
            5.0 + np.divide(4.0 * rr ** 2 - 32.0 * x * x * y * y, R0 * r ** 3,
                            out=np.zeros_like(r), where=r > 0)
        )
        outer = 3.0 * (9.0 * rr ** 2 - 32.0 * x * x * y * y) / (10.0 * np.pi * (1.0 + rr ** 3) ** 1.5)
        return np.where(r < R0, inner, outer)
    raise ConfigurationError(f"unsupported family {family!r}")


def pdf(spec, point):
    """Density of ``spec`` at one point (d-vector) or at each row of an (m, d) array."""
    z, scalar = _standardize(spec, point)
    out = _base_pdf(spec.family, z) / spec.scale ** spec.dim
    return float(out[0]) if scalar else out


def _tail_1d(family, t):
    """P(Z >= t) for t >= 0, computed without cancellation."""
    t = np.asarray(t, dtype=float)
    if family == "normal1d":
        return special.ndtr(-t)
    if family == "cauchy1d":
        return np.arctan2(1.0, t) / np.pi
    if family == "t2_1d":
        root = np.sqrt(2.0 + t * t)
        return 1.0 / (root * (root + t))
    if family == "burr1d":
        return 0.5 / np.sqrt(1.0 + t ** 6)
    raise ConfigurationError(f"{family} is not univariate")


def cdf(spec, x):
    """Distribution function of a univariate ``spec``."""
    if spec.dim != 1:
        raise ConfigurationError("cdf is only defined for univariate families")
    z, scalar = _standardize(spec, x)
    z = z[:, 0]
    upper = _tail_1d(spec.family, np.abs(z))
    out = np.where(z >= 0, 1.0 - upper, upper)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# true depth


def _radial_survival(r):
    """P(R > r) for the radius of the spherical elliptical/clover version."""
    r = np.asarray(r, dtype=float)
    out = np.empty(r.shape)
    inner = r < R0
    out[inner] = 1.0 - _MASS_IN * (r[inner] / R0) ** 2
    ro = r[~inner]
    out[~inner] = ro ** -3 / np.sqrt(1.0 + ro ** -6)
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _gl_nodes(a, b):
    """Gauss-Legendre nodes/weights on [a, b] (vectorised over leading axes of a, b)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1.0), half * _GL_W


def spherical_marginal_tail(t):
    """P(U_1 >= t) for the spherical version of the elliptical family, t >= 0.

    Written as (1/pi) * int_0^{pi/2} P(R > t / cos(psi)) dpsi and integrated
    by Gauss-Legendre on pieces split where ``t / cos(psi)`` crosses r0.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ConfigurationError("t must be nonnegative")
    kink = np.where(t < R0, np.arccos(np.minimum(t / R0, 1.0)), 0.0)
    total = np.zeros(t.shape)
    for lo, hi in ((np.zeros_like(t), kink), (kink, np.full_like(t, np.pi / 2))):
        psi, w = _gl_nodes(lo, hi)
        r = t[:, None] / np.cos(psi)
        total += np.sum(w * _radial_survival(r), axis=-1)
    return total / np.pi


def _clover_radial_integral(theta, a):
    """int_a^inf f_clover(r, theta) r dr for a > 0."""
    s2 = np.sin(2.0 * theta) ** 2
    ang = (9.0 - 8.0 * s2) / (10.0 * np.pi)
    outer_from = lambda x: ang * x ** -3 / np.sqrt(1.0 + x ** -6)  # noqa: E731
    am = np.minimum(a, R0)
    inner = (3.0 / (10.0 * np.pi)) * _C0 * (
        2.5 * (R0 ** 2 - am ** 2) + (4.0 - 8.0 * s2) * (R0 ** 3 - am ** 3) / (3.0 * R0)
    )
    return np.where(a >= R0, outer_from(np.maximum(a, R0)), inner + outer_from(np.full_like(a, R0)))


def clover_directional_tail(phi, t):
    """P(u_phi . Z >= t) for the clover family, direction angle phi, t > 0.

    Vectorised over matching shapes of ``phi`` and ``t``.
    """
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    phi, t = np.broadcast_arrays(phi, t)
    kink = np.where(t < R0, np.arccos(np.minimum(t / R0, 1.0)), 0.0)
    half = np.full(t.shape, np.pi / 2)
    total = np.zeros(t.shape)
    for lo, hi in ((-half, -kink), (-kink, kink), (kink, half)):
        psi, w = _gl_nodes(lo, hi)
        with np.errstate(divide="ignore"):
            a = t[..., None] / np.cos(psi)
        total += np.sum(w * _clover_radial_integral(phi[..., None] + psi, a), axis=-1)
    return total


def _clover_halfplane_prob(phi, x):
    """P(u_phi . Z >= u_phi . x) for clover, any sign of the projection."""
    t = np.cos(phi) * x[0] + np.sin(phi) * x[1]
    tail = clover_directional_tail(phi, np.maximum(np.abs(t), 1e-300))
    # central symmetry: P(u.Z >= -s) = 1 - P(u.Z > s)
    return np.where(t >= 0, tail, 1.0 - tail)


def _clover_depth_point(x, n_dirs=720):
    rho = math.hypot(x[0], x[1])
    if rho == 0.0:
        return 0.5
    beta = math.atan2(x[1], x[0])
    # only directions within pi/2 of the point's angle have probability below 1/2
    phis = beta + np.linspace(-np.pi / 2, np.pi / 2, n_dirs // 2 + 1)
    vals = _clover_halfplane_prob(phis, x)
    i = int(np.argmin(vals))
    step = np.pi / (n_dirs // 2)
    lo, hi = phis[max(i - 1, 0)], phis[min(i + 1, len(phis) - 1)]
    res = optimize.minimize_scalar(
        lambda p: float(_clover_halfplane_prob(np.array(p), x)),
        bounds=(lo, hi), method="bounded", options={"xatol": step * 1e-6},
    )
    return float(min(vals[i], res.fun))


def _base_depth(family, z):
    if FAMILIES[family] == 1:
        return _tail_1d(family, np.abs(z[:, 0]))
    norm = np.sqrt(np.sum(z * z, axis=1))
    if family == "normal2d":
        return special.ndtr(-norm)
    if family.startswith("sphcauchy"):
        # marginals are standard Cauchy: 1/2 - arctan(r)/pi
        return np.arctan2(1.0, norm) / np.pi
    if family == "elliptical2d":
        q = np.sqrt(z[:, 0] ** 2 / 4.0 + z[:, 1] ** 2)
        return spherical_marginal_tail(q)
    if family == "clover2d":
        return np.array([_clover_depth_point(row) for row in z])
    raise ConfigurationError(f"unsupported family {family!r}")


def true_depth(spec, point):
    """Population half-space depth of ``spec`` at one point or at each row of an array."""
    z, scalar = _standardize(spec, point)
    out = _base_depth(spec.family, z)
    return float(out[0]) if scalar else out


def _base_quantile_radius(family, level):
    if family == "normal1d" or family == "normal2d":
        return -special.ndtri(level)
    if family == "cauchy1d" or family.startswith("sphcauchy"):
        return 1.0 / math.tan(math.pi * level)
    if family == "t2_1d":
        q = 1.0 - 2.0 * level
        return q * math.sqrt(2.0 / (1.0 - q * q))
    if family == "burr1d":
        return ((0.5 / level) ** 2 - 1.0) ** (1.0 / 6.0)
    if family == "elliptical2d":
        hi = 1.0
        while spherical_marginal_tail(hi)[0] > level:
            hi *= 2.0
            if hi > 2.0 ** 60:
                raise ConvergenceError("could not bracket the quantile")
        return optimize.brentq(lambda t: spherical_marginal_tail(t)[0] - level, 0.0, hi,
                               xtol=1e-14, rtol=1e-14, maxiter=200)
    return None


def quantile_point(spec, level, direction):
    """Point on the ray ``shift + t * direction`` whose true depth equals ``level``."""
    level = float(level)
    if not 0.0 < level < 0.5:
        raise ConfigurationError(f"level must be in (0, 1/2), got {level}")
    u = np.atleast_1d(np.asarray(direction, dtype=float))
    if u.shape != (spec.dim,):
        raise ConfigurationError("direction dimension does not match the family")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ConfigurationError("direction must be a unit vector")
    shift = np.asarray(spec.shift)
    radius = _base_quantile_radius(spec.family, level)
    if radius is not None:
        if spec.family == "elliptical2d":
            # the depth is a function of |(x/2, y)| only
            radius = radius / math.hypot(u[0] / 2.0, u[1])
        return shift + spec.scale * radius * u
    # clover: bisection along the ray
    f = lambda s: _clover_depth_point(s * u) - level  # noqa: E731
    hi = 1.0
    while f(hi) > 0:
        hi *= 2.0
        if hi > 2.0 ** 60:
            raise ConvergenceError("could not bracket the quantile along the ray")
    try:
        s = optimize.brentq(f, 0.0, hi, xtol=1e-13, rtol=1e-13, maxiter=200)
    except RuntimeError as exc:
        raise ConvergenceError(str(exc)) from exc
    return shift + spec.scale * s * u
