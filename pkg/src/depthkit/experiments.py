"""Seeded simulation studies behind the figure reproductions.

Each figure id maps to a protocol that runs ``round(100 * scale)`` replicates,
writes one CSV row per replicate (and level / chart / setting where relevant),
a JSON summary with boxplot statistics, an SVG and finally ``manifest.json``.

Replicate ``i`` draws everything from ``derive_seed(seed, i, ...)``, so the
first replicates of a larger run coincide with a smaller run, and results do
not depend on how many worker threads were used.
"""

from __future__ import annotations

import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io as _io
from . import svg
from .classify import DDClassifier, zero_hull_mask
from .depth import HalfspaceDepth
from .distributions import FAMILIES, DistSpec, Sample, derive_seed, quantile_point, sample
from .exceptions import ConfigurationError
from .monitoring import (
    DEFAULT_ALPHA,
    DepthRankChart,
    ParametricChart,
    TrueDepth,
    average_run_length,
    false_alarm_rate,
)
from .refined import RefinedHalfspaceDepth, empirical_contour

FIGURES = (
    "fig1_contour",
    "fig2_univariate",
    "fig3_multivariate",
    "fig4_far",
    "fig5_arl_normal",
    "fig6_arl_elliptical",
    "fig7_ddclass",
)
LEVELS = (1 / 100, 1 / 500, 1 / 1000, 1 / 2000)
WHISKERS = "quartiles with whiskers at the extreme points within 1.5*IQR"
ARL_PROTOCOL = "first passage per run, restarted for each run, capped at 20/alpha"
DD_TIE_BREAK = "smallest slope among minimal training error"

_COMMON = {"n": 500, "k": 50, "seed": 0, "center": "origin", "method": None,
           "alpha_est": None, "dirs": None, "k_tail": None}
DEFAULTS = {
    "fig1_contour": {"dist": "sphcauchy2d", "level": None, "angles": 500},
    "fig2_univariate": {"dists": ["normal1d", "cauchy1d", "t2_1d", "burr1d"], "levels": list(LEVELS)},
    "fig3_multivariate": {
        "dists": ["normal2d", "sphcauchy2d", "elliptical2d", "clover2d", "sphcauchy3d", "sphcauchy4d"],
        "levels": list(LEVELS),
    },
    "fig4_far": {"dists": ["normal2d", "elliptical2d"], "alpha": DEFAULT_ALPHA, "stream": 5000},
    "fig5_arl_normal": {"dist": "normal2d", "shift": 2.0, "scale_change": 2.0,
                        "alpha": DEFAULT_ALPHA, "runs": 10, "cap": None},
    "fig6_arl_elliptical": {"dist": "elliptical2d", "shift": 4.0, "scale_change": 2.0,
                            "alpha": DEFAULT_ALPHA, "runs": 10, "cap": None},
    "fig7_ddclass": {"dists": ["normal2d", "elliptical2d"], "shifts": {"normal2d": 2.0, "elliptical2d": 4.0},
                     "scale_change": 2.0, "m": 500, "test": 5000},
}


@dataclass(frozen=True)
class FigureSpec:
    id: str
    scale: float = 1.0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.id not in FIGURES:
            raise ConfigurationError(f"unknown figure {self.id!r}; choose from {list(FIGURES)}")
        if not 0.0 < self.scale <= 1.0:
            raise ConfigurationError(f"scale must be in (0, 1], got {self.scale}")
        if self.replicates < 5:
            raise ConfigurationError(f"scale {self.scale} gives {self.replicates} replicates; need >= 5")
        unknown = set(self.overrides) - set(_COMMON) - set(DEFAULTS[self.id])
        if unknown:
            raise ConfigurationError(f"unknown parameters for {self.id}: {sorted(unknown)}")

    @property
    def replicates(self):
        return int(round(100 * self.scale))

    def params(self):
        out = dict(_COMMON)
        out.update(DEFAULTS[self.id])
        out.update({k: v for k, v in self.overrides.items() if v is not None})
        return out


@dataclass
class RunManifest:
    command: str
    params: dict
    seed: int
    replicates: int
    outputs: list = field(default_factory=list)
    duration: float = 0.0
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        self.outputs = [str(p) for p in self.outputs]
        listed = self.outputs + [str(path)]
        _io.write_json(path, {**asdict(self), "outputs": listed})
        return path


def worker_count():
    """Worker threads, capped by ``DEPTHKIT_THREADS``."""
    raw = os.environ.get("DEPTHKIT_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigurationError(f"DEPTHKIT_THREADS must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigurationError("DEPTHKIT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def map_replicates(fn, count, threads=None):
    """``[fn(0), ..., fn(count - 1)]``, possibly computed concurrently."""
    threads = worker_count() if threads is None else int(threads)
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(fn, range(count)))


def refined_engine(family, params, seed, center=None):
    """R_n estimator with the per-family defaults of the simulation studies.

    Univariate samples use the moment estimator; the bivariate normal uses
    500 random directions with the moment estimator; every other multivariate
    family uses ray scaling with Hill on the norms.
    """
    dim = FAMILIES[family]
    method = params.get("method")
    if method is None:
        method = "random" if family == "normal2d" else "ray"
    n_dirs = params.get("dirs")
    if n_dirs is None and method == "random":
        n_dirs = 500
    return RefinedHalfspaceDepth(
        k=params["k"],
        method=method if dim > 1 else "ray",
        alpha_est=params.get("alpha_est"),
        center=center or params.get("center", "origin"),
        n_directions=n_dirs,
        k_tail=params.get("k_tail"),
        random_state=seed,
    )


def _family_index(name):
    return list(FAMILIES).index(name)


# ---------------------------------------------------------------------------
# protocols; each returns (outputs, summary)


def _fig1(p, reps, seed, out, threads):
    spec = DistSpec(p["dist"])
    if spec.dim != 2:
        raise ConfigurationError("fig1 needs a bivariate distribution")
    n, k = p["n"], p["k"]
    level = p["level"] or 1.0 / n
    theta = 2.0 * np.pi * np.arange(p["angles"]) / p["angles"]
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    true_r = np.array([np.linalg.norm(quantile_point(spec, level, u)) for u in dirs])

    def one(i):
        s = derive_seed(seed, i)
        X = sample(spec, n, derive_seed(s, 0)).data
        model = refined_engine(spec.family, {**p, "method": "ray"}, derive_seed(s, 1)).fit(X)
        rn = model.contour(level, p["angles"])
        dn = empirical_contour(X, 1, p["angles"], model.center_)
        return X, model, rn, dn

    results = map_replicates(one, reps, threads)
    rows = []
    for i, (_, model, rn, dn) in enumerate(results):
        rows.append((i, model.gamma_hat_, float(np.median(rn.radius / true_r)), float(np.median(dn.radius / true_r))))
    X0, _, rn0, dn0 = results[0]
    outputs = [
        _io.write_table(out / "contour.csv", ["theta", "radius", "x", "y"], rn0.rows()),
        _io.write_table(out / "contour_dn.csv", ["theta", "radius", "x", "y"], dn0.rows()),
        _io.write_table(out / "contour_true.csv", ["theta", "radius", "x", "y"],
                        [(t, r, r * np.cos(t), r * np.sin(t)) for t, r in zip(theta, true_r)]),
        _io.write_table(out / "replicates.csv", ["rep", "gamma_hat", "median_rn_ratio", "median_dn_ratio"], rows),
    ]
    outputs += Sample(X0, dist=spec, seed=derive_seed(derive_seed(seed, 0), 0)).to_csv(out / "sample.csv")
    true_xy = true_r[:, None] * dirs
    outputs.append(svg.contours(out / "fig1_contour.svg",
                                [("R_n", rn0.xy), ("D_n (hull)", dn0.xy), ("true", true_xy)],
                                points=X0, title=f"{spec.family}: depth contours at level {level:.3g}"))
    rn_ratio = np.array([r[2] for r in rows])
    dn_ratio = np.array([r[3] for r in rows])
    summary = {
        "level": level,
        "median_rn_ratio": svg.box_stats(rn_ratio),
        "median_dn_ratio": svg.box_stats(dn_ratio),
        "rn_ratio_in_band_fraction": float(np.mean((rn_ratio >= 0.4) & (rn_ratio <= 2.5))),
        "dn_ratio_below_third_fraction": float(np.mean(dn_ratio < 1.0 / 3.0)),
    }
    return outputs, summary


def _fig_levels(p, reps, seed, out, threads, tag):
    levels = [float(v) for v in p["levels"]]
    outputs, summary, groups = [], {}, []
    for fam in p["dists"]:
        spec = DistSpec(fam)
        e1 = np.eye(spec.dim)[0]
        pts = np.vstack([np.atleast_1d(quantile_point(spec, lv, e1)) for lv in levels]).reshape(len(levels), spec.dim)
        fi = _family_index(fam)

        def one(i, spec=spec, pts=pts, fi=fi):
            s = derive_seed(seed, i, fi)
            X = sample(spec, p["n"], derive_seed(s, 0)).data
            model = refined_engine(spec.family, p, derive_seed(s, 1)).fit(X)
            return model.empirical_depth(pts), model.score_samples(pts)

        res = map_replicates(one, reps, threads)
        rows = []
        for i, (dn, rn) in enumerate(res):
            for j, lv in enumerate(levels):
                rows.append((i, lv, dn[j], rn[j], dn[j] / lv, rn[j] / lv))
        outputs.append(_io.write_table(out / f"{tag}_{fam}.csv",
                                       ["rep", "level", "dn", "rn", "dn_ratio", "rn_ratio"], rows))
        arr = np.array([r[1:] for r in rows])
        fam_summary = {}
        for j, lv in enumerate(levels):
            sel = arr[:, 0] == lv
            fam_summary[f"{lv:.6g}"] = {
                "dn_ratio": svg.box_stats(arr[sel, 3]),
                "rn_ratio": svg.box_stats(arr[sel, 4]),
                "dn_zero_fraction": float(np.mean(arr[sel, 1] == 0.0)),
            }
            groups.append((f"{fam} 1/{round(1 / lv)} R_n", arr[sel, 4]))
            groups.append((f"{fam} 1/{round(1 / lv)} D_n", arr[sel, 3]))
        summary[fam] = fam_summary
    outputs.append(svg.boxplot(out / f"{tag}.svg", groups, title="estimated / true depth", ylabel="ratio",
                               reference=1.0))
    return outputs, summary


def _fig2(p, reps, seed, out, threads):
    return _fig_levels(p, reps, seed, out, threads, "fig2")


def _fig3(p, reps, seed, out, threads):
    return _fig_levels(p, reps, seed, out, threads, "fig3")


def _fig4(p, reps, seed, out, threads):
    outputs, summary, groups = [], {}, []
    alpha = p["alpha"]
    for fam in p["dists"]:
        spec = DistSpec(fam)
        fi = _family_index(fam)

        def one(i, spec=spec, fi=fi):
            s = derive_seed(seed, i, fi)
            X = sample(spec, p["n"], derive_seed(s, 0)).data
            Y = sample(spec, p["stream"], derive_seed(s, 1)).data
            charts = (
                ParametricChart(alpha).fit(X),
                DepthRankChart(HalfspaceDepth(), alpha).fit(X),
                DepthRankChart(refined_engine(fam, p, derive_seed(s, 2)), alpha).fit(X),
            )
            return tuple(false_alarm_rate(c, Y) for c in charts)

        res = map_replicates(one, reps, threads)
        rows = [(i, *r) for i, r in enumerate(res)]
        outputs.append(_io.write_table(out / f"fig4_{fam}.csv", ["rep", "far_parametric", "far_dn", "far_rn"], rows))
        arr = np.array(res)
        summary[fam] = {name: svg.box_stats(arr[:, j]) for j, name in enumerate(("parametric", "D_n", "R_n"))}
        groups += [(f"{fam} {name}", arr[:, j]) for j, name in enumerate(("parametric", "D_n", "R_n"))]
    outputs.append(svg.boxplot(out / "fig4_far.svg", groups, title="achieved false alarm rates",
                               ylabel="FAR", reference=alpha))
    return outputs, summary


def _changes(p):
    d = FAMILIES[p["dist"]]
    loc = (float(p["shift"]),) * d
    return [("location", loc, 1.0), ("scale", None, float(p["scale_change"])),
            ("both", loc, float(p["scale_change"]))]


def _fig_arl(p, reps, seed, out, threads, tag, with_parametric):
    spec = DistSpec(p["dist"])
    alpha = p["alpha"]
    changes = _changes(p)
    names = ["D_oracle"] + (["parametric"] if with_parametric else []) + ["R_n"]

    def one(i):
        s = derive_seed(seed, i)
        X = sample(spec, p["n"], derive_seed(s, 0)).data
        charts = [DepthRankChart(TrueDepth(spec), alpha).fit(X)]
        if with_parametric:
            charts.append(ParametricChart(alpha).fit(X))
        charts.append(DepthRankChart(refined_engine(spec.family, p, derive_seed(s, 1)), alpha).fit(X))
        rows = []
        for ci, (cname, shift, scl) in enumerate(changes):
            shifted = DistSpec(spec.family, shift, scl)
            for name, chart in zip(names, charts):
                # common random numbers across charts
                r = average_run_length(chart, shifted, p["runs"], p["cap"], derive_seed(s, 2, ci))
                rows.append((i, cname, name, r.arl, int(r.capped.sum())))
        return rows

    rows = [r for block in map_replicates(one, reps, threads) for r in block]
    outputs = [_io.write_table(out / f"{tag}_{spec.family}.csv", ["rep", "change", "chart", "arl", "capped_runs"], rows)]
    summary, groups = {}, []
    for cname, _, _ in changes:
        summary[cname] = {}
        for name in names:
            vals = np.array([r[3] for r in rows if r[1] == cname and r[2] == name])
            summary[cname][name] = svg.box_stats(vals)
            summary[cname][name]["capped_runs"] = int(sum(r[4] for r in rows if r[1] == cname and r[2] == name))
            groups.append((f"{cname} {name}", vals))
    outputs.append(svg.boxplot(out / f"{tag}.svg", groups, title=f"ARL under process changes ({spec.family})",
                               ylabel="ARL", log=True))
    return outputs, summary


def _fig5(p, reps, seed, out, threads):
    return _fig_arl(p, reps, seed, out, threads, "fig5", with_parametric=True)


def _fig6(p, reps, seed, out, threads):
    return _fig_arl(p, reps, seed, out, threads, "fig6", with_parametric=False)


def _fig7(p, reps, seed, out, threads):
    outputs, summary, groups = [], {}, []
    m, n, test = p["m"], p["n"], p["test"]
    for fam in p["dists"]:
        F = DistSpec(fam)
        shift = (float(p["shifts"].get(fam, 2.0)),) * F.dim
        settings = [("location", shift, 1.0), ("scale", None, float(p["scale_change"])),
                    ("both", shift, float(p["scale_change"]))]
        fi = _family_index(fam)
        for si, (cname, sh, scl) in enumerate(settings):
            G = DistSpec(fam, sh, scl)

            def one(i, G=G, fi=fi, si=si, F=F):
                s = derive_seed(seed, i, fi, si)
                X = np.vstack([sample(F, m, derive_seed(s, 0)).data, sample(G, n, derive_seed(s, 1)).data])
                y = np.r_[np.zeros(m, dtype=int), np.ones(n, dtype=int)]
                h = test // 2
                T = np.vstack([sample(F, h, derive_seed(s, 2)).data, sample(G, test - h, derive_seed(s, 3)).data])
                yt = np.r_[np.zeros(h, dtype=int), np.ones(test - h, dtype=int)]
                mask = zero_hull_mask(T, X[:m], X[m:])
                dn = DDClassifier(HalfspaceDepth(), random_state=derive_seed(s, 4)).fit(X, y)
                engine = refined_engine(fam, {**p, "center": "median"}, derive_seed(s, 5))
                rn = DDClassifier(engine, random_state=derive_seed(s, 4)).fit(X, y)
                pd, pr = dn.predict(T), rn.predict(T)
                wrong_d, wrong_r = pd != yt, pr != yt
                nm = int(mask.sum())
                md = float(wrong_d[mask].mean()) if nm else float("nan")
                mr = float(wrong_r[mask].mean()) if nm else float("nan")
                return (nm, int(wrong_d[mask].sum()), int(wrong_r[mask].sum()), md, mr,
                        float(wrong_d.mean()), float(wrong_r.mean()))

            res = map_replicates(one, reps, threads)
            rows = [(i, cname, *r) for i, r in enumerate(res)]
            outputs.append(_io.write_table(
                out / f"fig7_{fam}_{cname}.csv",
                ["rep", "change", "masked", "masked_wrong_dn", "masked_wrong_rn", "masked_err_dn", "masked_err_rn",
                 "err_dn", "err_rn"], rows))
            arr = np.array([r[2:] for r in rows], dtype=float)
            total = arr[:, 0].sum()
            summary[f"{fam}/{cname}"] = {
                "masked_points": int(total),
                "masked_err_dn": svg.box_stats(arr[:, 3]),
                "masked_err_rn": svg.box_stats(arr[:, 4]),
                "pooled_masked_err_dn": float(arr[:, 1].sum() / total) if total else None,
                "pooled_masked_err_rn": float(arr[:, 2].sum() / total) if total else None,
                "err_dn": svg.box_stats(arr[:, 5]),
                "err_rn": svg.box_stats(arr[:, 6]),
            }
            groups.append((f"{fam} {cname} R_n", arr[:, 4]))
    outputs.append(svg.boxplot(out / "fig7_ddclass.svg", groups, title="misclassification of zero-depth points",
                               ylabel="error rate", reference=0.5))
    return outputs, summary


_PROTOCOLS = {
    "fig1_contour": _fig1,
    "fig2_univariate": _fig2,
    "fig3_multivariate": _fig3,
    "fig4_far": _fig4,
    "fig5_arl_normal": _fig5,
    "fig6_arl_elliptical": _fig6,
    "fig7_ddclass": _fig7,
}


def run_figure(spec, out_dir, threads=None):
    """Run one figure protocol into ``out_dir`` and return its manifest.

    On failure the manifest is still written (status ``failed``, with the
    stage that raised) before the exception propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = spec.params()
    seed = int(p["seed"])
    manifest = RunManifest(
        command=f"repro {spec.id}",
        params={**p, "scale": spec.scale, "whiskers": WHISKERS, "arl_protocol": ARL_PROTOCOL,
                "dd_tie_break": DD_TIE_BREAK, "test_direction": "first coordinate axis"},
        seed=seed,
        replicates=spec.replicates,
    )
    stage = "simulate"
    start = time.perf_counter()
    try:
        outputs, summary = _PROTOCOLS[spec.id](p, spec.replicates, seed, out, threads)
        manifest.outputs.extend(outputs)
        stage = "summarize"
        summary = {"figure": spec.id, "replicates": spec.replicates, "k": p["k"], "whiskers": WHISKERS,
                   "groups": summary}
        manifest.outputs.append(_io.write_json(out / "summary.json", summary))
        manifest.status = "ok"
    except Exception as exc:
        manifest.status = "failed"
        manifest.failed_stage = stage
        manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        manifest.outputs.extend(sorted(q for q in out.iterdir() if q.name != "manifest.json"))
        raise
    finally:
        manifest.duration = time.perf_counter() - start
        manifest.write(out)
    return manifest
