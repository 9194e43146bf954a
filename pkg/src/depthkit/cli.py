"""Command line interface: ``depthkit <command> [options]``.

Exit status is 0 on success, 2 for configuration errors (bad flags, invalid
parameters) and 3 for numeric or degenerate-data failures.  Every run that
gets as far as knowing its output directory writes ``manifest.json`` there.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from . import io as _io
from . import svg
from .classify import DDClassifier, zero_hull_mask
from .depth import DirectionSet, depth_counts_1d, depth_counts_2d, depth_counts_random
from .distributions import FAMILIES, DistSpec, Sample, derive_seed, quantile_point, sample
from .evt import ESTIMATORS, fit_evt, k_path, select_k_stable
from .exceptions import ConfigurationError, DepthkitNumericError
from .experiments import (
    DEFAULTS,
    FIGURES,
    LEVELS,
    FigureSpec,
    RunManifest,
    map_replicates,
    refined_engine,
    run_figure,
)
from .monitoring import (
    DEFAULT_ALPHA,
    DepthRankChart,
    ParametricChart,
    TrueDepth,
    average_run_length,
    false_alarm_rate,
)
from .depth import HalfspaceDepth
from .refined import empirical_contour

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(eval_fraction(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def eval_fraction(token):
    """Parse ``0.002`` or ``1/500``."""
    token = token.strip()
    if "/" in token:
        num, den = token.split("/", 1)
        return float(num) / float(den)
    return float(token)


def _level(text):
    try:
        return eval_fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad level {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--dist", help="distribution family (comma-separated list for some repro figures)")
    g.add_argument("--n", type=int, help="sample size")
    g.add_argument("--m", type=int, help="size of the second training sample (ddclass)")
    g.add_argument("--k", type=int, help="number of upper order statistics (default 50)")
    g.add_argument("--k-tail", type=int, help="separate k for the tail index estimate")
    g.add_argument("--alpha", type=float, help="nominal false alarm rate")
    g.add_argument("--alpha-est", choices=ESTIMATORS, help="tail index estimator")
    g.add_argument("--method", choices=("exact2d", "random", "ray"), help="depth / refined depth method")
    g.add_argument("--dirs", type=int, help="number of random directions")
    g.add_argument("--center", choices=("origin", "median"), help="ray / projection center")
    g.add_argument("--level", type=_level, help="depth level, e.g. 0.002 or 1/500")
    g.add_argument("--levels", type=_floats, help="comma-separated depth levels")
    g.add_argument("--angles", type=int, help="number of contour angles")
    g.add_argument("--scale", type=float, help="replicate scale for repro (0, 1]")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--out-dir", default="depthkit_out", help="output directory")
    g.add_argument("--input", help="sample CSV (header x1..xd) instead of simulating")
    g.add_argument("--queries", help="CSV of query points (header x1..xd)")

    p = _Parser(prog="depthkit", description="Half-space depth with extreme-value refinement.")
    p.add_argument("--version", action="version", version=f"depthkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("sample", parents=[common], help="draw a seeded sample")
    sub.add_parser("depth", parents=[common], help="empirical half-space depth D_n")
    sub.add_parser("rdepth", parents=[common], help="refined depth R_n")
    e = sub.add_parser("evt", parents=[common], help="tail index estimates along k")
    e.add_argument("--k-min", type=int, default=10, help="smallest k on the path")
    e.add_argument("--k-max", type=int, help="largest k on the path (default 0.3 n)")
    e.add_argument("--window", type=int, default=15, help="plateau window for choosing k")
    sub.add_parser("contour", parents=[common], help="R_n and D_n depth contours (bivariate)")
    f = sub.add_parser("spc-far", parents=[common], help="false alarm rates of the three charts")
    f.add_argument("--stream", type=int, default=5000, help="in-control stream length")
    f.add_argument("--reps", type=int, default=1, help="independent reference samples")
    a = sub.add_parser("spc-arl", parents=[common], help="average run lengths under a process change")
    a.add_argument("--shift", type=float, default=0.0, help="location change applied to every coordinate")
    a.add_argument("--scale-change", type=float, default=1.0, help="scale of the changed process")
    a.add_argument("--reps", type=int, default=100, help="first-passage runs")
    a.add_argument("--cap", type=int, help="run-length cap (default 20/alpha)")
    d = sub.add_parser("ddclass", parents=[common], help="linear DD-classifier study")
    d.add_argument("--shift", type=float, default=2.0, help="location shift of the G population")
    d.add_argument("--scale-change", type=float, default=1.0, help="scale of the G population")
    d.add_argument("--test", type=int, default=5000, help="test points per population")
    r = sub.add_parser("repro", parents=[common], help="reproduce a figure protocol")
    r.add_argument("figure", help=f"one of {', '.join(FIGURES)} (or fig1..fig7)")
    r.add_argument("--stream", type=int, help="in-control stream length (fig4)")
    r.add_argument("--runs", type=int, help="first-passage runs per replicate (ARL figures)")
    r.add_argument("--test", type=int, help="test points per setting (fig7)")
    return p


# ---------------------------------------------------------------------------
# helpers


def _dist(args, default):
    return DistSpec(args.dist or default)


def _n(args, default=500):
    n = default if args.n is None else args.n
    if n < 1:
        raise ConfigurationError("--n must be >= 1")
    return n


def _k(args):
    return 50 if args.k is None else args.k


def _data(args, default_dist):
    """The input sample: ``--input`` if given, else simulated from ``--dist``."""
    if args.input:
        return Sample.from_csv(args.input)
    spec = _dist(args, default_dist)
    return sample(spec, _n(args), args.seed)


def _read_points(path, d):
    header, Q = _io.read_table(path)
    if Q.shape[1] != d:
        raise ConfigurationError(f"{path}: queries have {Q.shape[1]} columns, sample has {d}")
    return Q


def _xcols(d):
    return [f"x{j + 1}" for j in range(d)]


def _engine_params(args):
    return {"k": _k(args), "method": args.method, "alpha_est": args.alpha_est,
            "center": args.center or "origin", "dirs": args.dirs, "k_tail": args.k_tail}


# ---------------------------------------------------------------------------
# commands; each returns (outputs, params, replicates)


def cmd_sample(args, out):
    spec = _dist(args, "normal2d")
    s = sample(spec, _n(args), args.seed)
    return s.to_csv(out / "sample.csv"), {"dist": spec.family, "n": s.n}, 1


def cmd_depth(args, out):
    s = _data(args, "normal2d")
    X = s.data
    Q = _read_points(args.queries, s.d) if args.queries else X
    method = args.method or ("exact2d" if s.d <= 2 else "random")
    if method == "exact2d":
        if s.d == 1:
            counts = depth_counts_1d(X, Q[:, 0])
        elif s.d == 2:
            counts = depth_counts_2d(X, Q)
        else:
            raise ConfigurationError(f"exact2d needs d <= 2, sample has d={s.d}")
    elif method == "random":
        dirs = DirectionSet.random(s.d, args.dirs or 1000, derive_seed(args.seed, 1))
        counts = depth_counts_random(X, Q, dirs)
    else:
        raise ConfigurationError("--method ray applies to rdepth, not depth")
    rows = [(*q, c / s.n) for q, c in zip(Q, counts)]
    path = _io.write_table(out / "depth.csv", _xcols(s.d) + ["depth"], rows)
    return [path], {"method": method, "n": s.n, "d": s.d, "dirs": args.dirs}, 1


def cmd_rdepth(args, out):
    s = _data(args, "sphcauchy2d")
    if args.method == "exact2d":
        raise ConfigurationError("rdepth methods are 'ray' and 'random'")
    params = _engine_params(args)
    family = s.dist.family if s.dist is not None else ("normal1d" if s.d == 1 else "sphcauchy2d")
    model = refined_engine(family, params, derive_seed(args.seed, 1)).fit(s.data)
    if args.queries:
        Q = _read_points(args.queries, s.d)
        levels = [float("nan")] * len(Q)
    else:
        if s.dist is None:
            raise ConfigurationError("without --queries the test points need a known --dist")
        levels = args.levels or ([args.level] if args.level else list(LEVELS))
        e1 = np.eye(s.d)[0]
        Q = np.vstack([np.atleast_1d(quantile_point(s.dist, lv, e1)) for lv in levels]).reshape(len(levels), s.d)
    rn, clamped = model.score_samples_with_flags(Q)
    dn = model.empirical_depth(Q)
    rows = [(*q, lv, a, b, c) for q, lv, a, b, c in zip(Q, levels, dn, rn, clamped)]
    outputs = [
        _io.write_table(out / "rdepth.csv", _xcols(s.d) + ["true_depth", "dn", "rn", "clamped"], rows),
        _io.write_json(out / "model.json", model.manifest()),
    ]
    return outputs, {**params, "n": s.n, "d": s.d, **model.manifest()}, 1


def cmd_evt(args, out):
    s = _data(args, "cauchy1d")
    x = s.data[:, 0] if s.d == 1 else np.linalg.norm(s.data, axis=1)
    est = args.alpha_est or "hill"
    k_max = args.k_max if args.k_max is not None else max(args.k_min + 1, int(0.3 * x.size))
    path = k_path(x, est, args.k_min, k_max)
    outputs = [_io.write_table(out / "evt_path.csv", ["k", "gamma_hat"], path.rows())]
    result = {"estimator": est, "missing_k": path.missing}
    try:
        result["selected_k"] = select_k_stable(path, args.window)
    except (ConfigurationError, DepthkitNumericError) as exc:
        result["selected_k"] = None
        result["selection_error"] = str(exc)
    k = args.k if args.k is not None else result["selected_k"]
    if k is not None:
        fit = fit_evt(x, k, est)
        result.update({"k": fit.k, "gamma_hat": fit.gamma_hat, "a_hat": fit.a_hat, "b_hat": fit.b_hat})
    outputs.append(_io.write_json(out / "evt.json", result))
    return outputs, {"n": s.n, **result}, 1


def cmd_contour(args, out):
    s = _data(args, "sphcauchy2d")
    if s.d != 2:
        raise ConfigurationError("contours are bivariate")
    params = {**_engine_params(args), "method": "ray"}
    model = refined_engine("sphcauchy2d", params, derive_seed(args.seed, 1)).fit(s.data)
    level = args.level or 1.0 / s.n
    angles = args.angles or 500
    rn = model.contour(level, angles)
    dn = empirical_contour(s.data, 1, angles, model.center_)
    outputs = [
        _io.write_table(out / "contour.csv", ["theta", "radius", "x", "y"], rn.rows()),
        _io.write_table(out / "contour_dn.csv", ["theta", "radius", "x", "y"], dn.rows()),
        svg.contours(out / "contour.svg", [("R_n", rn.xy), ("D_n (hull)", dn.xy)], points=s.data,
                     title=f"depth contours at level {level:.3g}"),
    ]
    return outputs, {**params, "level": level, "angles": angles, **model.manifest()}, 1


def cmd_spc_far(args, out):
    spec = _dist(args, "normal2d")
    n, alpha = _n(args), args.alpha or DEFAULT_ALPHA
    params = _engine_params(args)

    def one(i):
        s = derive_seed(args.seed, i)
        X = sample(spec, n, derive_seed(s, 0)).data
        Y = sample(spec, args.stream, derive_seed(s, 1)).data
        charts = (ParametricChart(alpha).fit(X), DepthRankChart(HalfspaceDepth(), alpha).fit(X),
                  DepthRankChart(refined_engine(spec.family, params, derive_seed(s, 2)), alpha).fit(X))
        return (i, *(false_alarm_rate(c, Y) for c in charts))

    rows = map_replicates(one, args.reps)
    path = _io.write_table(out / "far.csv", ["rep", "far_parametric", "far_dn", "far_rn"], rows)
    return [path], {**params, "dist": spec.family, "n": n, "alpha": alpha, "stream": args.stream}, args.reps


def cmd_spc_arl(args, out):
    spec = _dist(args, "normal2d")
    n, alpha = _n(args), args.alpha or DEFAULT_ALPHA
    params = _engine_params(args)
    X = sample(spec, n, derive_seed(args.seed, 0)).data
    shift = (args.shift,) * spec.dim
    changed = DistSpec(spec.family, shift, args.scale_change)
    charts = [("D_oracle", DepthRankChart(TrueDepth(spec), alpha)), ("parametric", ParametricChart(alpha)),
              ("R_n", DepthRankChart(refined_engine(spec.family, params, derive_seed(args.seed, 1)), alpha))]
    rows = []
    for name, chart in charts:
        res = average_run_length(chart.fit(X), changed, args.reps, args.cap, derive_seed(args.seed, 2))
        rows += [(name, i, rl, c) for i, (rl, c) in enumerate(zip(res.run_lengths, res.capped))]
    path = _io.write_table(out / "arl.csv", ["chart", "run", "run_length", "capped"], rows)
    summary = {name: float(np.mean([r[2] for r in rows if r[0] == name])) for name, _ in charts}
    spath = _io.write_json(out / "arl_summary.json", {"arl": summary, "protocol": "first passage, restarted per run"})
    return [path, spath], {**params, "dist": spec.family, "n": n, "alpha": alpha, "shift": shift,
                           "scale_change": args.scale_change}, args.reps


def cmd_ddclass(args, out):
    F = _dist(args, "normal2d")
    if F.dim != 2:
        raise ConfigurationError("the zero-depth mask is defined for bivariate samples")
    m, n, test = args.m or 500, _n(args), args.test
    G = DistSpec(F.family, (args.shift,) * F.dim, args.scale_change)
    X = np.vstack([sample(F, m, derive_seed(args.seed, 0)).data, sample(G, n, derive_seed(args.seed, 1)).data])
    y = np.r_[np.zeros(m, dtype=int), np.ones(n, dtype=int)]
    h = test // 2
    T = np.vstack([sample(F, h, derive_seed(args.seed, 2)).data, sample(G, test - h, derive_seed(args.seed, 3)).data])
    yt = np.r_[np.zeros(h, dtype=int), np.ones(test - h, dtype=int)]
    mask = zero_hull_mask(T, X[:m], X[m:])
    params = {**_engine_params(args), "center": args.center or "median"}
    rn = DDClassifier(refined_engine(F.family, params, derive_seed(args.seed, 5)), args.seed).fit(X, y)
    dn = DDClassifier(HalfspaceDepth(), args.seed).fit(X, y)
    dd = rn.dd_transform(T)
    pred = rn.predict(T, dd=dd)
    pred_dn = dn.predict(T)
    rows = [(i, a, b, mk, p, t) for i, (a, b, mk, p, t) in enumerate(zip(dd[:, 0], dd[:, 1], mask, pred, yt))]
    report = _io.write_table(out / "report.csv", ["point_id", "depth_f", "depth_g", "masked", "predicted", "truth"], rows)

    def err(p, sel):
        return float(np.mean(p[sel] != yt[sel])) if sel.any() else None

    summary = {
        "masked_points": int(mask.sum()),
        "R_n": {"error": err(pred, np.ones_like(mask)), "masked_error": err(pred, mask), "slope": rn.slope_},
        "D_n": {"error": err(pred_dn, np.ones_like(mask)), "masked_error": err(pred_dn, mask), "slope": dn.slope_},
        "tie_break": "smallest slope among minimal training error",
    }
    spath = _io.write_json(out / "summary.json", summary)
    return [report, spath], {**params, "dist": F.family, "m": m, "n": n, "test": test,
                             "shift": args.shift, "scale_change": args.scale_change}, 1


def _figure_id(name):
    if name in FIGURES:
        return name
    for fid in FIGURES:
        if fid.split("_")[0] == name:
            return fid
    raise ConfigurationError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")


def figure_spec_from_args(args):
    fid = _figure_id(args.figure)
    over = {"seed": args.seed}
    for key in ("n", "k", "k_tail", "alpha_est", "dirs", "center", "method", "alpha", "angles", "level"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.levels:
        over["levels"] = args.levels
    if args.m is not None:
        over["m"] = args.m
    for key in ("stream", "runs", "test"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if args.dist:
        names = [d.strip() for d in args.dist.split(",") if d.strip()]
        for d in names:
            if d not in FAMILIES:
                raise ConfigurationError(f"unknown family {d!r}")
        if "dists" in DEFAULTS[fid]:
            over["dists"] = names
        elif len(names) == 1:
            over["dist"] = names[0]
        else:
            raise ConfigurationError(f"{fid} takes a single --dist")
    if args.method == "exact2d":
        raise ConfigurationError("repro methods are 'ray' and 'random'")
    return FigureSpec(fid, 1.0 if args.scale is None else args.scale, over)


COMMANDS = {
    "sample": cmd_sample,
    "depth": cmd_depth,
    "rdepth": cmd_rdepth,
    "evt": cmd_evt,
    "contour": cmd_contour,
    "spc-far": cmd_spc_far,
    "spc-arl": cmd_spc_arl,
    "ddclass": cmd_ddclass,
}


def _out_dir_from_argv(argv):
    for i, tok in enumerate(argv):
        if tok == "--out-dir" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out-dir="):
            return tok.split("=", 1)[1]
    return None


def _fail(manifest, out_dir, stage, exc):
    manifest.status = "failed"
    manifest.failed_stage = stage
    manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    if out_dir is not None:
        try:
            manifest.write(out_dir)
        except OSError:
            pass


def _code(exc):
    return EXIT_NUMERIC if isinstance(exc, DepthkitNumericError) else EXIT_CONFIG


def run_command(argv):
    """Run one CLI invocation and return its exit status."""
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out_dir = _out_dir_from_argv(argv)
        manifest = RunManifest(command=" ".join(argv[:1]), params={"argv": argv}, seed=0, replicates=0)
        _fail(manifest, out_dir, "parse", exc)
        return EXIT_CONFIG

    out = Path(args.out_dir)
    if args.command == "repro":
        try:
            spec = figure_spec_from_args(args)
        except ConfigurationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            _fail(RunManifest(command="repro", params={"argv": argv}, seed=args.seed, replicates=0), out, "setup", exc)
            return EXIT_CONFIG
        try:
            run_figure(spec, out)
        except (ConfigurationError, DepthkitNumericError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return _code(exc)
        return EXIT_OK

    manifest = RunManifest(command=args.command, params={"argv": argv}, seed=args.seed, replicates=1)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        outputs, params, reps = COMMANDS[args.command](args, out)
    except (ConfigurationError, DepthkitNumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.duration = time.perf_counter() - start
        manifest.outputs = sorted(q for q in out.iterdir() if q.name != "manifest.json") if out.is_dir() else []
        _fail(manifest, out, args.command, exc)
        return _code(exc)
    manifest.params.update(params)
    manifest.outputs = list(outputs)
    manifest.replicates = reps
    manifest.status = "ok"
    manifest.duration = time.perf_counter() - start
    manifest.write(out)
    return EXIT_OK


def main(argv=None):
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
