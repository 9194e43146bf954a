"""Minimal fixed-layout SVG plots (800 x 600): grouped boxplots and contours."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 600
_MARGIN = dict(left=70, right=20, top=40, bottom=80)
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def box_stats(values):
    """Quartiles plus whiskers at the most extreme points within 1.5 IQR."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"n": 0, "median": None, "q1": None, "q3": None, "mean": None,
                "whisker_low": None, "whisker_high": None, "outliers": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    inside = v[(v >= q1 - 1.5 * iqr) & (v <= q3 + 1.5 * iqr)]
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_low": float(inside.min()),
        "whisker_high": float(inside.max()),
        "outliers": int(v.size - inside.size),
    }


class _Canvas:
    def __init__(self, title):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        ]
        self.x0, self.x1 = _MARGIN["left"], WIDTH - _MARGIN["right"]
        self.y0, self.y1 = HEIGHT - _MARGIN["bottom"], _MARGIN["top"]

    def add(self, s):
        self.parts.append(s)

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.parts + ["</svg>"]) + "\n", newline="\n")
        return path


def _fmt(v):
    return f"{v:.4g}"


def boxplot(path, groups, title="", ylabel="", log=False, reference=None):
    """``groups`` is an ordered list of ``(label, values)``.

    ``reference`` draws a dashed horizontal line (e.g. the nominal rate).
    """
    c = _Canvas(title)
    stats = [(label, box_stats(vals)) for label, vals in groups]
    ys = [s[k] for _, s in stats if s["n"] for k in ("whisker_low", "whisker_high")]
    if reference is not None:
        ys.append(reference)
    if log:
        ys = [y for y in ys if y > 0]
    lo, hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    tf = np.log10 if log else (lambda t: t)
    lo, hi = tf(lo), tf(hi)
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def Y(v):
        if log and v <= 0:
            return c.y0
        return c.y0 - (tf(v) - lo) / (hi - lo) * (c.y0 - c.y1)

    c.add(f'<line x1="{c.x0}" y1="{c.y0}" x2="{c.x1}" y2="{c.y0}" stroke="black"/>')
    c.add(f'<line x1="{c.x0}" y1="{c.y0}" x2="{c.x0}" y2="{c.y1}" stroke="black"/>')
    for i in range(5):
        t = lo + (hi - lo) * i / 4
        val = 10 ** t if log else t
        y = Y(val)
        c.add(f'<line x1="{c.x0 - 4}" y1="{y:.1f}" x2="{c.x0}" y2="{y:.1f}" stroke="black"/>')
        c.add(f'<text x="{c.x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(val)}</text>')
    c.add(f'<text x="16" y="{(c.y0 + c.y1) / 2}" transform="rotate(-90 16 {(c.y0 + c.y1) / 2})" '
          f'text-anchor="middle">{escape(ylabel)}</text>')
    if reference is not None:
        y = Y(reference)
        c.add(f'<line x1="{c.x0}" y1="{y:.1f}" x2="{c.x1}" y2="{y:.1f}" stroke="gray" stroke-dasharray="6,4"/>')
    slot = (c.x1 - c.x0) / max(1, len(stats))
    for i, (label, s) in enumerate(stats):
        cx = c.x0 + slot * (i + 0.5)
        w = min(60.0, 0.6 * slot)
        color = _COLORS[i % len(_COLORS)]
        c.add(f'<text x="{cx:.1f}" y="{c.y0 + 16}" text-anchor="end" '
              f'transform="rotate(-30 {cx:.1f} {c.y0 + 16})">{escape(label)}</text>')
        if not s["n"]:
            continue
        q1, q3, med = Y(s["q1"]), Y(s["q3"]), Y(s["median"])
        wl, wh = Y(s["whisker_low"]), Y(s["whisker_high"])
        c.add(f'<line x1="{cx:.1f}" y1="{wl:.1f}" x2="{cx:.1f}" y2="{wh:.1f}" stroke="{color}"/>')
        c.add(f'<rect x="{cx - w / 2:.1f}" y="{q3:.1f}" width="{w:.1f}" height="{max(q1 - q3, 0.5):.1f}" '
              f'fill="white" stroke="{color}"/>')
        c.add(f'<line x1="{cx - w / 2:.1f}" y1="{med:.1f}" x2="{cx + w / 2:.1f}" y2="{med:.1f}" '
              f'stroke="{color}" stroke-width="2"/>')
    return c.save(path)


def contours(path, curves, points=None, title=""):
    """``curves``: list of ``(label, xy)`` closed polylines; ``points``: optional scatter."""
    c = _Canvas(title)
    allxy = [np.asarray(xy) for _, xy in curves]
    if points is not None:
        allxy.append(np.asarray(points))
    stacked = np.vstack(allxy)
    span = float(np.max(np.abs(stacked))) or 1.0
    plot = min(c.x1 - c.x0, c.y0 - c.y1)
    cx, cy = (c.x0 + c.x1) / 2, (c.y0 + c.y1) / 2

    def P(xy):
        return cx + xy[:, 0] / span * plot / 2, cy - xy[:, 1] / span * plot / 2

    if points is not None:
        px, py = P(np.asarray(points))
        for a, b in zip(px, py):
            c.add(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="1.2" fill="#999"/>')
    for i, (label, xy) in enumerate(curves):
        px, py = P(np.asarray(xy))
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        color = _COLORS[i % len(_COLORS)]
        c.add(f'<polygon points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        c.add(f'<text x="{c.x0}" y="{c.y0 + 20 + 16 * i}" fill="{color}">{escape(label)}</text>')
    c.add(f'<text x="{c.x1}" y="{c.y0 + 20}" text-anchor="end">half-width {_fmt(span)}</text>')
    return c.save(path)
