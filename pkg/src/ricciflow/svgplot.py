"""Dependency-free SVG line charts for run artifacts.

Deliberately minimal: fixed-size viewport, linear or log-10 y axis, one
polyline per series, deterministic output (byte-identical for identical
inputs).
"""

from __future__ import annotations

import math

_WIDTH, _HEIGHT = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    t0 = math.ceil(lo / step) * step
    out = []
    t = t0
    while t <= hi + 1e-12 * span:
        out.append(round(t, 12))
        t += step
    return out


def line_plot(path, series, title="", xlabel="", ylabel="", log_y=False):
    """Write an SVG line chart.

    series: mapping label -> (x array, y array).  With log_y, nonpositive y
    values are dropped from their series.
    """
    data = []
    for label, (xs, ys) in series.items():
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if not log_y or y > 0.0]
        if log_y:
            pts = [(x, math.log10(y)) for x, y in pts]
        if pts:
            data.append((label, pts))
    if not data:
        data = [("empty", [(0.0, 0.0), (1.0, 0.0)])]

    xlo = min(p[0] for _, pts in data for p in pts)
    xhi = max(p[0] for _, pts in data for p in pts)
    ylo = min(p[1] for _, pts in data for p in pts)
    yhi = max(p[1] for _, pts in data for p in pts)
    if xhi == xlo:
        xhi = xlo + 1.0
    if yhi == ylo:
        yhi = ylo + 1.0
    pw = _WIDTH - _ML - _MR
    ph = _HEIGHT - _MT - _MB

    def px(x):
        return _ML + (x - xlo) / (xhi - xlo) * pw

    def py(y):
        return _MT + (yhi - y) / (yhi - ylo) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
             f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
             f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>']
    if title:
        parts.append(f'<text x="{_WIDTH/2:.1f}" y="24" text-anchor="middle" '
                     f'font-size="16" font-family="sans-serif">{title}</text>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" '
                 f'fill="none" stroke="black"/>')
    for t in _ticks(xlo, xhi):
        x = px(t)
        parts.append(f'<line x1="{x:.2f}" y1="{_MT + ph}" x2="{x:.2f}" '
                     f'y2="{_MT + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{_MT + ph + 20}" text-anchor="middle" '
                     f'font-size="11" font-family="sans-serif">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        y = py(t)
        label = f"1e{t:g}" if log_y else f"{t:g}"
        parts.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" '
                     f'y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 9}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-size="11" font-family="sans-serif">{label}</text>')
    if xlabel:
        parts.append(f'<text x="{_ML + pw/2:.1f}" y="{_HEIGHT - 12}" '
                     f'text-anchor="middle" font-size="13" '
                     f'font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="18" y="{_MT + ph/2:.1f}" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif" '
                     f'transform="rotate(-90 18 {_MT + ph/2:.1f})">{ylabel}</text>')
    for i, (label, pts) in enumerate(data):
        color = _COLORS[i % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_ML + pw - 8}" y="{_MT + 18 + 16*i}" '
                     f'text-anchor="end" font-size="12" fill="{color}" '
                     f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
