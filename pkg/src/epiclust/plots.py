"""Minimal deterministic SVG 1.1 figures: scatter, panels, reachability, sweep lines.

Output depends only on the inputs. The one line that may change between
releases is the leading ``<!-- epiclust ... -->`` generator comment.
"""
from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from .clustering import NOISE, ReachabilityPlot
from .geo import GeoPoint, project_equirectangular

GENERATOR = "epiclust 0.1.0"

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#17becf", "#bcbd22", "#393b79", "#637939", "#843c39",
)
NOISE_COLOR = "#888888"


def _n(v: float) -> str:
    return f"{v:.2f}"


def _doc(width: float, height: float, body: list[str], defs: str = "") -> str:
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- {GENERATOR} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_n(width)}" '
        f'height="{_n(height)}" viewBox="0 0 {_n(width)} {_n(height)}" font-family="sans-serif">',
    ]
    if defs:
        head.append(f"<defs>{defs}</defs>")
    head.append(f'<rect width="{_n(width)}" height="{_n(height)}" fill="white"/>')
    return "\n".join(head + body + ["</svg>", ""])


def color_for(label: int) -> str:
    return NOISE_COLOR if label == NOISE else PALETTE[label % len(PALETTE)]


def _nice_length(span: float) -> float:
    target = span / 5
    if target <= 0:
        return 1.0
    base = 10 ** math.floor(math.log10(target))
    return next(m * base for m in (1, 2, 5, 10) if m * base >= target)


def _scatter_group(points: Sequence[GeoPoint], labels: Sequence[int], x0: float, y0: float,
                   w: float, h: float, title: str, note: str | None = None) -> list[str]:
    out = [f'<g transform="translate({_n(x0)},{_n(y0)})">',
           f'<rect x="0" y="0" width="{_n(w)}" height="{_n(h)}" fill="none" stroke="#cccccc"/>',
           f'<text x="{_n(w / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>']
    if note is not None:
        out.append(f'<text x="{_n(w / 2)}" y="{_n(h / 2)}" text-anchor="middle" font-size="12" '
                   f'fill="#b00000">{escape(note)}</text>')
        out.append("</g>")
        return out
    if points:
        ref_lat = sum(p.lat for p in points) / len(points)
        ref_lon = sum(p.lon for p in points) / len(points)
        xy = [project_equirectangular(p, ref_lat, ref_lon) for p in points]
        xs, ys = [x for x, _ in xy], [y for _, y in xy]
        span = max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
        pad, top, bottom = 20.0, 30.0, 36.0
        scale = min((w - 2 * pad) / span, (h - top - bottom) / span)
        cx, cy = (max(xs) + min(xs)) / 2, (max(ys) + min(ys)) / 2
        mx, my = w / 2, top + (h - top - bottom) / 2
        # noise first so clustered points draw on top
        order = sorted(range(len(points)), key=lambda i: (labels[i] != NOISE, i))
        for i in order:
            px = mx + (xs[i] - cx) * scale
            py = my - (ys[i] - cy) * scale
            if labels[i] == NOISE:
                out.append(f'<circle cx="{_n(px)}" cy="{_n(py)}" r="3.5" fill="none" '
                           f'stroke="{NOISE_COLOR}" stroke-width="1.2"/>')
            else:
                out.append(f'<circle cx="{_n(px)}" cy="{_n(py)}" r="3.5" fill="{color_for(labels[i])}"/>')
        bar_km = _nice_length(span)
        bar_px = bar_km * scale
        by = h - 14
        out.append(f'<line x1="{_n(pad)}" y1="{_n(by)}" x2="{_n(pad + bar_px)}" y2="{_n(by)}" '
                   f'stroke="black" stroke-width="2"/>')
        out.append(f'<text x="{_n(pad + bar_px + 6)}" y="{_n(by + 4)}" font-size="11">{bar_km:g} km</text>')
    out.append("</g>")
    return out


def scatter_svg(points: Sequence[GeoPoint], labels: Sequence[int], title: str,
                width: float = 640, height: float = 640) -> str:
    """Points in the local equirectangular plane, coloured by cluster, noise hollow."""
    return _doc(width, height, _scatter_group(points, labels, 0, 0, width, height, title))


def panel_svg(points: Sequence[GeoPoint], panels: Sequence[tuple[str, Sequence[int] | None, str | None]],
              cell: float = 420) -> str:
    """2x2 grid of scatter panels; a panel with labels ``None`` shows its failure note."""
    body = []
    for k, (title, labels, error) in enumerate(panels):
        x0, y0 = (k % 2) * cell, (k // 2) * cell
        if labels is None:
            body += _scatter_group(points, [], x0, y0, cell, cell, title, note=f"failed: {error}")
        else:
            body += _scatter_group(points, labels, x0, y0, cell, cell, title)
    rows = max(1, math.ceil(len(panels) / 2))
    return _doc(2 * cell, rows * cell, body)


def reachability_svg(plot: ReachabilityPlot, eps_cut: float | None = None, title: str = "OPTICS reachability",
                     width: float = 800, height: float = 360) -> str:
    """Bars in visit order; UNDEFINED bars drawn hatched at 1.05x the largest finite value."""
    finite = [r for r in plot.reachability if math.isfinite(r)]
    if eps_cut is not None:
        finite.append(eps_cut)
    top_val = max(finite) if finite else 1.0
    top_val = top_val if top_val > 0 else 1.0
    undefined_val = 1.05 * top_val
    left, right, top, bottom = 50.0, 10.0, 30.0, 30.0
    pw, ph = width - left - right, height - top - bottom
    n = max(len(plot.reachability), 1)
    bw = pw / n
    ymax = 1.1 * top_val

    def y(v):
        return top + ph - v / ymax * ph

    body = [f'<text x="{_n(width / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line x1="{_n(left)}" y1="{_n(top + ph)}" x2="{_n(left + pw)}" y2="{_n(top + ph)}" stroke="black"/>',
            f'<line x1="{_n(left)}" y1="{_n(top)}" x2="{_n(left)}" y2="{_n(top + ph)}" stroke="black"/>',
            f'<text x="{_n(left - 4)}" y="{_n(y(top_val) + 4)}" text-anchor="end" font-size="10">'
            f'{top_val:.3g}</text>',
            f'<text x="{_n(left - 4)}" y="{_n(top + ph + 4)}" text-anchor="end" font-size="10">0</text>']
    for i, r in enumerate(plot.reachability):
        undefined = not math.isfinite(r)
        v = undefined_val if undefined else r
        fill = "url(#hatch)" if undefined else "#4c72b0"
        body.append(f'<rect x="{_n(left + i * bw)}" y="{_n(y(v))}" width="{_n(max(bw - 0.5, 0.5))}" '
                    f'height="{_n(top + ph - y(v))}" fill="{fill}"/>')
    if eps_cut is not None:
        body.append(f'<line x1="{_n(left)}" y1="{_n(y(eps_cut))}" x2="{_n(left + pw)}" y2="{_n(y(eps_cut))}" '
                    f'stroke="#d62728" stroke-dasharray="4 3"/>')
    body.append(f'<text x="{_n(left + pw / 2)}" y="{_n(height - 8)}" text-anchor="middle" font-size="11">'
                f'visit order ({escape(plot.unit)})</text>')
    hatch = ('<pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" '
             'patternTransform="rotate(45)"><rect width="6" height="6" fill="#dddddd"/>'
             '<line x1="0" y1="0" x2="0" y2="6" stroke="#555555" stroke-width="2"/></pattern>')
    return _doc(width, height, body, defs=hatch)


def sweep_svg(series: dict[int, list[tuple[float, int]]], title: str = "DBSCAN eps sweep",
              width: float = 640, height: float = 400) -> str:
    """Cluster count against eps, one line per min_pts value."""
    pts = [p for line in series.values() for p in line]
    xs = [x for x, _ in pts] or [0.0, 1.0]
    ys = [y for _, y in pts] or [0, 1]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_hi = max(max(ys), 1)
    left, right, top, bottom = 50.0, 110.0, 30.0, 40.0
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return top + ph - v / (1.1 * y_hi) * ph

    body = [f'<text x="{_n(width / 2)}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<line x1="{_n(left)}" y1="{_n(top + ph)}" x2="{_n(left + pw)}" y2="{_n(top + ph)}" stroke="black"/>',
            f'<line x1="{_n(left)}" y1="{_n(top)}" x2="{_n(left)}" y2="{_n(top + ph)}" stroke="black"/>',
            f'<text x="{_n(left)}" y="{_n(top + ph + 16)}" font-size="10">{x_lo:g}</text>',
            f'<text x="{_n(left + pw)}" y="{_n(top + ph + 16)}" text-anchor="end" font-size="10">{x_hi:g}</text>',
            f'<text x="{_n(left + pw / 2)}" y="{_n(height - 8)}" text-anchor="middle" font-size="11">eps</text>',
            f'<text x="{_n(left - 4)}" y="{_n(sy(y_hi) + 4)}" text-anchor="end" font-size="10">{y_hi}</text>',
            f'<text x="{_n(left - 4)}" y="{_n(top + ph + 4)}" text-anchor="end" font-size="10">0</text>']
    for k, (min_pts, line) in enumerate(sorted(series.items())):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{_n(sx(x))},{_n(sy(y))}" for x, y in sorted(line))
        body.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in sorted(line):
            body.append(f'<circle cx="{_n(sx(x))}" cy="{_n(sy(y))}" r="3" fill="{color}"/>')
        ly = top + 14 * k + 10
        body.append(f'<text x="{_n(left + pw + 10)}" y="{_n(ly)}" font-size="11" fill="{color}">'
                    f'min_pts={min_pts}</text>')
    return _doc(width, height, body)
