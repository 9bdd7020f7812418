"""Minimal static SVG line charts (axes, labels, one polyline per series)."""

from __future__ import annotations

from html import escape

WIDTH, HEIGHT = 640, 420
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _bounds(series):
    xs = [x for s in series for x in s["x"]]
    ys = [y for s in series for y in s["y"]]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    return x0, x1, y0, y1


def line_chart(series, title="", xlabel="", ylabel="", max_points=500) -> str:
    """Render ``series`` (dicts with ``x``, ``y`` and optional ``color``, ``label``,
    ``opacity``, ``marker``) as an SVG document string."""
    series = [s for s in series if len(s["x"])]
    if not series:
        raise ValueError("nothing to plot")
    x0, x1, y0, y1 = _bounds(series)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{MARGIN - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 16 {HEIGHT / 2})">'
        f"{escape(ylabel)}</text>"
    )
    legend = {}
    for n, s in enumerate(series):
        color = s.get("color", PALETTE[n % len(PALETTE)])
        xs, ys = list(s["x"]), list(s["y"])
        step = max(1, len(xs) // max_points)
        idx = list(range(0, len(xs), step))
        if idx[-1] != len(xs) - 1:
            idx.append(len(xs) - 1)
        pts = " ".join(f"{sx(xs[i]):.1f},{sy(ys[i]):.1f}" for i in idx)
        opacity = s.get("opacity", 1.0)
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5" stroke-opacity="{opacity}"/>'
        )
        if s.get("marker"):
            out.extend(f'<circle cx="{sx(xs[i]):.1f}" cy="{sy(ys[i]):.1f}" r="2.5" fill="{color}"/>' for i in idx)
        if s.get("label"):
            legend.setdefault(s["label"], color)
    for n, (label, color) in enumerate(legend.items()):
        y = MARGIN + 14 * n
        out.append(f'<rect x="{WIDTH - MARGIN - 90}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{WIDTH - MARGIN - 74}" y="{y}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
