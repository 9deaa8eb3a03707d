"""Minimal SVG writers for heatmaps and log-scale line plots."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["heatmap", "log_lines"]

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


def _diverging(v: float) -> str:
    """Blue-white-red for v in [-1, 1]."""
    v = float(np.clip(v, -1.0, 1.0))
    if v < 0:
        r = g = int(round(255 * (1 + v)))
        return f"#{r:02x}{g:02x}ff"
    gb = int(round(255 * (1 - v)))
    return f"#ff{gb:02x}{gb:02x}"


def _ticks(lo: float, hi: float, n: int = 5):
    return np.linspace(lo, hi, n)


def heatmap(t, x, values, path: str | Path, title: str = "", max_cells: int = 200):
    """Space-time heatmap with time on the horizontal axis.

    Coarsened to at most ``max_cells`` columns and rows; the color scale is
    symmetric about zero.
    """
    t, x = np.asarray(t, dtype=float), np.asarray(x, dtype=float)
    V = np.asarray(values, dtype=float)
    ti = np.unique(np.linspace(0, t.size - 1, min(t.size, max_cells)).round().astype(int))
    xi = np.unique(np.linspace(0, x.size - 1, min(x.size, max_cells)).round().astype(int))
    V = V[np.ix_(ti, xi)]
    scale = float(np.max(np.abs(V))) or 1.0
    W, H, left, top = 600, 320, 60, 30
    cw, ch = W / ti.size, H / xi.size
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + left + 90}" height="{H + top + 50}">',
           f'<text x="{left}" y="18" font-size="14">{title}</text>',
           f'<g transform="translate({left},{top})" shape-rendering="crispEdges">']
    for a in range(ti.size):
        for b in range(xi.size):
            out.append(f'<rect x="{a * cw:.2f}" y="{H - (b + 1) * ch:.2f}" width="{cw + 0.5:.2f}" '
                       f'height="{ch + 0.5:.2f}" fill="{_diverging(V[a, b] / scale)}"/>')
    out.append(f'<rect width="{W}" height="{H}" fill="none" stroke="black"/>')
    for tv in _ticks(t[0], t[-1]):
        px = (tv - t[0]) / max(t[-1] - t[0], 1e-300) * W
        out.append(f'<text x="{px:.1f}" y="{H + 16}" font-size="11" text-anchor="middle">{tv:.3g}</text>')
    for xv in _ticks(x[0], x[-1]):
        py = H - (xv - x[0]) / max(x[-1] - x[0], 1e-300) * H
        out.append(f'<text x="-6" y="{py + 4:.1f}" font-size="11" text-anchor="end">{xv:.2g}</text>')
    out.append(f'<text x="{W / 2}" y="{H + 34}" font-size="12" text-anchor="middle">t</text>')
    out.append(f'<text x="-40" y="{H / 2}" font-size="12">x</text>')
    for k, v in enumerate(np.linspace(1, -1, 11)):
        out.append(f'<rect x="{W + 20}" y="{k * H / 11:.1f}" width="16" height="{H / 11 + 0.5:.1f}" '
                   f'fill="{_diverging(v)}"/>')
    out.append(f'<text x="{W + 40}" y="10" font-size="10">{scale:.3g}</text>')
    out.append(f'<text x="{W + 40}" y="{H}" font-size="10">{-scale:.3g}</text>')
    out.append("</g></svg>")
    Path(path).write_text("\n".join(out) + "\n")


def log_lines(series: list[tuple[str, np.ndarray, np.ndarray]], path: str | Path,
              title: str = "", ylabel: str = "", max_points: int = 800):
    """Overlay of positive series on a logarithmic vertical axis."""
    W, H, left, top = 600, 320, 70, 30
    tmax = max(float(np.max(t)) for _, t, _ in series)
    tmin = min(float(np.min(t)) for _, t, _ in series)
    pos = np.concatenate([np.asarray(y)[np.asarray(y) > 0] for _, _, y in series])
    if pos.size == 0:
        pos = np.array([1.0])
    lo, hi = np.floor(np.log10(pos.min())), np.ceil(np.log10(pos.max()))
    if hi <= lo:
        hi = lo + 1
    span = max(tmax - tmin, 1e-300)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + left + 140}" height="{H + top + 50}">',
           f'<text x="{left}" y="18" font-size="14">{title}</text>',
           f'<g transform="translate({left},{top})">',
           f'<rect width="{W}" height="{H}" fill="none" stroke="black"/>']
    for e in range(int(lo), int(hi) + 1):
        py = H - (e - lo) / (hi - lo) * H
        out.append(f'<line x1="0" x2="{W}" y1="{py:.1f}" y2="{py:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="-6" y="{py + 4:.1f}" font-size="11" text-anchor="end">1e{e}</text>')
    for tv in _ticks(tmin, tmax):
        px = (tv - tmin) / span * W
        out.append(f'<text x="{px:.1f}" y="{H + 16}" font-size="11" text-anchor="middle">{tv:.3g}</text>')
    for k, (label, t, y) in enumerate(series):
        t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
        idx = np.unique(np.linspace(0, t.size - 1, min(t.size, max_points)).round().astype(int))
        pts = []
        for i in idx:
            if y[i] > 0:
                py = H - (np.log10(y[i]) - lo) / (hi - lo) * H
                pts.append(f"{(t[i] - tmin) / span * W:.2f},{py:.2f}")
        color = _PALETTE[k % len(_PALETTE)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        out.append(f'<text x="{W + 10}" y="{14 + 16 * k}" font-size="11" fill="{color}">{label}</text>')
    out.append(f'<text x="{W / 2}" y="{H + 34}" font-size="12" text-anchor="middle">t</text>')
    out.append(f'<text x="-60" y="-10" font-size="12">{ylabel}</text>')
    out.append("</g></svg>")
    Path(path).write_text("\n".join(out) + "\n")
