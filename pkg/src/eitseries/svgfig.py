"""Minimal native SVG output: polyline plots (linear or log axes) and
triangle-field renderings. No plotting dependency; the files are plain
markup that downstream tests can parse for dimensions and content.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

PALETTE = ["#1f6fb4", "#d95f02", "#2ca02c", "#c51b8a", "#6a51a3", "#555555"]
WIDTH, HEIGHT = 640, 440
MARGIN = {"left": 70, "right": 20, "top": 34, "bottom": 50}


def _nice_linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s for s in (1.0, 2.0, 5.0, 10.0) if s * mag >= raw),
               default=10.0) * mag
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    lo_e = math.floor(math.log10(lo))
    hi_e = math.ceil(math.log10(hi))
    return [10.0 ** e for e in range(lo_e, hi_e + 1)
            if lo / 1.0001 <= 10.0 ** e <= hi * 1.0001]


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


class _Axis:
    def __init__(self, lo, hi, pixel_lo, pixel_hi, log):
        if log:
            self.t = lambda v: math.log10(v)
        else:
            self.t = lambda v: v
        self.lo, self.hi = self.t(lo), self.t(hi)
        if self.hi - self.lo < 1e-300:
            self.hi = self.lo + 1.0
        self.plo, self.phi = pixel_lo, pixel_hi
        self.log = log

    def __call__(self, v) -> float:
        frac = (self.t(v) - self.lo) / (self.hi - self.lo)
        return self.plo + frac * (self.phi - self.plo)


def line_plot(series: list[dict], title: str = "", xlabel: str = "",
              ylabel: str = "", xlog: bool = False, ylog: bool = False) -> str:
    """Render polyline series to an SVG string.

    Each series is a dict with keys "x", "y", "label" and optionally
    "color"; non-finite or non-positive values (on log axes) are dropped.
    """
    xs, ys = [], []
    clean = []
    for s in series:
        x = np.asarray(s["x"], dtype=float)
        y = np.asarray(s["y"], dtype=float)
        good = np.isfinite(x) & np.isfinite(y)
        if xlog:
            good &= x > 0
        if ylog:
            good &= y > 0
        clean.append((x[good], y[good], s.get("label", ""), s.get("color")))
        xs.append(x[good])
        ys.append(y[good])
    xs = np.concatenate([x for x in xs if len(x)] or [np.array([0.0, 1.0])])
    ys = np.concatenate([y for y in ys if len(y)] or [np.array([0.0, 1.0])])

    x_axis = _Axis(xs.min(), xs.max(), MARGIN["left"], WIDTH - MARGIN["right"], xlog)
    pad = 0.05 * (ys.max() - ys.min() if not ylog else 0)
    y_axis = _Axis(ys.min() - pad if not ylog else ys.min(),
                   ys.max() + pad if not ylog else ys.max(),
                   HEIGHT - MARGIN["bottom"], MARGIN["top"], ylog)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
             f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
             f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" '
             f'width="{WIDTH - MARGIN["left"] - MARGIN["right"]}" '
             f'height="{HEIGHT - MARGIN["top"] - MARGIN["bottom"]}" '
             'fill="none" stroke="#333"/>']
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" '
                     f'font-size="15" font-family="sans-serif">{title}</text>')

    xticks = (_log_ticks(xs.min(), xs.max()) if xlog
              else _nice_linear_ticks(xs.min(), xs.max()))
    for t in xticks:
        px = x_axis(t)
        parts.append(f'<line x1="{px:.1f}" y1="{HEIGHT - MARGIN["bottom"]}" '
                     f'x2="{px:.1f}" y2="{HEIGHT - MARGIN["bottom"] + 5}" stroke="#333"/>')
        parts.append(f'<text x="{px:.1f}" y="{HEIGHT - MARGIN["bottom"] + 18}" '
                     f'text-anchor="middle" font-size="11" '
                     f'font-family="sans-serif">{_fmt(t)}</text>')
    yticks = (_log_ticks(ys.min(), ys.max()) if ylog
              else _nice_linear_ticks(float(y_axis.lo), float(y_axis.hi)))
    for t in yticks:
        py = y_axis(t)
        parts.append(f'<line x1="{MARGIN["left"] - 5}" y1="{py:.1f}" '
                     f'x2="{MARGIN["left"]}" y2="{py:.1f}" stroke="#333"/>')
        parts.append(f'<text x="{MARGIN["left"] - 8}" y="{py + 4:.1f}" '
                     f'text-anchor="end" font-size="11" '
                     f'font-family="sans-serif">{_fmt(t)}</text>')
    if xlabel:
        parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
                     f'font-size="13" font-family="sans-serif" '
                     f'transform="rotate(-90 16 {HEIGHT / 2})">{ylabel}</text>')

    for k, (x, y, label, color) in enumerate(clean):
        col = color or PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{x_axis(a):.2f},{y_axis(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{col}" '
                     'stroke-width="1.8"/>')
        if label:
            ly = MARGIN["top"] + 16 + 16 * k
            lx = WIDTH - MARGIN["right"] - 150
            parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" '
                         f'y2="{ly - 4}" stroke="{col}" stroke-width="1.8"/>')
            parts.append(f'<text x="{lx + 30}" y="{ly}" font-size="12" '
                         f'font-family="sans-serif">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _diverging_color(v: float, vmax: float) -> str:
    """Blue (negative) through white to red (positive)."""
    if vmax <= 0:
        vmax = 1.0
    t = max(-1.0, min(1.0, v / vmax))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - t * 0.75)), round(255 * (1 - t))
    else:
        r, g, b = round(255 * (1 + t)), round(255 * (1 + t * 0.75)), 255
    return f"rgb({r},{g},{b})"


def field_plot(mesh, tri_values: np.ndarray, title: str = "",
               vmax: float | None = None, size: int = 480) -> str:
    """Render a per-triangle field as coloured SVG polygons."""
    tri_values = np.real_if_close(np.asarray(tri_values)).astype(float)
    if vmax is None:
        vmax = float(np.max(np.abs(tri_values))) or 1.0
    r = mesh.boundary_radius()
    scale = (size - 20) / (2 * r)

    def pix(p):
        return (10 + (p[0] + r) * scale, 10 + (r - p[1]) * scale)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" '
             f'height="{size + 26}" viewBox="0 0 {size} {size + 26}">',
             f'<rect width="{size}" height="{size + 26}" fill="white"/>']
    if title:
        parts.append(f'<text x="{size / 2}" y="{size + 18}" text-anchor="middle" '
                     f'font-size="14" font-family="sans-serif">{title}</text>')
    verts = mesh.vertices
    for t, tri in enumerate(mesh.triangles):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in (pix(verts[v]) for v in tri))
        col = _diverging_color(tri_values[t], vmax)
        parts.append(f'<polygon points="{pts}" fill="{col}" stroke="{col}" '
                     'stroke-width="0.4"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def write_svg(svg: str, path: str | Path) -> None:
    Path(path).write_text(svg + "\n")
