"""Dependency-free SVG emission for run and sweep figures.

Plain text templates only: the toolchain stays free of plotting libraries.
Numbers are formatted with %.6g so output is deterministic.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["heatmap", "line_plot"]

_W, _H = 720, 460
_ML, _MR, _MT, _MB = 70, 20, 40, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _g(x: float) -> str:
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return [float(v) for v in raw]


def line_plot(
    path,
    series,
    *,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    ylog: bool = False,
    hlines=(),
    vlines=(),
    markers: bool = False,
) -> None:
    """Write a line plot.  ``series`` is a list of dicts with keys
    x, y (sequences), label (str) and optionally step=True for a staircase.

    With ylog=True the y data are log10-transformed (values <= 0 are clipped
    to the smallest positive value seen, or 1e-16)."""
    path = Path(path)
    xs_all = np.concatenate([np.asarray(s["x"], dtype=float) for s in series])
    ys_all = np.concatenate([np.asarray(s["y"], dtype=float) for s in series])
    if ylog:
        pos = ys_all[ys_all > 0]
        floor = float(pos.min()) if pos.size else 1e-16
        tr = lambda y: np.log10(np.maximum(np.asarray(y, dtype=float), floor))
        ys_all = tr(ys_all)
        hlines = [(name, float(tr(v))) for name, v in hlines]
    else:
        tr = lambda y: np.asarray(y, dtype=float)
        hlines = [(name, float(v)) for name, v in hlines]
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    for _, v in hlines:
        y_lo, y_hi = min(y_lo, v), max(y_hi, v)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    pw, ph = _W - _ML - _MR, _H - _MT - _MB
    px = lambda x: _ML + pw * (x - x_lo) / (x_hi - x_lo)
    py = lambda y: _MT + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="monospace" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT + ph}" x2="{_ML + pw}" y2="{_MT + ph}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_MT + ph}" stroke="black"/>',
        f'<text x="{_ML + pw / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{_MT + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + ph / 2})">{ylabel}</text>',
    ]
    for tv in _ticks(x_lo, x_hi):
        X = px(tv)
        parts.append(f'<line x1="{_g(X)}" y1="{_MT + ph}" x2="{_g(X)}" y2="{_MT + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{_g(X)}" y="{_MT + ph + 20}" text-anchor="middle">{_g(tv)}</text>')
    for tv in _ticks(y_lo, y_hi):
        Y = py(tv)
        lab = f"1e{tv:.2g}" if ylog else _g(tv)
        parts.append(f'<line x1="{_ML - 5}" y1="{_g(Y)}" x2="{_ML}" y2="{_g(Y)}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{_g(Y + 4)}" text-anchor="end">{lab}</text>')
    for name, v in hlines:
        Y = py(v)
        parts.append(
            f'<line x1="{_ML}" y1="{_g(Y)}" x2="{_ML + pw}" y2="{_g(Y)}" '
            f'stroke="gray" stroke-dasharray="6 4"/>'
        )
        parts.append(f'<text x="{_ML + pw - 4}" y="{_g(Y - 4)}" text-anchor="end" fill="gray">{name}</text>')
    for name, v in vlines:
        if not x_lo <= v <= x_hi:
            continue
        X = px(float(v))
        parts.append(
            f'<line x1="{_g(X)}" y1="{_MT}" x2="{_g(X)}" y2="{_MT + ph}" '
            f'stroke="gray" stroke-dasharray="6 4"/>'
        )
        parts.append(f'<text x="{_g(X + 4)}" y="{_MT + 12}" fill="gray">{name}</text>')

    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        x = np.asarray(s["x"], dtype=float)
        y = tr(s["y"])
        if s.get("step"):
            # staircase: hold each value to the next x
            xs, ys = [], []
            for k in range(len(x) - 1):
                xs.extend([x[k], x[k + 1]])
                ys.extend([y[k], y[k]])
            x, y = np.asarray(xs), np.asarray(ys)
        pts = " ".join(f"{_g(px(xv))},{_g(py(yv))}" for xv, yv in zip(x, y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if markers:
            for xv, yv in zip(x, y):
                parts.append(f'<circle cx="{_g(px(xv))}" cy="{_g(py(yv))}" r="3" fill="{color}"/>')
        if s.get("label"):
            parts.append(
                f'<text x="{_ML + pw - 6}" y="{_MT + 16 + 14 * i}" text-anchor="end" '
                f'fill="{color}">{s["label"]}</text>'
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


def heatmap(path, matrix, *, title: str = "") -> None:
    """Diverging red/blue cell grid of a matrix, normalized by max |entry|."""
    path = Path(path)
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = A.shape
    cell = 48
    w = cols * cell + 40
    h = rows * cell + 60
    vmax = float(np.abs(A).max()) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}" font-family="monospace" font-size="10">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{w / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
    ]
    for i in range(rows):
        for j in range(cols):
            v = A[i, j] / vmax
            if v >= 0:
                fill = f"rgb({int(255 * (1 - v))},{int(255 * (1 - v))},255)"
            else:
                fill = f"rgb(255,{int(255 * (1 + v))},{int(255 * (1 + v))})"
            x, y = 20 + j * cell, 30 + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 3}" text-anchor="middle">'
                f"{A[i, j]:.3g}</text>"
            )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
