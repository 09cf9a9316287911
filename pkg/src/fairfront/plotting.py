"""Native SVG line/scatter plots: polylines, markers, and error bands.

Deliberately dependency-free; the figures this package emits are simple
enough (scatter clouds, piecewise-linear envelopes, mean curves with
one-standard-deviation bands) that a hand-rolled writer stays smaller than a
plotting stack and keeps outputs byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Series:
    name: str
    x: np.ndarray
    y: np.ndarray
    mode: str = "line"  # line | points | line+points
    band: tuple[np.ndarray, np.ndarray] | None = None  # (lower, upper)
    color: str | None = None


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return list(np.linspace(lo, hi, n))


def svg_plot(path, series_list, title="", xlabel="", ylabel="", width=640, height=480) -> None:
    ml, mr, mt, mb = 64, 16, 36, 48
    pw, ph = width - ml - mr, height - mt - mb

    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series_list])
    ys = [np.asarray(s.y, dtype=float) for s in series_list]
    for s in series_list:
        if s.band is not None:
            ys.extend([np.asarray(s.band[0], dtype=float), np.asarray(s.band[1], dtype=float)])
    ys = np.concatenate(ys)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_pad = 0.04 * (x_hi - x_lo)
    y_pad = 0.06 * (y_hi - y_lo)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    def sx(v):
        return ml + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return mt + ph - (v - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for tx in _ticks(x_lo + x_pad, x_hi - x_pad):
        out.append(
            f'<line x1="{sx(tx):.2f}" y1="{mt + ph}" x2="{sx(tx):.2f}" y2="{mt + ph + 4}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{sx(tx):.2f}" y="{mt + ph + 18}" text-anchor="middle">{tx:.3g}</text>'
        )
    for ty in _ticks(y_lo + y_pad, y_hi - y_pad):
        out.append(
            f'<line x1="{ml - 4}" y1="{sy(ty):.2f}" x2="{ml}" y2="{sy(ty):.2f}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{ml - 8}" y="{sy(ty) + 4:.2f}" text-anchor="end">{ty:.3g}</text>'
        )

    for i, s in enumerate(series_list):
        color = s.color or _COLORS[i % len(_COLORS)]
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if s.band is not None:
            lo, hi = s.band
            pts = [f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x, hi)]
            pts += [f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x[::-1], np.asarray(lo)[::-1])]
            out.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.15" stroke="none"/>')
        if "line" in s.mode and len(x) > 1:
            pts = " ".join(f"{sx(xv):.2f},{sy(yv):.2f}" for xv, yv in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if "points" in s.mode:
            for xv, yv in zip(x, y):
                out.append(f'<circle cx="{sx(xv):.2f}" cy="{sy(yv):.2f}" r="2.5" fill="{color}"/>')
        out.append(
            f'<text x="{ml + pw - 8}" y="{mt + 16 + 16 * i}" text-anchor="end" fill="{color}">{s.name}</text>'
        )
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
