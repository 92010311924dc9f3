"""Dependency-free SVG plots: power-delay profile stems and measured-vs-predicted scatter."""

from __future__ import annotations

import math
from typing import Sequence, Tuple

W, H, PAD = 480, 320, 48


def _scale(lo, hi, a, b):
    if hi <= lo:
        hi = lo + 1.0
    return lambda v: a + (v - lo) * (b - a) / (hi - lo)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr) -> list:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD // 2}" width="{W - 1.5 * PAD:.0f}" height="{H - 1.5 * PAD:.0f}" '
        'fill="none" stroke="black"/>',
        f'<text x="{W / 2:.0f}" y="16" text-anchor="middle" font-size="13">{title}</text>',
        f'<text x="{W / 2:.0f}" y="{H - 6}" text-anchor="middle" font-size="11">{xlabel}</text>',
        f'<text x="12" y="{H / 2:.0f}" text-anchor="middle" font-size="11" '
        f'transform="rotate(-90 12 {H / 2:.0f})">{ylabel}</text>',
        f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10">{xr[0]:.3g}</text>',
        f'<text x="{W - PAD / 2:.0f}" y="{H - PAD + 14}" text-anchor="end" font-size="10">{xr[1]:.3g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end" font-size="10">{yr[0]:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD // 2 + 10}" text-anchor="end" font-size="10">{yr[1]:.3g}</text>',
    ]
    return out


def pdp_svg(delays_ns: Sequence[float], powers_mw: Sequence[float], title: str = "PDP",
            floor_db: float = -60.0) -> str:
    """Stem plot of a power-delay profile in dB relative to its peak."""
    peak = max(powers_mw)
    db = [max(10.0 * math.log10(p / peak), floor_db) if p > 0 else floor_db for p in powers_mw]
    xr = (min(delays_ns), max(delays_ns))
    yr = (floor_db, 0.0)
    sx = _scale(xr[0], xr[1], PAD + 6, W - PAD / 2 - 6)
    sy = _scale(yr[0], yr[1], H - PAD, PAD / 2)
    out = _frame(title, "delay (ns)", "relative power (dB)", xr, yr)
    for t, p in zip(delays_ns, db):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{sy(floor_db):.2f}" x2="{x:.2f}" y2="{sy(p):.2f}" stroke="navy"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_svg(points: Sequence[Tuple[float, float]], title: str, label: str) -> str:
    """Measured (x) against predicted (y) with the identity line."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    lo = min(xs + ys)
    hi = max(xs + ys)
    if hi <= lo:
        hi = lo + 1.0
    sx = _scale(lo, hi, PAD + 6, W - PAD / 2 - 6)
    sy = _scale(lo, hi, H - PAD - 6, PAD / 2 + 6)
    out = _frame(title, f"measured {label}", f"predicted {label}", (lo, hi), (lo, hi))
    out.append(f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
               'stroke="gray" stroke-dasharray="4 3"/>')
    for x, y in points:
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="darkred"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
