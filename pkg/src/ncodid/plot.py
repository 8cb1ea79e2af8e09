"""Static SVG forest plots: one row per estimate, CI whisker and zero line."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

from .estimators import UNADJUSTED
from .inference import EffectEstimate

DISPLAY_NAMES = {
    "unadjusted": "Unadj",
    "did_nco": "DiD",
    "did_adjusted": "DiD-adj",
    "qq": "QQ",
}
UNADJUSTED_COLOR = "#c0392b"
DEFAULT_COLOR = "#1f3a93"


@dataclass(frozen=True)
class ForestLayout:
    title: str = ""
    width: int = 640
    row_height: int = 28
    label_width: int = 170
    value_width: int = 150
    margin: int = 16
    percent: bool = True


def _fmt(x: float) -> str:
    # fixed precision keeps output byte-stable across platforms
    return f"{x:.2f}"


def _row_label(est: EffectEstimate) -> str:
    name = DISPLAY_NAMES.get(est.point.estimator, est.point.estimator)
    return f"{est.label} {name}".strip() if est.label else name


def _nice_step(span: float) -> float:
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag


def render_forest_plot(estimates: Sequence[EffectEstimate], layout: ForestLayout | None = None) -> str:
    """SVG document with one row per estimate, in the order given.

    Unadjusted rows are drawn in red. The x axis always includes zero.
    """
    if not estimates:
        raise ValueError("forest plot needs at least one estimate")
    lay = layout or ForestLayout()
    scale = 100.0 if lay.percent else 1.0
    lows = [e.ci_low * scale for e in estimates]
    highs = [e.ci_high * scale for e in estimates]
    lo = min(min(lows), 0.0)
    hi = max(max(highs), 0.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 1.0, hi + 1.0
    step = _nice_step(hi - lo)
    lo = math.floor(lo / step) * step
    hi = math.ceil(hi / step) * step

    top = lay.margin + (24 if lay.title else 0)
    plot_left = lay.margin + lay.label_width
    plot_right = lay.width - lay.margin - lay.value_width
    axis_y = top + lay.row_height * len(estimates) + 6
    height = axis_y + 36

    def x(v: float) -> float:
        return plot_left + (v - lo) / (hi - lo) * (plot_right - plot_left)

    unit = "%" if lay.percent else ""
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{lay.width}" height="{height}" '
        f'viewBox="0 0 {lay.width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{lay.width}" height="{height}" fill="white"/>',
    ]
    if lay.title:
        out.append(f'<text x="{lay.margin}" y="{lay.margin + 12}" font-weight="bold">{escape(lay.title)}</text>')
    # zero reference line
    out.append(f'<line class="zero" x1="{_fmt(x(0.0))}" y1="{top}" x2="{_fmt(x(0.0))}" y2="{axis_y}" '
               f'stroke="#888" stroke-dasharray="4 3"/>')
    for i, est in enumerate(estimates):
        cy = top + lay.row_height * i + lay.row_height / 2
        color = UNADJUSTED_COLOR if est.point.estimator == UNADJUSTED else DEFAULT_COLOR
        pt = est.point.atet * scale
        out.append(f'<g class="row" data-estimator="{est.point.estimator}">')
        out.append(f'<text x="{lay.margin}" y="{_fmt(cy + 4)}" fill="{color}">{escape(_row_label(est))}</text>')
        out.append(f'<line class="whisker" x1="{_fmt(x(lows[i]))}" y1="{_fmt(cy)}" x2="{_fmt(x(highs[i]))}" '
                   f'y2="{_fmt(cy)}" stroke="{color}" stroke-width="2"/>')
        for end in (lows[i], highs[i]):
            out.append(f'<line x1="{_fmt(x(end))}" y1="{_fmt(cy - 5)}" x2="{_fmt(x(end))}" y2="{_fmt(cy + 5)}" '
                       f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<circle class="point" cx="{_fmt(x(pt))}" cy="{_fmt(cy)}" r="4" fill="{color}"/>')
        value = f"{pt:.2f}{unit} [{lows[i]:.2f}, {highs[i]:.2f}]"
        out.append(f'<text x="{plot_right + 10}" y="{_fmt(cy + 4)}" fill="{color}">{escape(value)}</text>')
        out.append("</g>")
    out.append(f'<line x1="{plot_left}" y1="{axis_y}" x2="{plot_right}" y2="{axis_y}" stroke="black"/>')
    n_ticks = int(round((hi - lo) / step))
    for k in range(n_ticks + 1):
        v = lo + k * step
        out.append(f'<line x1="{_fmt(x(v))}" y1="{axis_y}" x2="{_fmt(x(v))}" y2="{axis_y + 4}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x(v))}" y="{axis_y + 16}" text-anchor="middle">{v:g}{unit}</text>')
    out.append(f'<text x="{_fmt((plot_left + plot_right) / 2)}" y="{axis_y + 32}" text-anchor="middle">'
               f'ATET ({estimates[0].level:.0%} CI)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
