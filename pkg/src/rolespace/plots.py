"""Deterministic SVG charts for pipeline reports.

Plain string assembly, fixed 2-decimal coordinates, no timestamps and no
external renderer, so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

from .ingest import LifespanHistogram

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2")

_WIDTH, _HEIGHT = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 24, 40, 50


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, title: str):
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
            f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
            f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
            f'<text x="{_WIDTH // 2}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15" fill="#222">{title}</text>',
        ]

    def line(self, x1, y1, x2, y2, color="#444", width=1.0, dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{dash_attr}/>')

    def polyline(self, points, color, width=1.5):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"/>')

    def rect(self, x, y, w, h, color):
        self.parts.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
            f'height="{_fmt(h)}" fill="{color}"/>')

    def text(self, x, y, content, size=11, anchor="middle", color="#333"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}" fill="{color}">{content}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _x_scale(value, lo, hi):
    span = hi - lo if hi > lo else 1.0
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    return _MARGIN_L + (value - lo) / span * plot_w


def _y_scale(value, lo, hi):
    span = hi - lo if hi > lo else 1.0
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B
    return _HEIGHT - _MARGIN_B - (value - lo) / span * plot_h


def _axes(canvas: _Canvas, x_label: str, y_label: str):
    canvas.line(_MARGIN_L, _HEIGHT - _MARGIN_B, _WIDTH - _MARGIN_R,
                _HEIGHT - _MARGIN_B)
    canvas.line(_MARGIN_L, _MARGIN_T, _MARGIN_L, _HEIGHT - _MARGIN_B)
    canvas.text((_MARGIN_L + _WIDTH - _MARGIN_R) / 2, _HEIGHT - 12, x_label, size=12)
    canvas.text(16, _MARGIN_T - 10, y_label, size=12, anchor="start")


def lifespan_histogram_svg(histogram: LifespanHistogram,
                           title: str = "Users by active-quarter count") -> str:
    """Bar chart on a log10 count axis."""
    canvas = _Canvas(title)
    _axes(canvas, "active quarters", "users (log scale)")
    buckets = histogram.buckets
    if buckets:
        max_quarters = max(q for q, _ in buckets)
        max_log = max(math.log10(c) for _, c in buckets if c > 0)
        max_log = max(max_log, 1.0)
        slot = (_WIDTH - _MARGIN_L - _MARGIN_R) / max(max_quarters, 1)
        bar_w = max(slot * 0.7, 1.0)
        for quarters, count in buckets:
            if count <= 0:
                continue
            height_frac = math.log10(count) / max_log if count > 1 else 0.02
            x = _x_scale(quarters, 1, max(max_quarters, 2)) - bar_w / 2
            top = _y_scale(height_frac, 0, 1)
            canvas.rect(x, top, bar_w, _HEIGHT - _MARGIN_B - top, _PALETTE[0])
        for exp in range(int(max_log) + 1):
            y = _y_scale(exp / max_log, 0, 1) if max_log else _HEIGHT - _MARGIN_B
            canvas.text(_MARGIN_L - 8, y + 4, f"1e{exp}", anchor="end", size=10)
        for quarters, _ in buckets:
            if max_quarters <= 20 or quarters % 5 == 0 or quarters == 1:
                x = _x_scale(quarters, 1, max(max_quarters, 2))
                canvas.text(x, _HEIGHT - _MARGIN_B + 16, str(quarters), size=10)
    return canvas.render()


def topic_evolution_svg(track, vocabulary: Sequence[str], topic_id: int,
                        top_n: int = 5) -> str:
    """Line per leading term of one topic across slices."""
    T = len(track)
    means = [sum(row[v] for row in track) / T for v in range(len(vocabulary))]
    leading = sorted(range(len(vocabulary)), key=lambda v: (-means[v], v))[:top_n]
    canvas = _Canvas(f"Role {topic_id}: term probability over quarters")
    _axes(canvas, "quarter", "probability")
    y_hi = max(max(row[v] for row in track) for v in leading) if leading else 1.0
    y_hi = max(y_hi, 1e-6)
    for rank, v in enumerate(leading):
        color = _PALETTE[rank % len(_PALETTE)]
        points = [(_x_scale(t, 0, max(T - 1, 1)), _y_scale(track[t][v], 0, y_hi))
                  for t in range(T)]
        canvas.polyline(points, color)
        canvas.text(_WIDTH - _MARGIN_R - 4, _MARGIN_T + 14 + 14 * rank,
                    vocabulary[v], anchor="end", size=10, color=color)
    for t in range(T):
        if T <= 16 or t % 5 == 0:
            canvas.text(_x_scale(t, 0, max(T - 1, 1)), _HEIGHT - _MARGIN_B + 16,
                        str(t), size=10)
    for frac in (0.0, 0.5, 1.0):
        canvas.text(_MARGIN_L - 8, _y_scale(frac * y_hi, 0, y_hi) + 4,
                    f"{frac * y_hi:.2f}", anchor="end", size=10)
    return canvas.render()


_SERIES_METRICS = ("tp_rate", "fp_rate", "precision", "f_measure", "roc_auc")


def metric_series_svg(series: Sequence[tuple[int, Mapping[str, float | None]]],
                      title: str = "Cross-validated metrics per window") -> str:
    canvas = _Canvas(title)
    _axes(canvas, "window", "metric")
    if series:
        windows = [w for w, _ in series]
        x_lo, x_hi = min(windows), max(windows)
        for idx, metric in enumerate(_SERIES_METRICS):
            color = _PALETTE[idx % len(_PALETTE)]
            points = [(_x_scale(w, x_lo, x_hi), _y_scale(r.get(metric), 0, 1))
                      for w, r in series if r.get(metric) is not None]
            if points:
                canvas.polyline(points, color)
            canvas.text(_WIDTH - _MARGIN_R - 4, _MARGIN_T + 14 + 14 * idx,
                        metric, anchor="end", size=10, color=color)
        for w in windows:
            canvas.text(_x_scale(w, x_lo, x_hi), _HEIGHT - _MARGIN_B + 16,
                        str(w), size=10)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        canvas.text(_MARGIN_L - 8, _y_scale(frac, 0, 1) + 4, f"{frac:.2f}",
                    anchor="end", size=10)
    return canvas.render()


def lift_chart_svg(points: Sequence[tuple[float, float]],
                   title: str = "Cumulative churner capture") -> str:
    """Captured-fraction curve against the diagonal random baseline."""
    canvas = _Canvas(title)
    _axes(canvas, "fraction of users selected", "fraction of churners captured")
    canvas.line(_x_scale(0, 0, 1), _y_scale(0, 0, 1),
                _x_scale(1, 0, 1), _y_scale(1, 0, 1),
                color="#999", dash="5,4")
    if points:
        curve = [(0.0, 0.0)] + [(s, min(lift * s, 1.0)) for s, lift in points]
        canvas.polyline([(_x_scale(x, 0, 1), _y_scale(y, 0, 1)) for x, y in curve],
                        _PALETTE[1], width=2.0)
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        canvas.text(_x_scale(frac, 0, 1), _HEIGHT - _MARGIN_B + 16,
                    f"{frac:.2f}", size=10)
        canvas.text(_MARGIN_L - 8, _y_scale(frac, 0, 1) + 4, f"{frac:.2f}",
                    anchor="end", size=10)
    return canvas.render()


def write_svg(content: str, path: str | Path) -> None:
    Path(path).write_text(content)
