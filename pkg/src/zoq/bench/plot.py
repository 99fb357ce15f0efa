"""Self-contained SVG line plots of summary curves.

Plots are emitted as hand-written SVG path elements with no external
assets: one polyline per combo, x-axis cumulative queries, y-axis the mean
objective on a log scale when every value is positive.  When some mean
objective is nonpositive the plot falls back to the suboptimality gap
(available when the optimum is known), else to a linear objective axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigurationError

__all__ = ["plot_summaries", "read_summary"]

_WIDTH, _HEIGHT = 880, 520
_ML, _MR, _MT, _MB = 72, 220, 36, 56
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f", "#bcbd22", "#e377c2"]


@dataclass
class Series:
    label: str
    x: list[float]
    f: list[float]
    gap: list[float]


def read_summary(path):
    """Parse a summary CSV into {budget: [Series, ...]}."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for need in ("combo", "budget", "cum_queries", "mean_f", "mean_gap"):
            if need not in idx:
                raise ConfigurationError(f"{path}: missing column {need!r}")
        groups: dict[int, dict[str, Series]] = {}
        for line in fh:
            cells = line.rstrip("\n").split(",")
            budget = int(cells[idx["budget"]])
            combo = cells[idx["combo"]]
            series = groups.setdefault(budget, {}).setdefault(
                combo, Series(combo, [], [], []))
            series.x.append(float(cells[idx["cum_queries"]]))
            series.f.append(float(cells[idx["mean_f"]]))
            series.gap.append(float(cells[idx["mean_gap"]]))
    return {b: list(combos.values()) for b, combos in groups.items()}


def _pick_axis(series_list):
    """(values per series, ylabel, log?) per the fallback rule."""
    all_f = [v for s in series_list for v in s.f]
    if all(v > 0 for v in all_f):
        return [s.f for s in series_list], "mean objective", True
    all_gap = [v for s in series_list for v in s.gap]
    if all(math.isfinite(v) for v in all_gap):
        log = all(v > 0 for v in all_gap)
        return [s.gap for s in series_list], "mean gap", log
    return [s.f for s in series_list], "mean objective", False


def _ticks_linear(lo, hi, n=5):
    if hi == lo:
        return [lo]
    step = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(step))
    step = math.ceil(step / mag) * mag
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi):
        out.append(v)
        v += step
    return out


def _ticks_log(lo, hi):
    out = []
    e = math.floor(math.log10(lo))
    while 10.0**e <= hi * (1 + 1e-12):
        if 10.0**e >= lo * (1 - 1e-12):
            out.append(10.0**e)
        e += 1
    return out or [lo, hi]


def _fmt_tick(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


def _svg_figure(series_list, ys, ylabel, log_y, title):
    xs_all = [v for s in series_list for v in s.x]
    ys_all = [v for y in ys for v in y]
    x_lo, x_hi = 0.0, max(xs_all)
    if log_y:
        y_lo, y_hi = min(ys_all), max(ys_all)
        if y_hi == y_lo:
            y_hi = y_lo * 10
        ty = lambda v: math.log10(v)
    else:
        y_lo, y_hi = min(ys_all + [0.0]), max(ys_all)
        if y_hi == y_lo:
            y_hi = y_lo + 1
        ty = lambda v: v
    span_x = x_hi - x_lo or 1.0
    span_y = ty(y_hi) - ty(y_lo) or 1.0
    px = lambda v: _ML + (v - x_lo) / span_x * (_WIDTH - _ML - _MR)
    py = lambda v: _HEIGHT - _MB - (ty(v) - ty(y_lo)) / span_y * (_HEIGHT - _MT - _MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
           f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
           f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
           f'<text x="{_ML}" y="22" font-family="sans-serif" font-size="15" '
           f'font-weight="bold">{title}</text>']
    # axes
    out.append(f'<line x1="{_ML}" y1="{_HEIGHT - _MB}" x2="{_WIDTH - _MR}" '
               f'y2="{_HEIGHT - _MB}" stroke="black"/>')
    out.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_HEIGHT - _MB}" '
               f'stroke="black"/>')
    for v in _ticks_linear(x_lo, x_hi):
        x = px(v)
        out.append(f'<line x1="{x:.2f}" y1="{_HEIGHT - _MB}" x2="{x:.2f}" '
                   f'y2="{_HEIGHT - _MB + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_HEIGHT - _MB + 20}" '
                   f'font-family="sans-serif" font-size="12" '
                   f'text-anchor="middle">{_fmt_tick(v)}</text>')
    ticks = _ticks_log(y_lo, y_hi) if log_y else _ticks_linear(ty(y_lo), ty(y_hi))
    for v in ticks:
        y = py(v)
        out.append(f'<line x1="{_ML - 5}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{_ML - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
                   f'font-size="12" text-anchor="end">{_fmt_tick(v)}</text>')
    out.append(f'<text x="{(_ML + _WIDTH - _MR) / 2:.2f}" y="{_HEIGHT - 14}" '
               f'font-family="sans-serif" font-size="13" '
               f'text-anchor="middle">queries used</text>')
    out.append(f'<text x="18" y="{(_MT + _HEIGHT - _MB) / 2:.2f}" '
               f'font-family="sans-serif" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {(_MT + _HEIGHT - _MB) / 2:.2f})">'
               f'{ylabel}</text>')
    # polylines + legend
    for i, (s, y_vals) in enumerate(zip(series_list, ys)):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{px(xv):.2f},{py(yv):.2f}"
                       for xv, yv in zip(s.x, y_vals))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.8"/>')
        ly = _MT + 18 + i * 20
        lx = _WIDTH - _MR + 16
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 26}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2.5"/>')
        out.append(f'<text x="{lx + 32}" y="{ly}" font-family="sans-serif" '
                   f'font-size="12">{s.label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_summaries(summary_paths, out_dir) -> list[Path]:
    """Render one SVG per budget found in the given summary CSVs.

    All files must expose the same budget set (the shared query axis);
    mismatches raise a ConfigurationError naming the offending files.
    """
    if not summary_paths:
        raise ConfigurationError("no summary CSVs given")
    grouped = {}
    budget_sets = {}
    for path in summary_paths:
        by_budget = read_summary(path)
        budget_sets[str(path)] = set(by_budget)
        for budget, series in by_budget.items():
            grouped.setdefault(budget, []).extend(series)
    ref_name, ref = next(iter(budget_sets.items()))
    for name, got in budget_sets.items():
        if got != ref:
            raise ConfigurationError(
                f"mismatched query axes: {ref_name} has budgets {sorted(ref)}, "
                f"{name} has {sorted(got)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for budget in sorted(grouped):
        series_list = grouped[budget]
        ys, ylabel, log_y = _pick_axis(series_list)
        svg = _svg_figure(series_list, ys, ylabel, log_y,
                          f"budget K = {budget}")
        path = out_dir / f"figure_K{budget}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)
    return written
