"""Minimal SVG charts: line plots and box plots, emitted as plain XML."""

from __future__ import annotations

import math
from typing import Dict, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 480, 320
MARGIN = dict(left=64, right=16, top=32, bottom=56)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.0e}"
    return f"{v:.3g}"


class _Axes:
    def __init__(self, lo, hi, log, pixel_lo, pixel_hi):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi, self.log = lo, hi, log
        self.p0, self.p1 = pixel_lo, pixel_hi

    def __call__(self, v):
        if self.log:
            v = math.log10(v)
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)

    def ticks(self, count=5):
        vals = np.linspace(self.lo, self.hi, count)
        return [10**v if self.log else v for v in vals]


def _positive_range(values, log):
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if log:
        v = v[v > 0]
    if v.size == 0:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    if not log:
        pad = 0.05 * (hi - lo or abs(hi) or 1.0)
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _frame(title, xlabel, ylabel, xaxis: Optional[_Axes], yaxis: _Axes, xticks=None) -> List[str]:
    left, top = MARGIN["left"], MARGIN["top"]
    right, bottom = WIDTH - MARGIN["right"], HEIGHT - MARGIN["bottom"]
    out = [
        f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" fill="none" stroke="#333"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for v in yaxis.ticks():
        y = yaxis(v)
        out.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#333"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end" font-size="10">{_fmt(v)}</text>')
    if xticks is None and xaxis is not None:
        xticks = [(xaxis(v), _fmt(v)) for v in xaxis.ticks()]
    for x, label in xticks or []:
        out.append(f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 4}" stroke="#333"/>')
        out.append(f'<text x="{x:.1f}" y="{bottom + 16}" text-anchor="middle" font-size="10">{escape(label)}</text>')
    return out


def _document(parts: List[str], width=WIDTH, height=HEIGHT) -> str:
    body = "\n".join(parts)
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">\n{body}\n</svg>\n'
    )


def line_chart_parts(series: Dict[str, Tuple[Sequence[float], Sequence[float]]], title="",
                     xlabel="", ylabel="", log_y=False) -> List[str]:
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    xaxis = _Axes(*_positive_range(xs_all, False), False, MARGIN["left"], WIDTH - MARGIN["right"])
    yaxis = _Axes(*_positive_range(ys_all, log_y), log_y, HEIGHT - MARGIN["bottom"], MARGIN["top"])
    out = _frame(title, xlabel, ylabel, xaxis, yaxis)
    for i, (name, (xs, ys)) in enumerate(series.items()):
        pts = [
            f"{xaxis(x):.1f},{yaxis(y):.1f}"
            for x, y in zip(xs, ys)
            if y is not None and math.isfinite(y) and (y > 0 or not log_y)
        ]
        color = PALETTE[i % len(PALETTE)]
        if pts:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{" ".join(pts)}"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 4}" y="{MARGIN["top"] + 14 * (i + 1)}" '
                   f'text-anchor="end" font-size="10" fill="{color}">{escape(name)}</text>')
    return out


def line_chart(series, title="", xlabel="", ylabel="", log_y=False) -> str:
    """SVG line chart of ``{name: (xs, ys)}``."""
    return _document(line_chart_parts(series, title, xlabel, ylabel, log_y))


def box_chart_parts(groups: Sequence[Tuple[str, Sequence[float]]], title="", ylabel="",
                    xlabel="", log_y=False) -> List[str]:
    vals_all = [v for _, vs in groups for v in vs]
    yaxis = _Axes(*_positive_range(vals_all, log_y), log_y, HEIGHT - MARGIN["bottom"], MARGIN["top"])
    left, right = MARGIN["left"], WIDTH - MARGIN["right"]
    slot = (right - left) / max(len(groups), 1)
    centers = [left + slot * (i + 0.5) for i in range(len(groups))]
    out = _frame(title, xlabel, ylabel, None, yaxis, xticks=[(c, g[0]) for c, g in zip(centers, groups)])
    half = min(slot * 0.3, 20)
    for i, ((_, values), cx) in enumerate(zip(groups, centers)):
        v = np.asarray([x for x in values if x is not None and math.isfinite(x) and (x > 0 or not log_y)])
        if v.size == 0:
            continue
        q1, med, q3 = (float(np.quantile(v, p, method="lower")) for p in (0.25, 0.5, 0.75))
        lo, hi = float(v.min()), float(v.max())
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<line x1="{cx:.1f}" y1="{yaxis(lo):.1f}" x2="{cx:.1f}" y2="{yaxis(hi):.1f}" stroke="{color}"/>')
        top, bot = yaxis(q3), yaxis(q1)
        out.append(f'<rect x="{cx - half:.1f}" y="{top:.1f}" width="{2 * half:.1f}" '
                   f'height="{max(bot - top, 0.5):.1f}" fill="white" stroke="{color}"/>')
        out.append(f'<line x1="{cx - half:.1f}" y1="{yaxis(med):.1f}" x2="{cx + half:.1f}" '
                   f'y2="{yaxis(med):.1f}" stroke="{color}" stroke-width="2"/>')
    return out


def box_chart(groups, title="", ylabel="", xlabel="", log_y=False) -> str:
    """SVG box plot (whiskers at min/max) of ``[(label, values), ...]``."""
    return _document(box_chart_parts(groups, title, ylabel, xlabel, log_y))


def panels(charts: Sequence[List[str]]) -> str:
    """Place chart bodies side by side in one SVG document."""
    parts = []
    for i, body in enumerate(charts):
        parts.append(f'<g transform="translate({i * WIDTH} 0)">')
        parts.extend(body)
        parts.append("</g>")
    return _document(parts, width=WIDTH * max(len(charts), 1))


def residual_chart(trace, title="residual per iteration") -> str:
    its = trace.column("iteration")
    res = trace.column("residual")
    return line_chart({"||Ax-b||^2": (its, res**2)}, title, "iteration", "squared residual", log_y=True)


def ratio_by_m_chart(records, title="s_hat/s0 by number of measurements") -> str:
    groups: Dict[Tuple[int, str], List[float]] = {}
    for r in records:
        if not r.failed and r.s_hat_ratio is not None:
            groups.setdefault((r.spec.m, r.label), []).append(r.s_hat_ratio)
    ordered = [(f"{label} m={m}" if len({l for _, l in groups}) > 1 else f"m={m}", v)
               for (m, label), v in sorted(groups.items())]
    return box_chart(ordered, title, "s_hat/s0", "measurements")


def comparison_chart(records) -> str:
    """Three panels: s_hat/s0, runtime and residual per method label."""
    labels: List[str] = []
    for r in records:
        if r.label not in labels:
            labels.append(r.label)
    # cosamp runs sorted by k, the proposed method last
    labels.sort(key=lambda l: (l.startswith("sss"), int(l.split("k=")[1].rstrip(")")) if "k=" in l else 0, l))

    def collect(attr):
        return [(l, [getattr(r, attr) for r in records if r.label == l and not r.failed]) for l in labels]

    return panels([
        box_chart_parts(collect("s_hat_ratio"), "sparsity estimate", "s_hat/s0", "method", log_y=True),
        box_chart_parts(collect("runtime_seconds"), "runtime", "seconds", "method", log_y=True),
        box_chart_parts(collect("final_residual"), "reconstruction error", "||Ax-b||", "method", log_y=True),
    ])
