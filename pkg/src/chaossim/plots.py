"""Metric-vs-axis line plots written as standalone SVG.

The SVG is assembled by hand so output depends only on the input table:
coordinates are printed with fixed precision, series come out in sorted
order, and nothing reads the clock or the locale.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from xml.sax.saxutils import escape

from .runner import METRIC_COLUMNS, Row, render_csv

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=170, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
LABELS = {
    "throughput": "write throughput (tx / unit)",
    "avg_latency": "average write latency (units)",
    "success_rate": "success rate",
    "chain_sigma": "std. dev. of chain lengths",
}


def table_of(rows: list[Row]) -> list[dict]:
    """Rows as CSV-shaped dicts (all values strings)."""
    return read_table(render_csv(rows))


def read_table(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _num(s):
    try:
        v = float(s)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def _series_label(row: dict, axis: str, varying: tuple) -> str:
    cond = row.get("condition", "")
    if cond.startswith(axis + "="):
        cond = ""
    parts = [cond if key == "condition" else row.get(key, "") for key in varying]
    return " / ".join(p for p in parts if p) or cond or row.get("protocol", "")


def group_series(table: list[dict], axis: str, metric: str) -> dict[str, list[tuple]]:
    """``{label: [(x, mean metric over seeds), ...]}`` sorted by x.

    Rows whose metric is blank (failed runs, undefined latency) are skipped.
    A series is one condition; the protocol is added to the label when the
    table mixes protocols.
    """
    if not table:
        raise ValueError("cannot plot an empty table")
    if axis not in table[0]:
        raise ValueError(f"unknown plot axis {axis!r}")
    varying = tuple(k for k in ("protocol", "condition")
                    if k != axis and len({r.get(k, "") for r in table if not r.get(k, "").startswith(axis + "=")}) > 1)
    acc: dict[str, dict] = {}
    for r in table:
        y = _num(r.get(metric))
        if y is None:
            continue
        label = _series_label(r, axis, varying)
        acc.setdefault(label, {}).setdefault(r[axis], []).append(y)
    out = {}
    for label in sorted(acc):
        pts = [(x, math.fsum(ys) / len(ys)) for x, ys in acc[label].items()]
        out[label] = _sort_x(pts)
    return out


def _sort_x(pts):
    if all(_num(x) is not None for x, _ in pts):
        return sorted(pts, key=lambda p: _num(p[0]))
    return sorted(pts, key=lambda p: p[0])


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    return [start + i * step for i in range(int(math.ceil((hi - start) / step)) + 1)]


def _f(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}" if abs(v) < 1e6 else f"{v:.3g}"


def render_svg(series: dict[str, list[tuple]], axis: str, metric: str) -> str:
    xs = sorted({x for pts in series.values() for x, _ in pts}, key=lambda x: (_num(x) is None, _num(x) or 0, x))
    numeric = all(_num(x) is not None for x in xs)
    ys = [y for pts in series.values() for _, y in pts]
    y_ticks = _ticks(min(0.0, min(ys, default=0.0)), max(ys, default=1.0))
    y0, y1 = y_ticks[0], y_ticks[-1]
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - left - MARGIN["right"]
    ph = HEIGHT - top - MARGIN["bottom"]

    if numeric and len(xs) > 1:
        x_ticks = [_num(x) for x in xs]
        xlo, xhi = x_ticks[0], x_ticks[-1]
        px = lambda x: left + (_num(x) - xlo) / (xhi - xlo) * pw
    else:
        pos = {x: i for i, x in enumerate(xs)}
        px = lambda x: left + (pos[x] + 0.5) / max(len(xs), 1) * pw
    py = lambda y: top + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<title>{escape(metric)} vs {escape(axis)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in y_ticks:
        y = _f(py(t))
        out.append(f'<line x1="{left}" y1="{y}" x2="{left + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">{_tick_label(t)}</text>')
    for x in xs:
        xp = _f(px(x))
        out.append(f'<line x1="{xp}" y1="{top + ph}" x2="{xp}" y2="{top + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{xp}" y="{top + ph + 16}" text-anchor="middle">{escape(str(x))}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(axis)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(LABELS.get(metric, metric))}</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
        out.append(f'<g class="series" data-label="{escape(label, {chr(34): "&quot;"})}">')
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * i
        lx = left + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}" dominant-baseline="middle">{escape(label)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_plots(table, axis: str, out, metrics=METRIC_COLUMNS) -> list[Path]:
    """One ``<metric>-vs-<axis>.svg`` per metric in directory ``out``.

    ``table`` is a list of :class:`Row` or of CSV-shaped dicts.
    """
    if table and isinstance(table[0], Row):
        table = table_of(table)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in metrics:
        svg = render_svg(group_series(table, axis, metric), axis, metric)
        path = out / f"{metric}-vs-{axis}.svg"
        path.write_text(svg, encoding="utf-8")
        paths.append(path)
    return paths
