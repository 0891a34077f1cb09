"""Tiny deterministic SVG charts for loss histories and ablation grids."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from xml.sax.saxutils import escape

from ncdlab.ablation import GRID_HEADER
from ncdlab.losses import HISTORY_HEADER

W, H = 640, 360
PAD = 48
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
COMPONENTS = ("ce", "H", "mse", "kl", "var")


class PlotInputError(ValueError):
    pass


def _read(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise PlotInputError("empty CSV")
    header, body = rows[0], rows[1:]
    if not body:
        raise PlotInputError("CSV has a header but no data rows")
    if any(len(r) != len(header) for r in body):
        raise PlotInputError("ragged CSV rows")
    return header, body


def _svg(title: str, elements: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">\n'
        f'<rect width="{W}" height="{H}" fill="white"/>\n'
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">'
        f"{escape(title)}</text>\n"
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>\n'
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>\n'
    )
    return head + "\n".join(elements) + "\n</svg>\n"


def history_chart(text: str) -> str:
    """One line per loss component: per-epoch mean, log10 scale."""
    header, body = _read(text)
    if header != HISTORY_HEADER:
        raise PlotInputError(f"not a loss history: header {header}")
    sums = defaultdict(lambda: defaultdict(list))
    try:
        for r in body:
            rec = dict(zip(header, r))
            ep = int(rec["epoch"])
            for c in COMPONENTS:
                branch_has = (c == "ce") == (rec["branch"] == "labeled")
                if branch_has:
                    sums[c][ep].append(float(rec[c]))
    except ValueError as exc:
        raise PlotInputError(f"bad number in history: {exc}") from None
    series = {c: [math.log10(max(sum(v) / len(v), 1e-8)) for _, v in sorted(sums[c].items())] for c in COMPONENTS}
    n = max(len(s) for s in series.values())
    lo = min(min(s) for s in series.values() if s)
    hi = max(max(s) for s in series.values() if s)
    span = hi - lo or 1.0

    def xy(i, v):
        x = PAD + (W - 2 * PAD) * (i / max(n - 1, 1))
        y = H - PAD - (H - 2 * PAD) * ((v - lo) / span)
        return f"{x:.2f},{y:.2f}"

    els = []
    for k, c in enumerate(COMPONENTS):
        pts = " ".join(xy(i, v) for i, v in enumerate(series[c]))
        color = COLORS[k % len(COLORS)]
        els.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"><title>{c}</title></polyline>')
        els.append(
            f'<text x="{W - PAD + 4}" y="{PAD + 14 * k}" font-family="sans-serif" font-size="11" fill="{color}">{c}</text>'
        )
    els.append(f'<text x="{PAD}" y="{H - 12}" font-family="sans-serif" font-size="11">epoch (0..{n - 1})</text>')
    els.append(
        f'<text x="4" y="{PAD - 8}" font-family="sans-serif" font-size="11">log10 loss [{lo:.2f}, {hi:.2f}]</text>'
    )
    return _svg("loss components per epoch", els)


def grid_chart(text: str) -> str:
    """Bar per ablation cell, height = mean novel ACC."""
    header, body = _read(text)
    if header != GRID_HEADER:
        raise PlotInputError(f"not an ablation grid: header {header}")
    try:
        vals = [(f"{r[0]}:{r[1]}", float(r[4])) for r in body]
    except ValueError as exc:
        raise PlotInputError(f"bad number in grid: {exc}") from None
    bw = (W - 2 * PAD) / len(vals)
    els = []
    for i, (label, v) in enumerate(vals):
        v = 0.0 if math.isnan(v) else v
        h = (H - 2 * PAD) * v
        x = PAD + i * bw
        els.append(
            f'<rect x="{x + 2:.2f}" y="{H - PAD - h:.2f}" width="{bw - 4:.2f}" height="{h:.2f}" '
            f'fill="{COLORS[i % len(COLORS)]}"><title>{escape(label)} {v:.3f}</title></rect>'
        )
        els.append(
            f'<text x="{x + bw / 2:.2f}" y="{H - PAD + 12}" text-anchor="end" font-family="sans-serif" '
            f'font-size="9" transform="rotate(-35 {x + bw / 2:.2f} {H - PAD + 12})">{escape(label)}</text>'
        )
    return _svg("novel ACC per ablation cell", els)


def chart(text: str) -> str:
    first = text.split("\n", 1)[0].strip()
    if first == ",".join(HISTORY_HEADER):
        return history_chart(text)
    if first == ",".join(GRID_HEADER):
        return grid_chart(text)
    raise PlotInputError("unrecognized CSV: expected a loss history or an ablation grid")
