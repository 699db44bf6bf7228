"""Minimal deterministic SVG line plots for report bundles."""
from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

log = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c")


def _read_columns(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [_num(r[k]) for r in rows] for k in rows[0]}


def _num(s: Optional[str]) -> Optional[float]:
    if s is None or s == "":
        return None
    v = float(s)
    return v if math.isfinite(v) else None


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(series: Sequence[Tuple[str, Sequence[float], Sequence[float]]], title: str,
              xlabel: str, ylabel: str, logy: bool = False) -> str:
    """SVG text for one or more ``(label, x, y)`` polylines; ``None`` points are skipped."""
    pts_all = []
    for _, xs, ys in series:
        for x, y in zip(xs, ys):
            if x is None or y is None or (logy and y <= 0):
                continue
            pts_all.append((x, math.log10(y) if logy else y))
    if pts_all:
        x0, x1 = min(p[0] for p in pts_all), max(p[0] for p in pts_all)
        y0, y1 = min(p[1] for p in pts_all), max(p[1] for p in pts_all)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = WIDTH - MARGIN_L - MARGIN_R, HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.2f}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" '
                   f'font-size="11">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        label = f"1e{t:.2f}" if logy else f"{t:.3g}"
        out.append(f'<text x="{MARGIN_L - 6}" y="{sy(t) + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{label}</text>')
    out.append(f'<text x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 15 {MARGIN_T + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = [(x, math.log10(y) if logy else y) for x, y in zip(xs, ys)
               if x is not None and y is not None and not (logy and y <= 0)]
        if pts:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        ly = MARGIN_T + 16 + 16 * i
        out.append(f'<line x1="{WIDTH - MARGIN_R - 150}" y1="{ly - 4}" x2="{WIDTH - MARGIN_R - 125}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - MARGIN_R - 120}" y="{ly}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_bundle(report_dir) -> List[Path]:
    """Write ``error.svg`` and ``trace.svg`` from ``run.csv`` and ``trace_final.csv``."""
    d = Path(report_dir)
    run_csv, trace_csv = d / "run.csv", d / "trace_final.csv"
    for p in (run_csv, trace_csv):
        if not p.is_file():
            raise FileNotFoundError(f"missing {p}")
    run = _read_columns(run_csv)
    trace = _read_columns(trace_csv)

    err_svg = line_plot([("L2 error", run.get("k", []), run.get("l2_error", []))],
                        "Error history", "k", "L2(Gamma2) error", logy=True)
    series = [("psi_final", trace.get("x", []), trace.get("psi_final", []))]
    truth = trace.get("phi_true")
    if truth is None or all(v is None for v in truth):
        log.warning("%s has no phi_true values; plotting the reconstruction only", trace_csv)
    else:
        series.append(("phi_true", trace["x"], truth))
    trace_svg = line_plot(series, "Trace on Gamma2", "x", "value")

    paths = [d / "error.svg", d / "trace.svg"]
    paths[0].write_text(err_svg)
    paths[1].write_text(trace_svg)
    return paths
