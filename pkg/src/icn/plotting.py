"""Minimal SVG line charts for prediction-vs-truth curves (no plotting backend needed)."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

COLORS = {"truth": "#1f77b4", "prediction": "#d62728"}


def _points(values, x0, y0, width, height, lo, hi):
    n = len(values)
    span = (hi - lo) or 1.0
    dx = width / max(n - 1, 1)
    return " ".join(f"{x0 + k * dx:.3f},{y0 + height - (v - lo) / span * height:.3f}" for k, v in enumerate(values))


def curve_svg(title: str, series: dict[str, Sequence[float]], width=900, height=300) -> str:
    """One polyline per series, all sharing the y range."""
    margin = 40
    allv = [v for s in series.values() for v in s]
    lo, hi = (min(allv), max(allv)) if allv else (0.0, 1.0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{margin}" y="20" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<rect x="{margin}" y="{margin}" width="{width - 2 * margin}" height="{height - 2 * margin}" '
        'fill="none" stroke="#999"/>',
        f'<text x="4" y="{margin + 10}" font-family="sans-serif" font-size="10">{hi:.1f}</text>',
        f'<text x="4" y="{height - margin}" font-family="sans-serif" font-size="10">{lo:.1f}</text>',
    ]
    for k, (name, vals) in enumerate(series.items()):
        color = COLORS.get(name, "#333")
        pts = _points(list(vals), margin, margin, width - 2 * margin, height - 2 * margin, lo, hi)
        parts.append(f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" stroke-width="1.2" '
                     f'points="{pts}"/>')
        parts.append(f'<text x="{width - margin - 120}" y="{20 + 14 * k}" font-family="sans-serif" '
                     f'font-size="12" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_area_curve(out_dir: str | Path, area_id: str, timestamps, truth, prediction) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"curve_{area_id}.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "truth", "prediction"])
        for row in zip(timestamps, truth, prediction):
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])
    svg_path = out / f"curve_{area_id}.svg"
    svg_path.write_text(curve_svg(f"Area {area_id}", {"truth": truth, "prediction": prediction}))
    return svg_path, csv_path
