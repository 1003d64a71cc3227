"""Curve normalization, merging and a dependency-free SVG line plot."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

from .ppo import LearningCurve

MERGED_COLUMNS = ("series", "stage", "env_steps", "stage_env_steps", "mean_return", "normalized_return")
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


@dataclass
class CurveSeries:
    """One learning curve and the maximum return of the env it was trained on."""

    label: str
    curve: LearningCurve
    max_return: float
    series: str = "two-stage"


@dataclass(frozen=True)
class MergedRow:
    series: str
    stage: str
    env_steps: int
    stage_env_steps: int
    mean_return: float
    normalized_return: float


def normalize_and_merge_curves(curves: list[CurveSeries]) -> list[MergedRow]:
    """Divide every curve by its own env's maximum and lay stages of the same
    series end to end on one step axis (a stage's axis starts where the
    previous stage of that series ended)."""
    rows: list[MergedRow] = []
    offsets: dict[str, int] = {}
    for c in curves:
        if not c.max_return > 0:
            raise ValueError(f"{c.label}: theoretical max return must be positive")
        offset = offsets.get(c.series, 0)
        for p in c.curve.points:
            norm = p.mean_return / c.max_return
            if norm > 1.0 + 1e-12:
                raise ValueError(f"{c.label}: normalized return {norm} exceeds 1; wrong max_return?")
            rows.append(MergedRow(c.series, c.label, offset + p.env_steps, p.env_steps, p.mean_return, norm))
        if c.curve.points:
            offsets[c.series] = offset + c.curve.points[-1].env_steps
    return rows


def write_merged_csv(rows: list[MergedRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MERGED_COLUMNS)
        for r in rows:
            w.writerow([r.series, r.stage, r.env_steps, r.stage_env_steps, repr(r.mean_return),
                        repr(r.normalized_return)])


def read_merged_csv(path) -> list[MergedRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MERGED_COLUMNS:
            raise ValueError(f"{path}: not a merged curve file")
        return [MergedRow(r["series"], r["stage"], int(r["env_steps"]), int(r["stage_env_steps"]),
                          float(r["mean_return"]), float(r["normalized_return"])) for r in reader]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    if v != 0 and (abs(v) >= 1e4 or abs(v) < 1e-2):
        return f"{v:.0e}" if abs(v) >= 1e4 else f"{v:.1e}"
    return f"{v:g}"


def svg_line_plot(rows: list[MergedRow], title: str = "normalized learning curves", width: int = 720,
                  height: int = 420) -> str:
    """Render one polyline per (series, stage), x = env steps, y = normalized return."""
    groups: dict[tuple[str, str], list[MergedRow]] = {}
    for r in rows:
        groups.setdefault((r.series, r.stage), []).append(r)
    ml, mr, mt, mb = 70, 170, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    finite = [r for r in rows if math.isfinite(r.normalized_return)]
    x_hi = max((r.env_steps for r in rows), default=1) or 1
    y_lo = min([0.0] + [r.normalized_return for r in finite])
    y_hi = max([1e-3] + [r.normalized_return for r in finite])

    def sx(x):
        return ml + pw * x / x_hi

    def sy(y):
        return mt + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{ml + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(0, x_hi):
        out.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y_lo, y_hi):
        out.append(f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">environment steps</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">normalized return</text>')
    for i, ((series, stage), pts) in enumerate(groups.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(r.env_steps):.2f},{sy(r.normalized_return):.2f}"
                          for r in pts if math.isfinite(r.normalized_return))
        if coords:
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 12}" y1="{ly - 4}" x2="{ml + pw + 32}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 38}" y="{ly}">{escape(f"{series}: {stage}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(rows: list[MergedRow], path, title: str = "normalized learning curves") -> None:
    with open(path, "w") as fh:
        fh.write(svg_line_plot(rows, title))
