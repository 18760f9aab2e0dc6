"""Minimal standalone SVG output: annotated heatmaps and median/IQR line charts."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

# blue -> white -> red, used for signed quantities centred at zero
DIVERGING = ((0.129, 0.400, 0.675), (0.969, 0.969, 0.969), (0.698, 0.094, 0.169))
SEQUENTIAL = ((0.969, 0.984, 1.0), (0.031, 0.188, 0.420))
SERIES_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e")

CELL = 64
MARGIN_L, MARGIN_T, MARGIN_R, MARGIN_B = 90, 50, 20, 60


def _hex(rgb) -> str:
    return "#" + "".join(f"{int(round(255 * c)):02x}" for c in rgb)


def _lerp(a, b, t):
    return tuple(x + (y - x) * t for x, y in zip(a, b))


def diverging_color(v: float, vmax: float) -> str:
    """Palette colour for ``v`` on a symmetric scale ``[-vmax, vmax]``; 0 maps to the midpoint."""
    t = 0.0 if vmax <= 0 else float(np.clip(v / vmax, -1.0, 1.0))
    lo, mid, hi = DIVERGING
    return _hex(_lerp(mid, hi, t) if t >= 0 else _lerp(mid, lo, -t))


def sequential_color(v: float, vmin: float, vmax: float) -> str:
    t = 0.0 if vmax <= vmin else float(np.clip((v - vmin) / (vmax - vmin), 0.0, 1.0))
    return _hex(_lerp(*SEQUENTIAL, t))


def _fmt(v: float) -> str:
    if abs(v) >= 100 or v == 0:
        return f"{v:.0f}"
    if abs(v) >= 1:
        return f"{v:.1f}"
    return f"{v:.3g}"


def _text(x, y, s, size=12, anchor="middle", rotate=None, fill="#000") -> str:
    tr = f' transform="rotate({rotate} {x} {y})"' if rotate is not None else ""
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}" fill="{fill}"{tr}>{escape(str(s))}</text>')


def render_heatmap_svg(
    table,
    out_path,
    row_labels: Sequence | None = None,
    col_labels: Sequence | None = None,
    title: str = "",
    row_name: str = "rho",
    col_name: str = "r",
    diverging: bool = True,
) -> Path:
    """Write an annotated heatmap; NaN cells are drawn hatched without a value.

    With ``diverging=True`` the palette is centred at 0 and scaled by the
    largest finite magnitude, so an all-zero table renders uniformly in the
    midpoint colour.
    """
    t = np.atleast_2d(np.asarray(table, dtype=float))
    n_rows, n_cols = t.shape
    row_labels = list(row_labels) if row_labels is not None else list(range(n_rows))
    col_labels = list(col_labels) if col_labels is not None else list(range(n_cols))
    if len(row_labels) != n_rows or len(col_labels) != n_cols:
        raise ValueError("label counts do not match the table shape")
    finite = t[np.isfinite(t)]
    vmax = float(np.max(np.abs(finite))) if finite.size else 0.0
    vmin_s = float(finite.min()) if finite.size else 0.0
    vmax_s = float(finite.max()) if finite.size else 0.0

    width = MARGIN_L + n_cols * CELL + MARGIN_R
    height = MARGIN_T + n_rows * CELL + MARGIN_B
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<defs><pattern id="hatch" width="8" height="8" patternUnits="userSpaceOnUse" '
        'patternTransform="rotate(45)"><rect width="8" height="8" fill="#ffffff"/>'
        '<line x1="0" y1="0" x2="0" y2="8" stroke="#888888" stroke-width="2"/></pattern></defs>',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
    ]
    if title:
        parts.append(_text(width / 2, 24, title, size=14))
    # first table row at the bottom, so rho increases upwards
    for i in range(n_rows):
        y0 = MARGIN_T + (n_rows - 1 - i) * CELL
        for j in range(n_cols):
            x0 = MARGIN_L + j * CELL
            v = t[i, j]
            if np.isfinite(v):
                fill = diverging_color(v, vmax) if diverging else sequential_color(v, vmin_s, vmax_s)
            else:
                fill = "url(#hatch)"
            parts.append(f'<rect class="cell" x="{x0}" y="{y0}" width="{CELL}" height="{CELL}" '
                         f'fill="{fill}" stroke="#ffffff"/>')
            if np.isfinite(v):
                parts.append(_text(x0 + CELL / 2, y0 + CELL / 2 + 4, _fmt(v), size=11))
        parts.append(_text(MARGIN_L - 8, y0 + CELL / 2 + 4, row_labels[i], size=11, anchor="end"))
    for j in range(n_cols):
        parts.append(_text(MARGIN_L + j * CELL + CELL / 2, MARGIN_T + n_rows * CELL + 18, col_labels[j], size=11))
    parts.append(_text(MARGIN_L + n_cols * CELL / 2, height - 12, col_name, size=13))
    parts.append(_text(22, MARGIN_T + n_rows * CELL / 2, row_name, size=13, rotate=-90))
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(parts) + "\n")
    return out_path


def render_lines_svg(
    x,
    series: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]],
    out_path,
    title: str = "",
    x_name: str = "innovation",
    y_name: str = "",
    width: int = 560,
    height: int = 360,
) -> Path:
    """Median lines with shaded interquartile bands; ``series[name] = (median, q25, q75)``.

    NaN points break the line rather than being drawn at zero.
    """
    x = np.asarray(x, dtype=float)
    vals = [np.asarray(a, dtype=float) for s in series.values() for a in s]
    finite = np.concatenate([v[np.isfinite(v)] for v in vals]) if vals else np.array([])
    y_lo, y_hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    x_lo, x_hi = (float(np.nanmin(x)), float(np.nanmax(x))) if x.size else (0.0, 1.0)
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 1.0, x_hi + 1.0
    pw, ph = width - MARGIN_L - MARGIN_R - 110, height - MARGIN_T - MARGIN_B

    def px(v):
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return MARGIN_T + (y_hi - v) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="#ffffff"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444444"/>',
    ]
    if title:
        parts.append(_text(width / 2, 24, title, size=14))
    if y_lo < 0 < y_hi:
        parts.append(f'<line x1="{MARGIN_L}" y1="{py(0):.1f}" x2="{MARGIN_L + pw}" y2="{py(0):.1f}" '
                     'stroke="#999999" stroke-dasharray="4 3"/>')
    for tick in np.linspace(x_lo, x_hi, 5):
        parts.append(_text(px(tick), MARGIN_T + ph + 16, _fmt(tick), size=10))
    for tick in np.linspace(y_lo, y_hi, 5):
        parts.append(_text(MARGIN_L - 6, py(tick) + 4, _fmt(tick), size=10, anchor="end"))
    for k, (name, (med, q25, q75)) in enumerate(series.items()):
        color = SERIES_COLORS[k % len(SERIES_COLORS)]
        med, q25, q75 = (np.asarray(a, dtype=float) for a in (med, q25, q75))
        ok = np.isfinite(med) & np.isfinite(q25) & np.isfinite(q75) & np.isfinite(x)
        for run in _runs(ok):
            upper = " ".join(f"{px(x[i]):.1f},{py(q75[i]):.1f}" for i in run)
            lower = " ".join(f"{px(x[i]):.1f},{py(q25[i]):.1f}" for i in reversed(run))
            parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
            line = " ".join(f"{px(x[i]):.1f},{py(med[i]):.1f}" for i in run)
            parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = MARGIN_T + 14 + 18 * k
        parts.append(f'<line x1="{MARGIN_L + pw + 12}" y1="{ly - 4}" x2="{MARGIN_L + pw + 32}" '
                     f'y2="{ly - 4}" stroke="{color}" stroke-width="3"/>')
        parts.append(_text(MARGIN_L + pw + 36, ly, name, size=11, anchor="start"))
    parts.append(_text(MARGIN_L + pw / 2, height - 14, x_name, size=13))
    parts.append(_text(22, MARGIN_T + ph / 2, y_name, size=13, rotate=-90))
    parts.append("</svg>")
    out_path = Path(out_path)
    out_path.write_text("\n".join(parts) + "\n")
    return out_path


def _runs(mask: np.ndarray) -> list[list[int]]:
    """Maximal runs of consecutive True indices."""
    runs, cur = [], []
    for i, m in enumerate(mask):
        if m:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs
