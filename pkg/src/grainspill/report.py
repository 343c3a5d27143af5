"""SVG heatmap of a labelled square matrix."""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

import numpy as np
import pandas as pd

CELL = 28
MARGIN = 60


def _shade(v, vmax):
    # white to dark red
    f = 0.0 if vmax <= 0 else min(max(v / vmax, 0.0), 1.0)
    r = 255 - int(round(f * (255 - 165)))
    gb = 255 - int(round(f * 255))
    return f"#{r:02x}{gb:02x}{gb:02x}"


MARGINS = ("FROM", "TO", "NET")


def read_matrix(path) -> pd.DataFrame:
    # connectedness tables carry FROM/TO/NET margins; keep the square core
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    frame = frame.drop(index=[m for m in MARGINS if m in frame.index], columns=[m for m in MARGINS if m in frame.columns])
    frame.index.name = None
    return frame


def render_heatmap(matrix, title="spillover heatmap") -> str:
    """Shaded grid with labels; a circle marks each row's largest value."""
    frame = matrix if isinstance(matrix, pd.DataFrame) else pd.DataFrame(np.asarray(matrix, dtype=float))
    values = frame.to_numpy(dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"heatmap needs a square matrix, got shape {values.shape}")
    k = values.shape[0]
    rows = [str(r) for r in frame.index]
    cols = [str(c) for c in frame.columns]
    vmax = float(np.nanmax(values)) if values.size else 0.0
    size = MARGIN + k * CELL + 10
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f"<title>{escape(title)}</title>",
        '<g font-family="sans-serif" font-size="9">',
    ]
    for i in range(k):
        y = MARGIN + i * CELL
        out.append(f'<text class="row-label" x="{MARGIN - 4}" y="{y + CELL / 2 + 3}" text-anchor="end">{escape(rows[i])}</text>')
        x = MARGIN + i * CELL
        out.append(
            f'<text class="col-label" x="{x + CELL / 2}" y="{MARGIN - 4}" text-anchor="start" '
            f'transform="rotate(-60 {x + CELL / 2} {MARGIN - 4})">{escape(cols[i])}</text>'
        )
    for i in range(k):
        for j in range(k):
            v = values[i, j]
            out.append(
                f'<rect class="cell" x="{MARGIN + j * CELL}" y="{MARGIN + i * CELL}" width="{CELL}" height="{CELL}" '
                f'fill="{_shade(v, vmax)}" stroke="#cccccc"><title>{escape(rows[i])} / {escape(cols[j])}: {v:.4g}</title></rect>'
            )
    for i in range(k):
        if np.all(np.isnan(values[i])):
            continue
        j = int(np.nanargmax(values[i]))
        cx, cy = MARGIN + j * CELL + CELL / 2, MARGIN + i * CELL + CELL / 2
        out.append(f'<circle class="marker" cx="{cx}" cy="{cy}" r="{CELL / 4}" fill="gold" stroke="black" stroke-width="0.5" data-row={quoteattr(rows[i])}/>')
    out += ["</g>", "</svg>"]
    return "\n".join(out) + "\n"


def write_heatmap(matrix, path, title="spillover heatmap"):
    svg = render_heatmap(matrix, title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    return path
