"""Tiny deterministic SVG writer.

Hand-rolled tags with fixed-precision coordinates so identical inputs give
byte-identical files; plotting libraries embed ids and timestamps that break
reproducibility.  The plots are convenience projections, not measurement
surfaces.
"""
from __future__ import annotations

import numpy as np


def _bounds(curves, markers):
    pts = [np.asarray(c, dtype=float) for c, _ in curves]
    if markers:
        pts.append(np.asarray([m for m, _ in markers], dtype=float))
    allp = np.vstack(pts)
    lo = allp.min(axis=0)
    hi = allp.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 0.06 * span.max()
    return lo - pad, hi + pad


def render(curves, markers=(), width: int = 640) -> str:
    """Render 2D polylines and marker dots.

    ``curves``: iterable of (points (N,2), stroke color);
    ``markers``: iterable of ((x, y), fill color).
    """
    curves = [(np.asarray(c, dtype=float), color) for c, color in curves]
    lo, hi = _bounds(curves, list(markers))
    span = hi - lo
    height = int(round(width * span[1] / span[0]))
    sx = width / span[0]
    sy = height / span[1]

    def tx(p):
        return (p[0] - lo[0]) * sx, (hi[1] - p[1]) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for pts, color in curves:
        coords = " ".join("%.4f,%.4f" % tx(p) for p in pts)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
    for m, color in markers:
        x, y = tx(np.asarray(m, dtype=float))
        parts.append(f'<circle cx="%.4f" cy="%.4f" r="3.5" fill="{color}"/>'
                     % (x, y))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write(path, curves, markers=(), width: int = 640):
    with open(path, "w", newline="\n") as fh:
        fh.write(render(curves, markers, width))
