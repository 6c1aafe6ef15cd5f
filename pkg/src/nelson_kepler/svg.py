"""Tiny dependency-free SVG renderers for quick looks at grids and paths."""

from __future__ import annotations

import numpy as np

_W, _H, _PAD = 480, 480, 20


def _colour(t):
    # blue -> white -> red
    t = float(np.clip(t, 0.0, 1.0))
    if t < 0.5:
        k = int(255 * t / 0.5)
        return f"rgb({k},{k},255)"
    k = int(255 * (1 - t) / 0.5)
    return f"rgb(255,{k},{k})"


def heatmap(xs, ys, values, title=""):
    """SVG string for ``values[j, i]`` at ``(xs[i], ys[j])``; NaN cells are left blank."""
    v = np.asarray(values, dtype=float)
    finite = v[np.isfinite(v)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    nx, ny = len(xs), len(ys)
    cw, ch = (_W - 2 * _PAD) / nx, (_H - 2 * _PAD) / ny
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">']
    if title:
        parts.append(f'<title>{title}</title>')
    for j in range(ny):
        for i in range(nx):
            if not np.isfinite(v[j, i]):
                continue
            x = _PAD + i * cw
            y = _H - _PAD - (j + 1) * ch
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.05:.2f}" height="{ch + 0.05:.2f}" '
                f'fill="{_colour((v[j, i] - lo) / span)}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


def polylines(curves, bounds=None, title=""):
    """SVG string drawing each (N, 2) array in ``curves`` as a polyline with equal axis scaling."""
    curves = [np.asarray(c, dtype=float)[:, :2] for c in curves if len(c)]
    if bounds is None:
        allp = np.concatenate(curves) if curves else np.zeros((1, 2))
        allp = allp[np.all(np.isfinite(allp), axis=1)]
        xmin, ymin = allp.min(axis=0)
        xmax, ymax = allp.max(axis=0)
    else:
        xmin, xmax, ymin, ymax = bounds
    span = max(xmax - xmin, ymax - ymin, 1e-12)
    scale = (_W - 2 * _PAD) / span

    def tx(p):
        return _PAD + (p[:, 0] - xmin) * scale, _H - _PAD - (p[:, 1] - ymin) * scale

    palette = ["#1f4e99", "#b22222", "#2e8b57", "#8b6914", "#6a3d9a", "#444444"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">']
    if title:
        parts.append(f'<title>{title}</title>')
    for k, c in enumerate(curves):
        c = c[np.all(np.isfinite(c), axis=1)]
        if len(c) > 2000:
            c = c[:: len(c) // 2000 + 1]
        X, Y = tx(c)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(X, Y))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{palette[k % len(palette)]}" stroke-width="1"/>')
    parts.append("</svg>")
    return "\n".join(parts)
