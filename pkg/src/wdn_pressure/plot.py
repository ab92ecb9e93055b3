"""Dependency-free, byte-deterministic SVG plots."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .signal import ImfSet

WIDTH = 800
PANEL_HEIGHT = 160
MARGIN = 40
STROKES = ("#1f3b73", "#b2432f", "#3f7f3f", "#7a4f9a", "#8a6d1f")


class PlotError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float) -> np.ndarray:
    if hi == lo:
        return np.full(values.shape, (out_lo + out_hi) / 2.0)
    return out_lo + (values - lo) / (hi - lo) * (out_hi - out_lo)


def _header(height: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
            f'viewBox="0 0 {WIDTH} {height}">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>']


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _panel(series: Sequence[np.ndarray], labels: Sequence[str], top: float, title: str) -> list[str]:
    x0, x1 = MARGIN, WIDTH - MARGIN
    y0, y1 = top + PANEL_HEIGHT - 20, top + 20
    allv = np.concatenate(series)
    lo, hi = float(allv.min()), float(allv.max())
    out = [f'<g class="panel">',
           f'<rect x="{x0}" y="{_fmt(y1)}" width="{x1 - x0}" height="{_fmt(y0 - y1)}" '
           f'fill="none" stroke="#999999"/>',
           f'<text x="{x0}" y="{_fmt(top + 14)}" font-size="12">{_escape(title)}</text>',
           f'<text x="{x1}" y="{_fmt(top + 14)}" font-size="10" text-anchor="end">'
           f'{lo:.4g} .. {hi:.4g}</text>']
    for k, (vals, label) in enumerate(zip(series, labels)):
        xs = _scale(np.arange(len(vals), dtype=float), 0.0, max(len(vals) - 1, 1), x0, x1)
        ys = _scale(vals, lo, hi, y0, y1)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{STROKES[k % len(STROKES)]}" stroke-width="1" '
                   f'points="{pts}"><title>{_escape(label)}</title></polyline>')
    out.append("</g>")
    return out


def line_svg(series: Sequence[Sequence[float]], labels: Sequence[str] | None = None,
             title: str = "") -> str:
    """Overlay line plot; one polyline per series."""
    arrs = [np.asarray(s, dtype=float) for s in series]
    if not arrs or any(a.size == 0 for a in arrs):
        raise PlotError("nothing to plot: empty series")
    labels = list(labels) if labels is not None else [f"series_{i}" for i in range(len(arrs))]
    height = PANEL_HEIGHT + MARGIN
    return "\n".join(_header(height) + _panel(arrs, labels, MARGIN / 2, title) + ["</svg>"]) + "\n"


def panels_svg(panels: Sequence[tuple[str, Sequence[float]]]) -> str:
    """Vertically stacked single-line panels."""
    if not panels or any(len(v) == 0 for _, v in panels):
        raise PlotError("nothing to plot: empty panel")
    height = PANEL_HEIGHT * len(panels) + MARGIN
    body = []
    for i, (name, vals) in enumerate(panels):
        body += _panel([np.asarray(vals, dtype=float)], [name], MARGIN / 2 + i * PANEL_HEIGHT, name)
    return "\n".join(_header(height) + body + ["</svg>"]) + "\n"


def imf_svg(imfs: ImfSet) -> str:
    panels = [(f"imf_{i + 1}", d) for i, d in enumerate(imfs.imfs)] + [("residual", imfs.residual)]
    return panels_svg(panels)


def scatter_svg(t, y, size, title: str = "", max_radius: float = 4.0) -> str:
    """Scatter with point radius proportional to ``size`` (no colour encoding)."""
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    size = np.abs(np.asarray(size, dtype=float).ravel())
    if t.size == 0:
        raise PlotError("nothing to plot: empty scatter")
    if not (t.shape == y.shape == size.shape):
        raise PlotError("scatter coordinates and sizes must have equal length")
    keep = np.isfinite(t) & np.isfinite(y) & np.isfinite(size)
    t, y, size = t[keep], y[keep], size[keep]
    height = PANEL_HEIGHT * 2 + MARGIN
    x0, x1, y0, y1 = MARGIN, WIDTH - MARGIN, height - MARGIN, MARGIN
    xs = _scale(t, float(t.min()), float(t.max()), x0, x1) if t.size else t
    ys = _scale(y, float(y.min()), float(y.max()), y0, y1) if y.size else y
    smax = float(size.max()) if size.size else 0.0
    rs = size / smax * max_radius if smax > 0 else np.full(size.shape, max_radius / 2)
    out = _header(height) + [
        f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" height="{y0 - y1}" fill="none" stroke="#999999"/>',
        f'<text x="{x0}" y="{y1 - 8}" font-size="12">{_escape(title)}</text>']
    for a, b, r in zip(xs, ys, rs):
        out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{_fmt(max(r, 0.2))}" '
                   f'fill="black" fill-opacity="0.4"/>')
    return "\n".join(out + ["</svg>"]) + "\n"


def write_svg(svg: str, path) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    except OSError as exc:
        raise PlotError(f"cannot write {path}: {exc}") from None
