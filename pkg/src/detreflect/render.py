"""SVG drawing of a scene with optional ray paths."""
from __future__ import annotations

from typing import Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .tracer import MirrorScene

ARC_POINTS = 48
WIDTH_PX = 1000


def _extent(scene: MirrorScene, paths) -> Tuple[float, float, float, float]:
    ext = scene.compiled.extent
    xs, ys = [], []
    if ext is not None:
        xs += [ext[0], ext[2]]
        ys += [ext[1], ext[3]]
    for p in paths or ():
        for x, y in p:
            xs.append(x)
            ys.append(y)
    if not xs:
        return -1.0, -1.0, 1.0, 0.0
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(max(ys), 0.0)
    pad = 0.05 * max(x1 - x0, y1 - y0, 1e-12)
    return x0 - pad, y0 - pad, x1 + pad, y1 + pad


def render_svg(scene: MirrorScene, paths: Optional[Sequence[Sequence[Tuple[float, float]]]] = None,
               title: str = "scene") -> str:
    x0, y0, x1, y1 = _extent(scene, paths)
    w, h = x1 - x0, y1 - y0
    height_px = max(50, int(round(WIDTH_PX * h / w)))
    sw = 1.5 * w / WIDTH_PX

    def pt(x, y):
        return f"{x:.9g},{-y:.9g}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH_PX}" height="{height_px}" '
           f'viewBox="{x0:.9g} {-y1:.9g} {w:.9g} {h:.9g}">',
           f"<title>{escape(title)}</title>",
           f'<line x1="{x0:.9g}" y1="0" x2="{x1:.9g}" y2="0" stroke="#999" stroke-width="{sw:.3g}" '
           'stroke-dasharray="4 2" vector-effect="non-scaling-stroke"/>',
           '<g fill="none" stroke="#1f4e9c" stroke-width="1.2" vector-effect="non-scaling-stroke">']
    for a in scene.arcs:
        pts = a.sample(ARC_POINTS)
        out.append('<polyline points="' + " ".join(pt(x, y) for x, y in pts) + '"/>')
    for s in scene.segments:
        out.append(f'<line x1="{s.p0[0]:.9g}" y1="{-s.p0[1]:.9g}" x2="{s.p1[0]:.9g}" y2="{-s.p1[1]:.9g}"/>')
    out.append("</g>")
    if scene.guard is not None:
        g = scene.guard
        out.append('<g stroke="#555" stroke-width="1.2" vector-effect="non-scaling-stroke">')
        lo, hi = g.floor_extent()
        lo, hi = max(lo, x0), min(hi, x1)
        out.append(f'<line x1="{lo:.9g}" y1="{g.floor_depth:.9g}" x2="{hi:.9g}" y2="{g.floor_depth:.9g}"/>')
        for wx in g.wall_xs:
            out.append(f'<line x1="{wx:.9g}" y1="0" x2="{wx:.9g}" y2="{g.floor_depth:.9g}"/>')
        out.append("</g>")
    if paths:
        out.append('<g fill="none" stroke="#c0392b" stroke-width="0.8" vector-effect="non-scaling-stroke">')
        for p in paths:
            out.append('<polyline points="' + " ".join(pt(x, y) for x, y in p) + '"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
