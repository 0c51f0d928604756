"""Cantor-style packing of scaled reflector cells along a base interval.

Every cell is a scaled, shifted copy of one template: a convex body whose
top edge is the footprint on ``x2 = 0`` and which contains all mirrors of the
cell.  Each generation fills the uncovered gaps left to right with copies of
one scale; what stays uncovered is carried to the next generation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely import affinity
from shapely.geometry import MultiPoint, Polygon
from shapely.strtree import STRtree

from .geometry import EllipseArc

BODY_SAMPLES = 257
BODY_MARGIN = 0.005
MAX_HALVINGS = 40
DEFAULT_Q = 0.25
MAX_CELLS_PER_GEN = 5000


class PackingInfeasible(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CellTemplate:
    """Unscaled cell: footprint ``(-rho, rho)``, convex body, mirrors."""

    rho: float
    body: Polygon
    arcs: Tuple[EllipseArc, ...] = ()

    @property
    def depth(self) -> float:
        return -self.body.bounds[1]

    @property
    def half_width(self) -> float:
        minx, _, maxx, _ = self.body.bounds
        return max(-minx, maxx)

    @classmethod
    def from_assembly(cls, asm) -> "CellTemplate":
        return cls(asm.rho, asm.hull(BODY_SAMPLES), tuple(asm.arcs()))

    @classmethod
    def from_points(cls, rho: float, points, arcs=()) -> "CellTemplate":
        pts = np.vstack([np.asarray(points, dtype=float), [[-rho, 0.0], [rho, 0.0]]])
        return cls(rho, MultiPoint([tuple(p) for p in pts]).convex_hull, tuple(arcs))


@dataclass(frozen=True, eq=False)
class ScaledCell:
    r: float
    b: float
    footprint: Tuple[float, float]
    body: Polygon
    template: CellTemplate = field(repr=False)

    @property
    def factor(self) -> float:
        return self.r / self.template.depth

    @property
    def mirrors(self) -> List[EllipseArc]:
        f = self.factor
        return [a.transformed(f, self.b) for a in self.template.arcs]


def _as_template(t) -> CellTemplate:
    return t if isinstance(t, CellTemplate) else CellTemplate.from_assembly(t)


def transform_cell(template, r: float, b: float) -> ScaledCell:
    """Copy of the template scaled to depth ``r`` and centered at ``b``."""
    if not r > 0:
        raise ValueError("scale must be positive")
    t = _as_template(template)
    f = r / t.depth
    body = affinity.affine_transform(t.body, [f, 0.0, 0.0, f, b, 0.0])
    return ScaledCell(r, b, (b - f * t.rho, b + f * t.rho), body, t)


def _interiors_meet(a: Polygon, b: Polygon) -> bool:
    return a.relate_pattern(b, "T********")


def _abut(f, g) -> bool:
    tol = 1e-9 * min(f[1] - f[0], g[1] - g[0])
    return abs(f[1] - g[0]) <= tol or abs(g[1] - f[0]) <= tol


def _conflicts(body: Polygon, foot, others: Sequence[Tuple[Polygon, Tuple[float, float]]], margin: float) -> List[int]:
    """Indices of bodies that overlap ``body`` or come closer than ``margin``.

    Bodies whose footprints abut may touch at the shared footprint end.
    """
    out = []
    bx0, by0, bx1, by1 = body.bounds
    for i, (ob, of) in enumerate(others):
        ox0, oy0, ox1, oy1 = ob.bounds
        if max(ox0 - bx1, bx0 - ox1, oy0 - by1, by0 - oy1) >= margin:
            continue
        if _interiors_meet(ob, body):
            out.append(i)
        elif not _abut(of, foot) and shapely.dwithin(ob, body, margin):
            out.append(i)
    return out


class _BodyIndex:
    """Existing bodies with a rebuildable spatial index."""

    def __init__(self, cells: Sequence[ScaledCell] = ()):
        self.items: List[Tuple[Polygon, Tuple[float, float]]] = [(c.body, c.footprint) for c in cells]
        self._tree: Optional[STRtree] = None
        self._pending: List[int] = []

    def add(self, body, foot):
        shapely.prepare(body)
        self.items.append((body, foot))
        self._pending.append(len(self.items) - 1)
        if len(self._pending) > 16:
            self._tree, self._pending = None, []

    def near(self, box: Polygon) -> List[Tuple[Polygon, Tuple[float, float]]]:
        if self._tree is None:
            self._tree = STRtree([b for b, _ in self.items]) if self.items else None
            self._pending = []
            self._indexed = len(self.items)
        hits = list(self._tree.query(box)) if self._tree is not None else []
        hits += list(range(self._indexed, len(self.items)))
        return [self.items[i] for i in hits]


def _band_right(body: Polygon, depth: float) -> float:
    """Rightmost x of ``body`` within ``-depth <= x2 <= 0``; nan if it has none there."""
    x0, _, x1, _ = body.bounds
    part = shapely.clip_by_rect(body, x0 - 1.0, -depth, x1 + 1.0, 0.0)
    return part.bounds[2] if not part.is_empty else math.nan


def placement_search(gaps: Sequence[Tuple[float, float]], r: float, existing=(), template=None,
                     _index: Optional[_BodyIndex] = None) -> List[float]:
    """Greedy left-to-right translations of cells of depth ``r`` inside ``gaps``.

    ``existing`` is a list of ScaledCells.  A candidate that collides with an
    existing body jumps to the first position where its body clears the
    rightmost colliding body.
    """
    t = _as_template(template)
    f = r / t.depth
    half = f * t.rho
    width = f * t.half_width
    margin = BODY_MARGIN * 2.0 * width
    index = _index if _index is not None else _BodyIndex(existing)
    out: List[float] = []
    for lo, hi in sorted(gaps):
        b = lo + half
        while b + half <= hi + 1e-12 * (hi - lo):
            cell = transform_cell(t, r, b)
            x0, y0, x1, y1 = cell.body.bounds
            box = shapely.box(x0 - margin, y0 - margin, x1 + margin, y1 + margin)
            near = index.near(box)
            bad = _conflicts(cell.body, cell.footprint, near, margin)
            if not bad:
                out.append(b)
                index.add(cell.body, cell.footprint)
                b += 2.0 * half
                continue
            # only the part of a colliding body inside this cell's depth band can block it
            right = max(_band_right(near[i][0], r + margin) for i in bad)
            b = max(b + 2.0 * half, right + margin + width) if right == right else b + 2.0 * half
    return out


def _subtract(gaps, feet) -> List[Tuple[float, float]]:
    out = []
    feet = sorted(feet)
    k = 0
    for lo, hi in sorted(gaps):
        cur = lo
        while k < len(feet) and feet[k][1] <= lo:
            k += 1
        j = k
        while j < len(feet) and feet[j][0] < hi:
            a, b = feet[j]
            if a > cur:
                out.append((cur, a))
            cur = max(cur, b)
            j += 1
        if cur < hi:
            out.append((cur, hi))
    return out


@dataclass
class CantorPacking:
    base: Tuple[float, float]
    generations: List[List[ScaledCell]]
    leftover: List[List[Tuple[float, float]]]
    scales: List[float]
    fractions: List[float]
    q: float
    rho1: float

    @property
    def leftover_lengths(self) -> List[float]:
        return [sum(h - l for l, h in g) for g in self.leftover]

    @property
    def cells(self) -> List[ScaledCell]:
        return [c for g in self.generations for c in g]

    @property
    def leftover_fraction(self) -> float:
        return self.leftover_lengths[-1] / (self.base[1] - self.base[0])

    def max_depth(self) -> float:
        return max((c.r for c in self.cells), default=0.0)


def pack(template, base: Tuple[float, float], rho1: float, eps0: float, max_gen: int = 12,
         q: float = DEFAULT_Q, strict: bool = True, max_cells: int = MAX_CELLS_PER_GEN) -> CantorPacking:
    """Fill ``base`` with generations of scaled cells of depth below ``rho1``.

    Each generation tries the largest scale that fits, halving it until the
    generation covers at least ``q`` of the current leftover.  With
    ``strict=False`` a generation that never reaches ``q`` keeps the best scale
    found instead of raising and ends the packing, since later generations
    face the same body-to-footprint ratio.
    Scales whose copy count would exceed ``max_cells`` are skipped.
    """
    t = _as_template(template)
    if not (rho1 > 0 and eps0 > 0):
        raise ValueError("rho1 and eps0 must be positive")
    if t.rho <= 0:
        raise PackingInfeasible("template footprint is empty")
    lo, hi = base
    gaps = [(float(lo), float(hi))]
    length = hi - lo
    budget = eps0 / 4.0 * length
    gens: List[List[ScaledCell]] = []
    leftover = [list(gaps)]
    scales: List[float] = []
    fractions: List[float] = []
    index = _BodyIndex()
    r_top = rho1 * (1.0 - 1e-9)
    for _ in range(max_gen):
        if sum(h - l for l, h in gaps) <= budget:
            break
        current = sum(h - l for l, h in gaps)
        widest = max(h - l for l, h in gaps)
        r = min(r_top, widest * t.depth / (2.0 * t.rho))
        best = None
        stale = 0
        for _ in range(MAX_HALVINGS):
            f = r / t.depth
            est = current / max(2.0 * f * t.half_width, 2.0 * f * t.rho)
            if est <= max_cells:
                trial = _BodyIndex()
                trial.items = list(index.items)
                bs = placement_search(gaps, r, template=t, _index=trial)
                frac = len(bs) * 2.0 * f * t.rho / current
                if best is None or frac > best[0] * 1.01:
                    best = (frac, r, bs, trial)
                    stale = 0
                else:
                    stale += 1
                if frac >= q or (not strict and stale >= 3):
                    break
            r *= 0.5
        if best is None or (best[0] < q and strict):
            got = 0.0 if best is None else best[0]
            raise PackingInfeasible(f"generation {len(gens) + 1}: best covered fraction {got:.3g} < q = {q}")
        frac, r, bs, index = best
        if not bs:
            break
        short = frac < q
        cells = [transform_cell(t, r, b) for b in bs]
        gens.append(cells)
        scales.append(r)
        fractions.append(frac)
        gaps = _subtract(gaps, [c.footprint for c in cells])
        leftover.append(list(gaps))
        if short:
            break
    return CantorPacking((float(lo), float(hi)), gens, leftover, scales, fractions, q, rho1)


def bodies_disjoint(cells: Sequence[ScaledCell]) -> bool:
    """Exact pairwise check that no two cell bodies share interior points."""
    bodies = [c.body for c in cells]
    if len(bodies) < 2:
        return True
    tree = STRtree(bodies)
    for i, b in enumerate(bodies):
        for j in tree.query(b):
            if j > i and _interiors_meet(b, bodies[j]):
                return False
    return True
