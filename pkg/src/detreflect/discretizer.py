"""Simple symmetric functions built from a symmetric mass matrix.

Each angle cell n of the cosine grid is cut into sub-intervals whose sine
masses are the row entries ``a(n, j) / width``.  Sub-interval j of cell n is
paired with sub-interval n of cell j; symmetry of ``a`` makes paired masses
equal.  Angles are carried alongside their sine-mass coordinate
``y = 1 + cos(angle)`` so mass bookkeeping never goes through ``arccos``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .kernels import (ROW_SUM_TOL, CosineGrid, KernelError, ReflectionKernel,
                      angle_from_mass, check_symmetry, cosine_grid, kernel_mass_matrix)

PAIR_MASS_TOL = 1e-10


class SSFError(ValueError):
    pass


@dataclass(frozen=True)
class BetaPartition:
    grid: CosineGrid
    masses: np.ndarray  # (N, N+1) sine-mass coordinates of the breakpoints
    breaks: np.ndarray  # (N, N+1) breakpoint angles


def beta_partition(a: np.ndarray, grid: CosineGrid, strip_width: float) -> BetaPartition:
    a = np.asarray(a, dtype=float)
    n = grid.n_cells
    if a.shape != (n, n):
        raise KernelError(f"mass matrix shape {a.shape} does not match grid with {n} cells")
    if np.any(a < 0):
        raise KernelError("negative mass entry")
    expected = strip_width * grid.cell_mass
    if np.max(np.abs(a.sum(axis=1) - expected)) > ROW_SUM_TOL * max(1.0, expected):
        raise KernelError("row sums inconsistent with grid cell masses")
    ys = np.empty((n, n + 1))
    base = np.arange(n, dtype=float) * grid.cell_mass
    ys[:, 0] = base
    ys[:, 1:] = base[:, None] + np.cumsum(a, axis=1) / strip_width
    # telescoping row sum, exact by construction; rounding slack goes to the last positive entry
    for c in range(n):
        pos = np.flatnonzero(a[c] > 0)
        last = pos[-1] + 1 if len(pos) else 0
        ys[c, last:] = base[c] + grid.cell_mass
    ys = np.maximum.accumulate(ys, axis=1)
    return BetaPartition(grid, ys, angle_from_mass(ys))


@dataclass(frozen=True)
class Rect:
    """Phase-space rectangle ``(x1, x2] x (a1, a2]`` with its pairing data."""

    x1: float
    x2: float
    y1: float  # sine-mass coordinate of a1
    y2: float
    partner: int
    target: float
    cell: int = -1
    sub: int = -1

    @property
    def a1(self) -> float:
        return float(angle_from_mass(self.y1))

    @property
    def a2(self) -> float:
        return float(angle_from_mass(self.y2))

    @property
    def mass(self) -> float:
        return self.y2 - self.y1

    @property
    def midpoint(self) -> float:
        """Angle splitting the sine mass of the rectangle in half."""
        return float(angle_from_mass(0.5 * (self.y1 + self.y2)))


@dataclass(frozen=True)
class SimpleSymmetricFunction:
    rects: Tuple[Rect, ...]

    @property
    def mesh(self) -> float:
        return max(max(r.x2 - r.x1, r.a2 - r.a1) for r in self.rects)

    @property
    def strips(self) -> List[Tuple[float, float]]:
        return sorted({(r.x1, r.x2) for r in self.rects})

    def column(self, strip: Tuple[float, float]) -> List[int]:
        return [i for i, r in enumerate(self.rects) if (r.x1, r.x2) == tuple(strip)]

    def pairs(self, strip: Optional[Tuple[float, float]] = None) -> List[Tuple[int, int]]:
        """Index pairs ``(k, j)`` with ``k <= j``; self-pairs appear as ``(k, k)``."""
        idx = range(len(self.rects)) if strip is None else self.column(strip)
        return [(k, self.rects[k].partner) for k in idx if k <= self.rects[k].partner]

    def validate(self) -> None:
        rects = self.rects
        for k, r in enumerate(rects):
            if not (r.x1 < r.x2 and r.y1 < r.y2):
                raise SSFError(f"rectangle {k} is empty")
            p = rects[r.partner]
            if p.partner != k:
                raise SSFError(f"pairing is not an involution at {k}")
            if (p.x1, p.x2) != (r.x1, r.x2):
                raise SSFError(f"rectangle {k} and its partner have different x-intervals")
            if abs(p.mass - r.mass) > PAIR_MASS_TOL:
                raise SSFError(f"rectangle {k}: paired sine masses differ by {abs(p.mass - r.mass):.3g}")
            if not (p.a1 < r.target <= p.a2):
                raise SSFError(f"rectangle {k}: target outside the partner")
        for strip in self.strips:
            col = sorted((rects[i] for i in self.column(strip)), key=lambda r: r.y1)
            if abs(col[0].y1) > 0 or abs(col[-1].y2 - 2.0) > 1e-12:
                raise SSFError(f"strip {strip} does not cover (-pi, 0)")
            for lo, hi in zip(col, col[1:]):
                if abs(lo.y2 - hi.y1) > 1e-12:
                    raise SSFError(f"strip {strip} has a gap or overlap near angle {lo.a2}")
        xs = sorted({(r.x1, r.x2) for r in rects})
        for (a1, b1), (a2, b2) in zip(xs, xs[1:]):
            if a2 < b1:
                raise SSFError("x-intervals overlap without being equal")

    # evaluation --------------------------------------------------------
    def _index(self):
        cache = getattr(self, "_idx_cache", None)
        if cache is None:
            cache = {}
            for strip in self.strips:
                col = sorted(self.column(strip), key=lambda i: self.rects[i].y1)
                upper = np.array([self.rects[i].a2 for i in col])
                cache[strip] = (np.array(col), upper)
            object.__setattr__(self, "_idx_cache", cache)
        return cache

    def locate(self, x: float, alpha: float) -> int:
        for (x1, x2), (col, upper) in self._index().items():
            if x1 < x <= x2:
                j = int(np.searchsorted(upper, alpha, side="left"))
                if j >= len(col) or alpha <= -np.pi:
                    break
                return int(col[j])
        raise SSFError(f"phase point ({x}, {alpha}) is not covered")

    def __call__(self, x: float, alpha: float) -> Tuple[float, float]:
        return x, self.rects[self.locate(x, alpha)].target

    def dump(self) -> str:
        lines = ["# index x1 x2 alpha1 alpha2 partner target"]
        for k, r in enumerate(self.rects):
            vals = (r.x1, r.x2, r.a1, r.a2)
            lines.append(f"{k} " + " ".join(format(v, ".17g") for v in vals)
                         + f" {r.partner} {format(r.target, '.17g')}")
        return "\n".join(lines) + "\n"


def eval_ssf(ssf: SimpleSymmetricFunction, p) -> Tuple[float, float]:
    """Image ``(x, target)`` of phase point ``p = (x, alpha)``."""
    return ssf(p[0], p[1])


def _mid(y1, y2) -> float:
    return float(angle_from_mass(0.5 * (y1 + y2)))


def build_ssf(kernel: ReflectionKernel, m: int, strips: Optional[Sequence[Tuple[float, float]]] = None
              ) -> SimpleSymmetricFunction:
    report = check_symmetry(kernel, m)
    if not report.passed:
        raise KernelError(f"kernel fails symmetry check ({report.max_asymmetry:.3g})")
    grid = cosine_grid(m)
    n = grid.n_cells
    strips = list(strips) if strips is not None else kernel.strip_intervals
    rects: List[Rect] = []
    for strip in strips:
        width = strip[1] - strip[0]
        a = kernel_mass_matrix(kernel, m, strip)
        bp = beta_partition(a, grid, width)
        ys = bp.masses
        index = {}
        for c in range(n):
            for j in range(n):
                if a[c, j] > 0 and ys[c, j + 1] > ys[c, j]:
                    index[(c, j)] = len(rects) + len(index)
        for (c, j), k in sorted(index.items(), key=lambda t: t[1]):
            if (j, c) not in index:
                raise SSFError(f"sub-interval ({c},{j}) has no partner of positive mass")
            rects.append(Rect(strip[0], strip[1], float(ys[c, j]), float(ys[c, j + 1]),
                              partner=index[(j, c)], target=_mid(ys[j, c], ys[j, c + 1]),
                              cell=c, sub=j))
    return SimpleSymmetricFunction(tuple(rects))


def coarsen_near_diagonal(ssf: SimpleSymmetricFunction, eps0: float) -> SimpleSymmetricFunction:
    """Turn pairs whose joint angular span is at most ``eps0/2`` into self-pairs."""
    if eps0 <= 0:
        raise SSFError("eps0 must be positive")
    rects = list(ssf.rects)
    for k, r in enumerate(ssf.rects):
        j = r.partner
        if j <= k:
            continue
        p = ssf.rects[j]
        if max(r.a2 - p.a1, p.a2 - r.a1) <= eps0 / 2:
            rects[k] = replace(r, partner=k, target=r.midpoint)
            rects[j] = replace(p, partner=j, target=p.midpoint)
    return SimpleSymmetricFunction(tuple(rects))


def split_self_pairs(ssf: SimpleSymmetricFunction, max_width: float = np.inf) -> SimpleSymmetricFunction:
    """Split each self-paired rectangle into two equal-mass halves swapped with each other.

    Lets a retro-reflecting cell be realized by an elliptic pair (two bounces)
    instead of a single circle arc.  Rectangles wider than ``max_width`` in
    angle are left alone.
    """
    old = ssf.rects

    def splits(k):
        return old[k].partner == k and old[k].a2 - old[k].a1 <= max_width

    remap, pos = {}, 0
    for k in range(len(old)):
        remap[k] = pos
        pos += 2 if splits(k) else 1
    new: List[Rect] = []
    for k, r in enumerate(old):
        if splits(k):
            ym = 0.5 * (r.y1 + r.y2)
            lo = remap[k]
            new.append(replace(r, y2=ym, partner=lo + 1, target=_mid(ym, r.y2)))
            new.append(replace(r, y1=ym, partner=lo, target=_mid(r.y1, ym)))
        else:
            new.append(replace(r, partner=remap[r.partner]))
    return SimpleSymmetricFunction(tuple(new))
