"""Planar primitives for mirror scenes: rays, segments and clipped ellipse arcs.

Ellipses are stored in focal form (two foci and a point the curve passes
through); axes and orientation are derived on demand.  An arc is the part of
the ellipse seen from an apex point inside the ellipse between two clip
directions.  Circles are the degenerate case ``focus1 == focus2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


class GeometryError(ValueError):
    """Raised when a primitive cannot be constructed or a query is ill-posed."""


class Point(NamedTuple):
    x1: float
    x2: float


class Ray(NamedTuple):
    origin: Point
    angle: float

    @property
    def direction(self) -> Tuple[float, float]:
        return math.cos(self.angle), math.sin(self.angle)

    def at(self, t: float) -> Point:
        dx, dy = self.direction
        return Point(self.origin.x1 + t * dx, self.origin.x2 + t * dy)


class HitStatus(Enum):
    HIT = "hit"
    DEGENERATE = "degenerate"


class Hit(NamedTuple):
    t: float
    point: Optional[Point]
    status: HitStatus = HitStatus.HIT


def normalize_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    t = math.remainder(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    return t


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


@dataclass(frozen=True)
class SegmentMirror:
    p0: Point
    p1: Point

    def __post_init__(self):
        if self.p0 == self.p1:
            raise GeometryError("segment endpoints coincide")
        for p in (self.p0, self.p1):
            if not (math.isfinite(p[0]) and math.isfinite(p[1])):
                raise GeometryError("non-finite segment endpoint")

    @property
    def length(self) -> float:
        return math.hypot(self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])

    @property
    def tangent(self) -> float:
        return math.atan2(self.p1[1] - self.p0[1], self.p1[0] - self.p0[0])

    def bbox(self) -> Tuple[float, float, float, float]:
        return (min(self.p0[0], self.p1[0]), min(self.p0[1], self.p1[1]),
                max(self.p0[0], self.p1[0]), max(self.p0[1], self.p1[1]))


@dataclass(frozen=True)
class EllipseArc:
    """Clipped arc of the ellipse with foci ``focus1``, ``focus2`` through ``through``.

    The arc consists of the ellipse points whose direction from ``apex`` lies
    between the clip angles ``clip = (theta1, theta2)``, ``theta1 < theta2``,
    ``theta2 - theta1 < pi``.  The apex must lie strictly inside the ellipse so
    that every clip direction meets the curve exactly once.
    """

    focus1: Point
    focus2: Point
    through: Point
    apex: Point
    clip: Tuple[float, float]

    def __post_init__(self):
        vals = (*self.focus1, *self.focus2, *self.through, *self.apex, *self.clip)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("non-finite arc parameter")
        th1, th2 = self.clip
        if not (th1 < th2 and th2 - th1 < math.pi):
            raise GeometryError(f"invalid clip wedge {self.clip}")
        fx = self.focus2[0] - self.focus1[0]
        fy = self.focus2[1] - self.focus1[1]
        d1 = math.hypot(self.through[0] - self.focus1[0], self.through[1] - self.focus1[1])
        d2 = math.hypot(self.through[0] - self.focus2[0], self.through[1] - self.focus2[1])
        if not d1 + d2 > math.hypot(fx, fy):
            raise GeometryError("degenerate ellipse: through-point on the focal segment")
        if self.implicit(self.apex) >= 0.0:
            raise GeometryError("clip apex must lie strictly inside the ellipse")

    # derived shape -----------------------------------------------------
    @cached_property
    def _shape(self):
        f1, f2, p = self.focus1, self.focus2, self.through
        fx, fy = f2[0] - f1[0], f2[1] - f1[1]
        flen = math.hypot(fx, fy)
        a = 0.5 * (math.hypot(p[0] - f1[0], p[1] - f1[1]) + math.hypot(p[0] - f2[0], p[1] - f2[1]))
        c = 0.5 * flen
        if flen > 0.0:
            ux, uy = fx / flen, fy / flen
        else:
            ux, uy = 1.0, 0.0
        b = math.sqrt((a - c) * (a + c))
        cx, cy = 0.5 * (f1[0] + f2[0]), 0.5 * (f1[1] + f2[1])
        return cx, cy, ux, uy, a, b

    @property
    def center(self) -> Point:
        s = self._shape
        return Point(s[0], s[1])

    @property
    def semi_axes(self) -> Tuple[float, float]:
        s = self._shape
        return s[4], s[5]

    @property
    def axis(self) -> Tuple[float, float]:
        s = self._shape
        return s[2], s[3]

    @property
    def is_circle(self) -> bool:
        return self.focus1 == self.focus2

    @property
    def diameter(self) -> float:
        return 2.0 * self._shape[4]

    def local(self, p) -> Tuple[float, float]:
        cx, cy, ux, uy, a, b = self._shape
        dx, dy = p[0] - cx, p[1] - cy
        return dx * ux + dy * uy, -dx * uy + dy * ux

    def implicit(self, p) -> float:
        """Normalized conic residual: 0 on the ellipse, negative inside."""
        _, _, _, _, a, b = self._shape
        xl, yl = self.local(p)
        return (xl / a) ** 2 + (yl / b) ** 2 - 1.0

    def in_wedge(self, p, tol: float = 0.0) -> bool:
        th1, th2 = self.clip
        vx, vy = p[0] - self.apex[0], p[1] - self.apex[1]
        scale = tol * max(1.0, math.hypot(vx, vy))
        return (_cross(math.cos(th1), math.sin(th1), vx, vy) >= -scale
                and _cross(vx, vy, math.cos(th2), math.sin(th2)) >= -scale)

    def normal_at(self, p) -> Tuple[float, float]:
        """Outward unit normal of the full ellipse at ``p``."""
        _, _, ux, uy, a, b = self._shape
        xl, yl = self.local(p)
        gx, gy = xl / (a * a), yl / (b * b)
        nx, ny = gx * ux - gy * uy, gx * uy + gy * ux
        n = math.hypot(nx, ny)
        return nx / n, ny / n

    def point_at_angle(self, theta: float) -> Point:
        """Point of the full ellipse in direction ``theta`` from the apex."""
        hits = _ellipse_roots(self, self.apex, (math.cos(theta), math.sin(theta)))
        t = max(hits)
        return Point(self.apex[0] + t * math.cos(theta), self.apex[1] + t * math.sin(theta))

    @cached_property
    def endpoints(self) -> Tuple[Point, Point]:
        return self.point_at_angle(self.clip[0]), self.point_at_angle(self.clip[1])

    def sample(self, n: int) -> np.ndarray:
        """``n`` points along the arc, ordered by clip angle."""
        th = np.linspace(self.clip[0], self.clip[1], n)
        return np.array([self.point_at_angle(float(t)) for t in th])

    def bbox(self) -> Tuple[float, float, float, float]:
        """Exact axis-aligned bounding box of the clipped arc."""
        cx, cy, ux, uy, a, b = self._shape
        pts = list(self.endpoints)
        # parametric extremes: x = cx + a cos s ux - b sin s uy, y = cy + a cos s uy + b sin s ux
        for s0 in (math.atan2(-b * uy, a * ux), math.atan2(b * ux, a * uy)):
            for s in (s0, s0 + math.pi):
                q = (cx + a * math.cos(s) * ux - b * math.sin(s) * uy,
                     cy + a * math.cos(s) * uy + b * math.sin(s) * ux)
                if self.in_wedge(q):
                    pts.append(Point(*q))
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        return min(xs), min(ys), max(xs), max(ys)

    def transformed(self, scale: float, shift: float = 0.0) -> "EllipseArc":
        """Image under ``p -> scale * p + (shift, 0)``; clip angles are unchanged."""
        def f(p):
            return Point(scale * p[0] + shift, scale * p[1])
        return EllipseArc(f(self.focus1), f(self.focus2), f(self.through), f(self.apex), self.clip)


def _ellipse_roots(arc: EllipseArc, origin, direction) -> List[float]:
    """Parameters t where ``origin + t*direction`` meets the full ellipse."""
    cx, cy, ux, uy, a, b = arc._shape
    ox, oy = origin[0] - cx, origin[1] - cy
    dx, dy = direction
    # scaled local frame: unit circle
    lox, loy = (ox * ux + oy * uy) / a, (-ox * uy + oy * ux) / b
    ldx, ldy = (dx * ux + dy * uy) / a, (-dx * uy + dy * ux) / b
    A = ldx * ldx + ldy * ldy
    B = lox * ldx + loy * ldy
    C = lox * lox + loy * loy - 1.0
    disc = B * B - A * C
    if disc < 0.0:
        return []
    if disc == 0.0:
        return [-B / A]
    q = -(B + math.copysign(math.sqrt(disc), B))
    roots = [q / A]
    if q != 0.0:
        roots.append(C / q)
    return roots


def ray_conic_intersect(ray: Ray, arc: EllipseArc, t_min: float = 0.0) -> List[Tuple[float, Point]]:
    """All intersections of ``ray`` with the clipped arc at parameters ``t > t_min``."""
    if t_min < 0.0:
        raise GeometryError("t_min must be nonnegative")
    d = ray.direction
    out = []
    for t in sorted(_ellipse_roots(arc, ray.origin, d)):
        if t > t_min:
            p = ray.at(t)
            if arc.in_wedge(p):
                out.append((t, p))
    return out


def ray_segment_intersect(ray: Ray, seg: SegmentMirror, t_min: float = 0.0) -> Optional[Hit]:
    """Intersection with the open segment, or None.

    A ray collinear with the segment returns a ``DEGENERATE`` hit.
    """
    if t_min < 0.0:
        raise GeometryError("t_min must be nonnegative")
    dx, dy = ray.direction
    ox, oy = ray.origin
    (x0, y0), (x1, y1) = seg.p0, seg.p1
    ex, ey = x1 - x0, y1 - y0
    den = _cross(dx, dy, ex, ey)
    wx, wy = x0 - ox, y0 - oy
    if den == 0.0:
        if _cross(wx, wy, dx, dy) == 0.0:
            return Hit(math.nan, None, HitStatus.DEGENERATE)
        return None
    t = _cross(wx, wy, ex, ey) / den
    s = _cross(wx, wy, dx, dy) / den
    if t > t_min and 0.0 < s < 1.0:
        return Hit(t, Point(x0 + s * ex, y0 + s * ey))
    return None


def reflect_specular(incoming: float, tangent: float) -> float:
    """Reflect direction angle ``incoming`` across a mirror with tangent angle ``tangent``."""
    return normalize_angle(2.0 * tangent - incoming)


def is_grazing(incoming: float, tangent: float, tol: float = 1e-12) -> bool:
    return abs(math.sin(incoming - tangent)) <= tol


def tangent_at(arc: EllipseArc, p, tol: float = 1e-9) -> float:
    """Tangent direction angle of ``arc`` at ``p``."""
    if abs(arc.implicit(p)) > tol or not arc.in_wedge(p, tol):
        raise GeometryError(f"point {tuple(p)} is not on the arc")
    nx, ny = arc.normal_at(p)
    return math.atan2(nx, -ny)
