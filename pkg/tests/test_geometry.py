import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detreflect.geometry import (EllipseArc, GeometryError, HitStatus, Point, Ray, SegmentMirror,
                                 normalize_angle, ray_conic_intersect, ray_segment_intersect,
                                 reflect_specular, tangent_at)

O = Point(0.0, 0.0)


def circle(r=1.0, clip=(-3 * math.pi / 4, -math.pi / 4), center=O):
    return EllipseArc(center, center, Point(center[0] + r, center[1]), center, clip)


def random_arc(rng):
    f1 = Point(*rng.uniform(-2, 2, 2))
    f2 = Point(*rng.uniform(-2, 2, 2))
    c = 0.5 * math.dist(f1, f2)
    a = c + rng.uniform(0.05, 2.0)
    th = rng.uniform(0, 2 * math.pi)
    # walk from the center along th until the focal sum equals 2a
    cx, cy = (f1[0] + f2[0]) / 2, (f1[1] + f2[1]) / 2
    lo, hi = 0.0, 10.0 * a
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = (cx + mid * math.cos(th), cy + mid * math.sin(th))
        if math.dist(p, f1) + math.dist(p, f2) < 2 * a:
            lo = mid
        else:
            hi = mid
    through = Point(cx + lo * math.cos(th), cy + lo * math.sin(th))
    t0 = rng.uniform(-math.pi, math.pi)
    return EllipseArc(f1, f2, through, Point(cx, cy), (t0, t0 + rng.uniform(0.1, 3.0)))


# ------------------------------------------------------------ ray_conic_intersect

def test_circle_hit_straight_down():
    hits = ray_conic_intersect(Ray(O, -math.pi / 2), circle(), 0.0)
    assert len(hits) == 1
    t, p = hits[0]
    assert t == pytest.approx(1.0, abs=1e-15)
    assert p[0] == pytest.approx(0.0, abs=1e-15) and p[1] == pytest.approx(-1.0, abs=1e-15)


def test_clip_excludes_hit():
    assert ray_conic_intersect(Ray(O, -math.pi / 2), circle(clip=(-math.pi / 4, -math.pi / 8)), 0.0) == []


def test_tilted_ellipse_matches_polyline_oracle():
    # frozen from a 10**6-chord polyline of the parametric ellipse
    arc = EllipseArc(O, Point(1.0, -1.0), Point(2.0, 0.0), Point(0.5, -0.5), (-math.pi + 0.01, -0.01))
    hits = ray_conic_intersect(Ray(Point(-2.0, -1.0), 0.0), arc, 0.0)
    xs = [p[0] for _, p in hits]
    assert xs == pytest.approx([-1.0, 2.0938363213509343], abs=1e-8)
    assert [t for t, _ in hits] == sorted(t for t, _ in hits)


def test_t_min_must_be_nonnegative():
    with pytest.raises(GeometryError):
        ray_conic_intersect(Ray(O, -1.0), circle(), -1.0)


def test_degenerate_ellipse_rejected():
    with pytest.raises(GeometryError):
        EllipseArc(O, Point(2.0, 0.0), Point(1.0, 0.0), Point(1.0, 0.0), (-1.0, 0.0))


def test_apex_outside_rejected():
    with pytest.raises(GeometryError):
        EllipseArc(O, O, Point(1.0, 0.0), Point(5.0, 0.0), (-1.0, 0.0))


def _polyline_hits(arc, ray, n=20000):
    cx, cy, ux, uy, a, b = arc._shape
    s = np.linspace(0, 2 * np.pi, n + 1)
    px = cx + a * np.cos(s) * ux - b * np.sin(s) * uy
    py = cy + a * np.cos(s) * uy + b * np.sin(s) * ux
    dx, dy = ray.direction
    ox, oy = ray.origin
    side = (px - ox) * dy - (py - oy) * dx
    cnt = 0
    for i in np.flatnonzero(np.sign(side[:-1]) != np.sign(side[1:])):
        w = side[i] / (side[i] - side[i + 1])
        q = (px[i] + w * (px[i + 1] - px[i]), py[i] + w * (py[i + 1] - py[i]))
        if (q[0] - ox) * dx + (q[1] - oy) * dy > 0 and arc.in_wedge(q):
            cnt += 1
    return cnt


def test_hit_count_parity_matches_polyline_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 1000:
        arc = random_arc(rng)
        ang = rng.uniform(0, 2 * math.pi)
        origin = Point(arc.center[0] + 6 * arc.semi_axes[0] * math.cos(ang),
                       arc.center[1] + 6 * arc.semi_axes[0] * math.sin(ang))
        aim = arc.point_at_angle(rng.uniform(*arc.clip))
        jitter = rng.normal(0, 0.2)
        ray = Ray(origin, math.atan2(aim[1] - origin[1], aim[0] - origin[0]) + jitter)
        hits = ray_conic_intersect(ray, arc, 0.0)
        assert len(hits) in (0, 1, 2)
        if any(abs(arc.implicit(p)) < 1e-3 and not arc.in_wedge(p, 1e-3) == arc.in_wedge(p, -1e-3) for _, p in hits):
            continue  # too close to a clip line for a fair comparison
        assert len(hits) % 2 == _polyline_hits(arc, ray, 4000) % 2
        checked += 1


def test_intersection_soundness_random():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        arc = random_arc(rng)
        o = Point(*rng.uniform(-4, 4, 2))
        for t, p in ray_conic_intersect(Ray(o, rng.uniform(-math.pi, math.pi)), arc, 0.0):
            assert abs(arc.implicit(p)) <= 1e-9
            assert arc.in_wedge(p, 1e-12)
            assert t > 0


# ------------------------------------------------------------ segments

def test_segment_hit():
    hit = ray_segment_intersect(Ray(O, -math.pi / 2), SegmentMirror(Point(-1, -1), Point(1, -1)))
    assert hit.status is HitStatus.HIT
    assert hit.point[0] == pytest.approx(0.0, abs=1e-15) and hit.point[1] == pytest.approx(-1.0)


def test_segment_miss():
    assert ray_segment_intersect(Ray(O, -math.pi / 2), SegmentMirror(Point(1, -1), Point(2, -1))) is None


def test_floor_segment_closed_form():
    hit = ray_segment_intersect(Ray(Point(0.3, 0.0), -2.0), SegmentMirror(Point(-5, -0.25), Point(5, -0.25)))
    # substitution check: the point lies on the floor and on the ray
    assert hit.point[1] == pytest.approx(-0.25, abs=1e-15)
    assert hit.point[0] == pytest.approx(0.18558561140992855, abs=1e-14)
    assert hit.t == pytest.approx(0.2749375425736541, abs=1e-14)


def test_collinear_segment_is_degenerate():
    hit = ray_segment_intersect(Ray(Point(-2, -1), 0.0), SegmentMirror(Point(-1, -1), Point(1, -1)))
    assert hit.status is HitStatus.DEGENERATE


def test_segment_endpoints_must_differ():
    with pytest.raises(GeometryError):
        SegmentMirror(Point(0, 0), Point(0, 0))


# ------------------------------------------------------------ reflection

def test_reflect_vertical_off_floor():
    assert reflect_specular(-math.pi / 2, 0.0) == pytest.approx(math.pi / 2)


def test_reflect_oblique_off_floor():
    assert reflect_specular(-math.pi / 3, 0.0) == pytest.approx(math.pi / 3)


def test_reflect_off_diagonal():
    # straight down off the line y = x leaves heading in -x
    out = reflect_specular(-math.pi / 2, math.pi / 4)
    assert math.cos(out) == pytest.approx(-1.0, abs=1e-15)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_reflection_is_an_involution(d, t):
    back = reflect_specular(reflect_specular(d, t), t)
    assert abs(normalize_angle(back - d)) <= 1e-12


@given(st.floats(-100, 100))
def test_normalize_range(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert abs(math.sin(n) - math.sin(a)) < 1e-9


# ------------------------------------------------------------ tangents

def test_circle_tangent_at_bottom():
    assert abs(math.sin(tangent_at(circle(), Point(0.0, -1.0)))) < 1e-15


def test_minor_axis_tangent_horizontal():
    c = 1.5
    arc = EllipseArc(Point(-c, 0), Point(c, 0), Point(0.0, -2.0), O, (-2.5, -0.5))
    assert abs(math.sin(tangent_at(arc, Point(0.0, -2.0)))) < 1e-15


def test_tangent_off_arc_raises():
    with pytest.raises(GeometryError):
        tangent_at(circle(), Point(0.0, -1.1))


def test_focal_property_random():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        arc = random_arc(rng)
        p = arc.point_at_angle(rng.uniform(*arc.clip))
        f1, f2 = arc.focus1, arc.focus2
        out = reflect_specular(math.atan2(p[1] - f1[1], p[0] - f1[0]), tangent_at(arc, p))
        # distance from focus2 to the reflected line
        dx, dy = math.cos(out), math.sin(out)
        dist = abs((f2[0] - p[0]) * dy - (f2[1] - p[1]) * dx)
        assert dist <= 1e-9 * arc.diameter


def test_bbox_contains_samples():
    rng = np.random.default_rng(5)
    for _ in range(200):
        arc = random_arc(rng)
        x0, y0, x1, y1 = arc.bbox()
        pts = arc.sample(200)
        assert np.all(pts[:, 0] >= x0 - 1e-12) and np.all(pts[:, 0] <= x1 + 1e-12)
        assert np.all(pts[:, 1] >= y0 - 1e-12) and np.all(pts[:, 1] <= y1 + 1e-12)


def test_transformed_scales_geometry():
    arc = random_arc(np.random.default_rng(1))
    t = arc.transformed(0.5, 3.0)
    assert t.semi_axes[0] == pytest.approx(0.5 * arc.semi_axes[0])
    p = arc.point_at_angle(sum(arc.clip) / 2)
    q = t.point_at_angle(sum(arc.clip) / 2)
    assert q[0] == pytest.approx(0.5 * p[0] + 3.0) and q[1] == pytest.approx(0.5 * p[1])
