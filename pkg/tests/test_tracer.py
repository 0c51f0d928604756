import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from detreflect.geometry import EllipseArc, Point, SegmentMirror
from detreflect.tracer import (Guard, LostRay, MirrorScene, PhasePoint, Status, available_backends,
                               billiard_map, trace, trace_batch)

BACKENDS = available_backends()


def floor_scene(d):
    return MirrorScene(guard=Guard(d))


def unfold(x, a, d):
    return x - 2 * d / math.tan(a), -math.pi - a


@pytest.mark.parametrize("backend", BACKENDS)
def test_flat_floor_matches_unfolding(backend):
    rng = np.random.default_rng(2)
    for _ in range(200):
        x, a, d = rng.uniform(-5, 5), rng.uniform(-math.pi + 0.05, -0.05), rng.uniform(0.01, 2)
        r = trace(floor_scene(d), (x, a), backend=backend)
        y, b = unfold(x, a, d)
        assert r.status is Status.RETURNED and r.bounces == 1
        assert abs(r.exit.x - y) <= 1e-10 * max(1.0, abs(y))
        assert abs(r.exit.alpha - b) <= 1e-10


def test_vertical_ray_comes_straight_back():
    r = trace(floor_scene(0.5), (0.25, -math.pi / 2), record_path=True)
    assert r.exit.x == pytest.approx(0.25, abs=1e-15)
    assert r.exit.alpha == pytest.approx(-math.pi / 2, abs=1e-15)
    assert r.path[1] == pytest.approx((0.25, -0.5))


def test_walls_fold_the_unfolding():
    # box [0, 1] x [-0.1, 0]: each wall hit mirrors the unfolded exit back into the box
    scene = MirrorScene(guard=Guard(0.1, (0.0, 1.0)))
    x, a = 0.9, -0.5
    r = trace(scene, (x, a))
    y = x - 0.2 / math.tan(a)  # 1.2659... beyond the right wall
    assert r.status is Status.RETURNED
    assert r.exit.x == pytest.approx(2.0 - y, abs=1e-12)
    assert r.exit.alpha == pytest.approx(-math.pi - (-math.pi - a), abs=1e-12)
    assert r.bounces == 2


def test_empty_scene_loses_ray():
    r = trace(MirrorScene(), (0.0, -1.0))
    assert r.status is Status.LOST and r.exit is None


def test_circle_centered_on_line_retroreflects_radial_rays():
    arc = EllipseArc(Point(0, 0), Point(0, 0), Point(1, 0), Point(0, 0), (-math.pi + 1e-3, -1e-3))
    scene = MirrorScene((arc,))
    # a ray through the center hits the circle along the normal and comes back through the center
    for a in (-0.7, -1.5, -2.6):
        r = trace(scene, (0.0, a))
        assert r.status is Status.RETURNED and r.bounces == 1
        assert r.exit.x == pytest.approx(0.0, abs=1e-12)
        assert r.exit.alpha == pytest.approx(a, abs=1e-12)


def test_focal_pair_routes_through_second_focus():
    # ellipse with foci on the line: a ray from focus1 returns through focus2
    arc = EllipseArc(Point(-0.3, 0), Point(0.3, 0), Point(0, -0.4), Point(0, 0), (-math.pi + 1e-3, -1e-3))
    scene = MirrorScene((arc,))
    rng = np.random.default_rng(0)
    for a in rng.uniform(-3.0, -0.15, 50):
        r = trace(scene, (-0.3, a))
        assert r.exit.x == pytest.approx(0.3, abs=1e-12)


def test_corner_hit_is_lost():
    scene = MirrorScene(guard=Guard(0.1, (0.0, 1.0)))
    # aim exactly at the floor/right-wall corner
    x = 0.5
    a = math.atan2(-0.1, 1.0 - x)
    assert trace(scene, (x, a)).status is Status.LOST


def test_wall_top_exit_is_lost():
    scene = MirrorScene(guard=Guard(0.1, (0.0, 1.0)))
    x, a = 0.8, math.atan2(-0.1, 0.1)  # returns exactly at x = 1
    assert trace(scene, (x, a)).status is Status.LOST


def test_grazing_hit_is_lost():
    arc = EllipseArc(Point(0, -1), Point(0, -1), Point(0.5, -1), Point(0, -1), (-1.0, 1.0))
    scene = MirrorScene((arc,), (), Guard(2.0))
    assert trace(scene, (0.6, -math.pi / 2)).status is Status.RETURNED
    # vertical ray tangent to the circle at its rightmost point
    r = trace(scene, (0.5, -math.pi / 2))
    assert r.status is Status.LOST


def test_collinear_segment_is_lost():
    seg = SegmentMirror(Point(0.0, 0.0), Point(1.0, -1.0))
    r = trace(MirrorScene((), (seg,)), (0.0, -math.pi / 4))
    assert r.status is Status.LOST


def test_bounce_budget():
    scene = MirrorScene(guard=Guard(0.1, (0.0, 1.0)))
    r = trace(scene, (0.9, -0.2), max_bounces=1)
    assert r.status is Status.MAX_BOUNCES
    with pytest.raises(LostRay):
        billiard_map(scene, (0.9, -0.2), max_bounces=1)


def test_phase_point_validation():
    with pytest.raises(ValueError):
        trace(floor_scene(1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        PhasePoint(0.0, -math.pi).validate()
    with pytest.raises(ValueError):
        trace_batch(floor_scene(1.0), [0.0], [-1.0], max_bounces=0)


@given(st.floats(-3, 3), st.floats(-math.pi + 1e-3, -1e-3), st.floats(0.01, 1))
def test_floor_is_an_involution(x, a, d):
    scene = floor_scene(d)
    y, b = billiard_map(scene, (x, a))
    x2, a2 = billiard_map(scene, (y, b))
    assert x2 == pytest.approx(x, abs=1e-9 * (1 + abs(y)))
    assert a2 == pytest.approx(a, abs=1e-12)


def random_arc_scene(seed, n=60):
    rng = np.random.default_rng(seed)
    arcs = []
    for _ in range(n):
        c = Point(rng.uniform(0, 4), rng.uniform(-0.8, -0.2))
        r = rng.uniform(0.02, 0.15)
        e = rng.uniform(0, 0.5) * r
        th = rng.uniform(0, math.pi)
        f1 = Point(c[0] - e * math.cos(th), c[1] - e * math.sin(th))
        f2 = Point(c[0] + e * math.cos(th), c[1] + e * math.sin(th))
        t0 = rng.uniform(-math.pi, math.pi)
        arcs.append(EllipseArc(f1, f2, Point(c[0] + r, c[1]), c, (t0, t0 + rng.uniform(0.3, 2.5))))
    return MirrorScene(tuple(arcs), (), Guard(1.0, (0.0, 4.0)))


def test_backends_agree_bit_for_bit():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    scene = random_arc_scene(1)
    rng = np.random.default_rng(9)
    xs, als = rng.uniform(0, 4, 3000), rng.uniform(-math.pi + 1e-3, -1e-3, 3000)
    a = trace_batch(scene, xs, als, 500, backend="compiled")
    b = trace_batch(scene, xs, als, 500, backend="python")
    for u, v in zip(a, b):
        assert np.array_equal(u, v, equal_nan=True)


def test_workers_do_not_change_results():
    scene = random_arc_scene(2)
    rng = np.random.default_rng(3)
    xs, als = rng.uniform(0, 4, 20000), rng.uniform(-math.pi + 1e-3, -1e-3, 20000)
    a = trace_batch(scene, xs, als, 500, workers=1)
    b = trace_batch(scene, xs, als, 500, workers=4)
    for u, v in zip(a, b):
        assert np.array_equal(u, v, equal_nan=True)


def test_batch_matches_single_traces():
    scene = random_arc_scene(4)
    rng = np.random.default_rng(5)
    xs, als = rng.uniform(0, 4, 100), rng.uniform(-math.pi + 1e-3, -1e-3, 100)
    res = trace_batch(scene, xs, als, 500)
    for i in range(100):
        r = trace(scene, (xs[i], als[i]), 500)
        assert int(res.status[i]) == int(r.status) and res.bounces[i] == r.bounces
        if r.status is Status.RETURNED:
            assert res.y[i] == r.exit.x and res.beta[i] == r.exit.alpha


def test_random_scene_time_reversible():
    scene = random_arc_scene(6, n=20)
    rng = np.random.default_rng(8)
    xs, als = rng.uniform(0, 4, 2000), rng.uniform(-math.pi + 0.05, -0.05, 2000)
    fwd = trace_batch(scene, xs, als, 200)
    ok = np.flatnonzero(fwd.status == Status.RETURNED)
    back = trace_batch(scene, fwd.y[ok], fwd.beta[ok], 200)
    good = (back.status == Status.RETURNED) & (back.bounces == fwd.bounces[ok]) & (fwd.bounces[ok] <= 6)
    sel = ok[good]
    assert len(sel) > 500
    assert np.max(np.abs(back.y[good] - xs[sel])) < 1e-8
    assert np.max(np.abs(back.beta[good] - als[sel])) < 1e-8


def test_path_recording_lists_hits():
    scene = MirrorScene(guard=Guard(0.1, (0.0, 1.0)))
    r = trace(scene, (0.9, -0.5), record_path=True)
    assert len(r.path) == r.bounces + 2
    assert len(r.hits) == r.bounces
    assert r.path[0] == (0.9, 0.0) and r.path[-1][1] == pytest.approx(0.0, abs=1e-15)


def test_backend_env_override():
    import os
    import subprocess
    import sys
    env = dict(os.environ, DETREFLECT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import detreflect.tracer as t; print(t.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"


def test_floor_example_sixty_degrees():
    d = 0.3
    r = trace(floor_scene(d), (0.0, -math.pi / 3))
    assert r.exit.x == pytest.approx(2 * d / math.sqrt(3), abs=1e-15)
    assert r.exit.alpha == pytest.approx(-2 * math.pi / 3, abs=1e-15)
    assert r.bounces == 1


def test_unit_circle_returns_every_angle_in_span():
    arc = EllipseArc(Point(0, 0), Point(0, 0), Point(1, 0), Point(0, 0), (-2.5, -0.5))
    for a in np.linspace(-2.45, -0.55, 9):
        r = trace(MirrorScene((arc,)), (0.0, a))
        assert r.bounces == 1 and r.exit.x == pytest.approx(0.0, abs=1e-15)
        assert r.exit.alpha == pytest.approx(a, abs=1e-14)
