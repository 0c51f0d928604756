"""Billiard return map for mirror scenes below the line ``x2 = 0``.

A scene is compiled once into flat arrays plus a bounding-volume hierarchy;
the inner loop then runs in the compiled kernel (``_ctrace``) when it is
available and in ``_pytrace`` otherwise.  Set ``DETREFLECT_BACKEND=python`` to
force the fallback.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _pytrace
from .geometry import EllipseArc, Point, SegmentMirror

try:  # pragma: no cover - depends on build
    from . import _ctrace
except ImportError:  # pragma: no cover
    _ctrace = None

DEFAULT_MAX_BOUNCES = 10_000
T_EPS_REL = 1e-9
LEAF_SIZE = 4


def available_backends() -> List[str]:
    return (["compiled"] if _ctrace is not None else []) + ["python"]


def _default_backend() -> str:
    want = os.environ.get("DETREFLECT_BACKEND", "").strip().lower()
    if want in ("python", "py"):
        return "python"
    return "compiled" if _ctrace is not None else "python"


BACKEND = _default_backend()


def _module(backend: Optional[str]):
    name = backend or BACKEND
    if name == "compiled":
        if _ctrace is None:
            raise RuntimeError("compiled tracing kernel is not built")
        return _ctrace
    if name == "python":
        return _pytrace
    raise ValueError(f"unknown backend {name!r}")


class Status(IntEnum):
    RETURNED = _pytrace.RETURNED
    MAX_BOUNCES = _pytrace.MAX_BOUNCES
    LOST = _pytrace.LOST


class PhasePoint(NamedTuple):
    x: float
    alpha: float

    def validate(self) -> "PhasePoint":
        if not (math.isfinite(self.x) and -math.pi < self.alpha < 0.0):
            raise ValueError(f"phase point {tuple(self)} outside R x (-pi, 0)")
        return self


@dataclass(frozen=True)
class Guard:
    """Floor at ``x2 = -floor_depth`` and vertical walls from the floor up to ``x2 = 0``.

    With fewer than two walls the floor is an unbounded line.
    """

    floor_depth: float
    wall_xs: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.floor_depth > 0:
            raise ValueError("floor depth must be positive")
        object.__setattr__(self, "wall_xs", tuple(sorted(float(w) for w in self.wall_xs)))

    def segments(self) -> List[SegmentMirror]:
        d = self.floor_depth
        return [SegmentMirror(Point(w, 0.0), Point(w, -d)) for w in self.wall_xs]

    def floor_extent(self) -> Tuple[float, float]:
        if len(self.wall_xs) >= 2:
            return self.wall_xs[0], self.wall_xs[-1]
        return -math.inf, math.inf


@dataclass(frozen=True, eq=False)
class MirrorScene:
    arcs: Tuple[EllipseArc, ...] = ()
    segments: Tuple[SegmentMirror, ...] = ()
    guard: Optional[Guard] = None

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "segments", tuple(self.segments))

    def __eq__(self, other):
        if not isinstance(other, MirrorScene):
            return NotImplemented
        return (self.arcs, self.segments, self.guard) == (other.arcs, other.segments, other.guard)

    def __hash__(self):
        return hash((self.arcs, self.segments, self.guard))

    @property
    def compiled(self) -> "CompiledScene":
        c = self.__dict__.get("_compiled")
        if c is None:
            c = compile_scene(self)
            object.__setattr__(self, "_compiled", c)
        return c

    def bbox(self) -> Optional[Tuple[float, float, float, float]]:
        c = self.compiled
        return c.extent


class TraceResult(NamedTuple):
    status: Status
    exit: Optional[PhasePoint]
    bounces: int
    path: Optional[List[Point]] = None
    hits: Optional[List[int]] = None


@dataclass
class CompiledScene:
    arcs: np.ndarray
    segs: np.ndarray
    boxes: np.ndarray
    nodes: np.ndarray
    order: np.ndarray
    floor: np.ndarray
    wall_xs: np.ndarray
    extent: Optional[Tuple[float, float, float, float]]
    t_eps: float
    n_arcs: int = 0
    n_segments: int = 0
    extra: dict = field(default_factory=dict)


def _arc_row(arc: EllipseArc) -> List[float]:
    cx, cy, ux, uy, a, b = arc._shape
    t1, t2 = arc.clip
    return [cx, cy, ux, uy, a, b, arc.apex[0], arc.apex[1],
            math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2)]


def _build_bvh(boxes: np.ndarray):
    """Median-split BVH. Returns (node boxes, nodes[left, right, start, count], order)."""
    n = len(boxes)
    order = np.arange(n, dtype=np.int64)
    if n == 0:
        return np.zeros((0, 4)), np.zeros((0, 4), dtype=np.int64), order
    cent = np.column_stack([(boxes[:, 0] + boxes[:, 2]) * 0.5, (boxes[:, 1] + boxes[:, 3]) * 0.5])
    nbox: List[Tuple[float, float, float, float]] = []
    nodes: List[List[int]] = []
    stack = [(0, n, -1, 0)]
    while stack:
        lo, hi, parent, side = stack.pop()
        idx = order[lo:hi]
        b = boxes[idx]
        me = len(nodes)
        nbox.append((b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max()))
        nodes.append([-1, -1, lo, hi - lo])
        if parent >= 0:
            nodes[parent][side] = me
        if hi - lo <= LEAF_SIZE:
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        srt = idx[np.argsort(c[:, axis], kind="stable")]
        order[lo:hi] = srt
        mid = (lo + hi) // 2
        nodes[me][3] = 0
        stack.append((mid, hi, me, 1))
        stack.append((lo, mid, me, 0))
    return np.array(nbox, dtype=float), np.array(nodes, dtype=np.int64), order


def compile_scene(scene: MirrorScene, t_eps: Optional[float] = None) -> CompiledScene:
    arcs = list(scene.arcs)
    segs = list(scene.segments)
    guard = scene.guard
    if guard is not None:
        segs = segs + guard.segments()
    arc_arr = np.array([_arc_row(a) for a in arcs], dtype=float).reshape(-1, 12)
    seg_arr = np.array([[s.p0[0], s.p0[1], s.p1[0], s.p1[1]] for s in segs], dtype=float).reshape(-1, 4)
    boxes = [a.bbox() for a in arcs] + [s.bbox() for s in segs]
    box_arr = np.array(boxes, dtype=float).reshape(-1, 4)
    if guard is not None:
        fx0, fx1 = guard.floor_extent()
        floor = np.array([-guard.floor_depth, fx0, fx1])
    else:
        floor = np.array([math.nan, 0.0, 0.0])
    extent = None
    if len(box_arr):
        extent = (float(box_arr[:, 0].min()), float(box_arr[:, 1].min()),
                  float(box_arr[:, 2].max()), float(box_arr[:, 3].max()))
    if guard is not None:
        lo_y = -guard.floor_depth
        if extent is None:
            extent = (0.0, lo_y, 0.0, 0.0)
        else:
            extent = (extent[0], min(extent[1], lo_y), extent[2], max(extent[3], 0.0))
    if t_eps is None:
        diam = math.hypot(extent[2] - extent[0], extent[3] - extent[1]) if extent else 1.0
        t_eps = T_EPS_REL * (diam if diam > 0 else 1.0)
    # pad so rays that only touch a box edge still reach the exact primitive test
    pad = np.array([-t_eps, -t_eps, t_eps, t_eps])
    nbox, nodes, order = _build_bvh(box_arr + pad if len(box_arr) else box_arr)
    walls = np.array(guard.wall_xs if guard is not None else (), dtype=float)
    return CompiledScene(arc_arr, seg_arr, nbox, nodes, order, floor, walls, extent, float(t_eps),
                         len(arcs), len(segs))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("DETREFLECT_WORKERS", "1")))
    except ValueError:
        return 1


def _wall_top_exits(c: CompiledScene, status, ys):
    """Rays that leave exactly through a wall top count as lost."""
    if len(c.wall_xs) == 0:
        return
    ok = status == Status.RETURNED
    if not ok.any():
        return
    y = ys[ok]
    pos = np.clip(np.searchsorted(c.wall_xs, y), 1, len(c.wall_xs) - 1) if len(c.wall_xs) > 1 else np.zeros(len(y), int)
    near = np.minimum(np.abs(y - c.wall_xs[pos]), np.abs(y - c.wall_xs[np.maximum(pos - 1, 0)]))
    bad = np.flatnonzero(ok)[near <= c.t_eps]
    status[bad] = Status.LOST
    ys[bad] = np.nan


class BatchResult(NamedTuple):
    status: np.ndarray
    y: np.ndarray
    beta: np.ndarray
    bounces: np.ndarray
    first_hit: np.ndarray
    second_hit: np.ndarray


def trace_batch(scene: MirrorScene, xs, alphas, max_bounces: int = DEFAULT_MAX_BOUNCES,
                backend: Optional[str] = None, workers: Optional[int] = None) -> BatchResult:
    """Trace many rays; results are in input order and independent of ``workers``."""
    if max_bounces < 1:
        raise ValueError("max_bounces must be at least 1")
    c = scene.compiled
    xs = np.ascontiguousarray(xs, dtype=float)
    alphas = np.ascontiguousarray(alphas, dtype=float)
    if xs.shape != alphas.shape or xs.ndim != 1:
        raise ValueError("xs and alphas must be 1-d arrays of equal length")
    mod = _module(backend)
    nw = workers or _workers()
    n = len(xs)
    if nw <= 1 or n < 4096 or mod is _pytrace:
        out = list(mod.trace_batch(c, xs, alphas, int(max_bounces), c.t_eps))
    else:
        bounds = np.linspace(0, n, nw + 1).astype(int)
        with ThreadPoolExecutor(nw) as ex:
            parts = list(ex.map(lambda ab: mod.trace_batch(c, xs[ab[0]:ab[1]], alphas[ab[0]:ab[1]],
                                                           int(max_bounces), c.t_eps),
                                zip(bounds[:-1], bounds[1:])))
        out = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    _wall_top_exits(c, out[0], out[1])
    out[2][out[0] != Status.RETURNED] = np.nan
    return BatchResult(*out)


def trace(scene: MirrorScene, p, max_bounces: int = DEFAULT_MAX_BOUNCES, record_path: bool = False,
          backend: Optional[str] = None) -> TraceResult:
    p = PhasePoint(float(p[0]), float(p[1])).validate()
    if max_bounces < 1:
        raise ValueError("max_bounces must be at least 1")
    c = scene.compiled
    mod = _module(backend)
    (st, y, beta, nb, _, _), pts, hits = mod.trace_path(c, p.x, p.alpha, int(max_bounces), c.t_eps)
    st_arr, y_arr = np.array([st], dtype=np.int8), np.array([y])
    _wall_top_exits(c, st_arr, y_arr)
    status = Status(int(st_arr[0]))
    exit_pt = PhasePoint(float(y), float(beta)) if status is Status.RETURNED else None
    path = [Point(float(a), float(b)) for a, b in pts] if record_path else None
    return TraceResult(status, exit_pt, int(nb), path, list(hits) if record_path else None)


class LostRay(RuntimeError):
    """The ray did not return to the line within the bounce budget."""


def billiard_map(scene: MirrorScene, p, max_bounces: int = DEFAULT_MAX_BOUNCES) -> PhasePoint:
    res = trace(scene, p, max_bounces)
    if res.status is not Status.RETURNED:
        raise LostRay(f"ray from {tuple(p)} ended with status {res.status.name}")
    return res.exit
