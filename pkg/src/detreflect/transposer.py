"""Confocal ellipse pairs that swap two angular bundles over a short base interval.

A bundle leaving the base point ``A2 = (0, 0)`` near angle alpha hits an arc
of an ellipse with foci ``A2`` and ``C``, is sent through ``C`` onto a second
arc of another ellipse with the same foci, and comes back to ``A2`` near
angle beta.  ``C`` is the midpoint of ``B_alpha = r_alpha e^{i alpha}`` and
``B_beta = r_beta e^{i beta}``; the radii satisfy
``r_alpha / r_beta = sin(alpha) / sin(beta)`` so the two bundles carry the
same phase-space mass.  When alpha equals beta a circle arc around ``A2``
sends the bundle straight back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from shapely.geometry import LineString, MultiPoint, Polygon
from shapely.prepared import prep

from .discretizer import Rect, SimpleSymmetricFunction
from .geometry import EllipseArc, GeometryError, Point
from .tracer import MirrorScene, Status, trace_batch

ORIGIN = Point(0.0, 0.0)
HULL_SAMPLES = 129
HULL_MARGIN = 0.01
MAX_HALVINGS = 60
TRIM_LADDER = (0.02, 0.05, 0.1, 0.2, 0.35, 0.5, 0.7, 0.85, 0.95)


class InfeasibleBundle(RuntimeError):
    pass


@dataclass(frozen=True)
class TransposerPair:
    alpha: float
    beta: float
    dalpha: float
    dbeta: float
    r_alpha: float
    r_beta: float
    clip_alpha: Tuple[float, float]
    clip_beta: Tuple[float, float]
    arcs: Tuple[EllipseArc, ...]
    rects: Tuple[int, ...] = ()

    @property
    def is_circle(self) -> bool:
        return len(self.arcs) == 1

    @property
    def c(self) -> Point:
        return self.arcs[0].focus2

    def scaled(self, r_alpha: float) -> "TransposerPair":
        return build_pair(self.alpha, self.beta, self.dalpha, 0.0, r_alpha,
                          self.clip_alpha, self.clip_beta, self.rects)

    def samples(self, n: int = HULL_SAMPLES) -> np.ndarray:
        return np.vstack([a.sample(n) for a in self.arcs])


def _default_clip(center: float, width: float) -> Tuple[float, float]:
    return center - width / 2.0, center + width / 2.0


def build_pair(alpha: float, beta: float, dalpha: float, rho: float, r_alpha: float,
               clip_alpha: Optional[Tuple[float, float]] = None,
               clip_beta: Optional[Tuple[float, float]] = None,
               rects: Sequence[int] = ()) -> TransposerPair:
    """Construct the mirror arcs for one bundle pair.

    ``rho`` is not needed by the construction itself (the arcs depend only on
    the angles and the scale); it is accepted for interface symmetry with the
    validation routines.
    """
    if not (-math.pi < alpha < 0 and -math.pi < beta < 0):
        raise GeometryError("bundle angles must lie in (-pi, 0)")
    if not r_alpha > 0 or not dalpha > 0:
        raise GeometryError("scale and bundle width must be positive")
    if rho < 0:
        raise GeometryError("rho must be nonnegative")
    ratio = math.sin(beta) / math.sin(alpha)
    dbeta = dalpha / ratio
    ca = tuple(clip_alpha) if clip_alpha is not None else _default_clip(alpha, dalpha)
    cb = tuple(clip_beta) if clip_beta is not None else _default_clip(beta, dbeta)
    for lo, hi in (ca, cb):
        if not (-math.pi < lo < hi < 0):
            raise GeometryError(f"clip wedge ({lo}, {hi}) leaves the lower half-plane")
    b_alpha = Point(r_alpha * math.cos(alpha), r_alpha * math.sin(alpha))
    if alpha == beta:
        arc = EllipseArc(ORIGIN, ORIGIN, b_alpha, ORIGIN, ca)
        return TransposerPair(alpha, beta, dalpha, dalpha, r_alpha, r_alpha, ca, ca, (arc,), tuple(rects))
    r_beta = r_alpha * ratio
    b_beta = Point(r_beta * math.cos(beta), r_beta * math.sin(beta))
    c = Point(0.5 * (b_alpha[0] + b_beta[0]), 0.5 * (b_alpha[1] + b_beta[1]))
    e_alpha = EllipseArc(ORIGIN, c, b_alpha, ORIGIN, ca)
    e_beta = EllipseArc(ORIGIN, c, b_beta, ORIGIN, cb)
    return TransposerPair(alpha, beta, dalpha, dbeta, r_alpha, r_beta, ca, cb, (e_alpha, e_beta), tuple(rects))


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class PairReport:
    two_bounce_fraction: float
    max_exit_angle_error: float
    exit_interval_ok: bool
    n_rays: int


def _trimmed(center: float, clip: Tuple[float, float], trim: float) -> Tuple[float, float]:
    keep = 1.0 - trim
    return center - keep * (center - clip[0]), center + keep * (clip[1] - center)


def _fan(pair: TransposerPair, rho: float, trim: float, n_rays: int):
    """Deterministic grid of (x, angle, bundle) over the trimmed base and bundles."""
    bundles = [(pair.alpha, pair.clip_alpha)]
    if not pair.is_circle:
        bundles.append((pair.beta, pair.clip_beta))
    per = max(1, n_rays // len(bundles))
    n_x = 1 if rho == 0 else max(1, int(round(math.sqrt(per / 4.0))))
    n_a = max(1, per // n_x)
    half = (1.0 - trim) * rho
    xs = (np.arange(n_x) + 0.5) / n_x * 2 * half - half if rho > 0 else np.zeros(1)
    out_x, out_a, out_b = [], [], []
    for bi, (center, clip) in enumerate(bundles):
        lo, hi = _trimmed(center, clip, trim)
        angs = lo + (np.arange(n_a) + 0.5) / n_a * (hi - lo)
        gx, ga = np.meshgrid(xs, angs, indexing="ij")
        out_x.append(gx.ravel())
        out_a.append(ga.ravel())
        out_b.append(np.full(gx.size, bi))
    return np.concatenate(out_x), np.concatenate(out_a), np.concatenate(out_b)


def _pair_outcome(pair, res, bundle, rho):
    expected = 1 if pair.is_circle else 2
    own_first = bundle if not pair.is_circle else np.zeros_like(bundle)
    target = np.where(bundle == 0, pair.beta, pair.alpha) if not pair.is_circle else np.full(len(bundle), pair.alpha)
    tol_x = max(rho, 1e-9 * pair.r_alpha)
    returned = res.status == Status.RETURNED
    inside = returned & (np.abs(res.y) <= tol_x)
    good = inside & (res.bounces == expected) & (res.first_hit == own_first)
    err = np.abs(res.beta - target)
    return good, err, returned, inside


def validate_pair(pair: TransposerPair, rho: float, trim: float, n_rays: int = 2000) -> PairReport:
    if not 0.0 <= trim < 1.0:
        raise ValueError("trim must lie in [0, 1)")
    xs, angs, bundle = _fan(pair, rho, trim, n_rays)
    res = trace_batch(MirrorScene(pair.arcs), xs, angs, max_bounces=8)
    good, err, returned, inside = _pair_outcome(pair, res, bundle, rho)
    frac = float(good.mean())
    max_err = float(err[good].max()) if good.any() else math.inf
    return PairReport(frac, max_err, bool(np.all(inside[returned])), len(xs))


@dataclass(frozen=True)
class TuneResult:
    rho: float
    trim: float
    r_alpha: float
    report: PairReport


def auto_tune(alpha: float, beta: float, dalpha: float, eps0: float,
              clip_alpha=None, clip_beta=None, n_rays: int = 2000, r_alpha: float = 1.0) -> TuneResult:
    """Find ``(rho, trim)`` meeting the success and angle-error budgets for this bundle pair.

    Trims are tried from smallest up; for each, rho starts at a quarter of the
    smaller bundle footprint and is halved until the fan passes.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    pair = build_pair(alpha, beta, dalpha, 0.0, r_alpha, clip_alpha, clip_beta)
    need_frac = 1.0 - eps0 / 4.0
    need_err = eps0 / 2.0
    rho0 = 0.25 * r_alpha * min(pair.clip_alpha[1] - pair.clip_alpha[0],
                                pair.clip_beta[1] - pair.clip_beta[0])
    for trim in TRIM_LADDER:
        at_point = validate_pair(pair, 0.0, trim, n_rays)
        if at_point.two_bounce_fraction < need_frac or at_point.max_exit_angle_error > need_err:
            continue
        rho = rho0
        for _ in range(MAX_HALVINGS):
            rep = validate_pair(pair, rho, trim, n_rays)
            if rep.two_bounce_fraction >= need_frac and rep.max_exit_angle_error <= need_err:
                return TuneResult(rho, trim, r_alpha, rep)
            rho *= 0.5
    raise InfeasibleBundle(f"no (rho, trim) found for bundle pair alpha={alpha:.6g}, beta={beta:.6g}")


# ---------------------------------------------------------------- assembly

def _hull(points: np.ndarray) -> Polygon:
    hull = MultiPoint([tuple(p) for p in points]).convex_hull
    minx, miny, maxx, maxy = hull.bounds
    return hull.buffer(HULL_MARGIN * math.hypot(maxx - minx, maxy - miny))


def _lines(pair: TransposerPair, n: int = HULL_SAMPLES) -> List[LineString]:
    return [LineString([tuple(p) for p in a.sample(n)]) for a in pair.arcs]


class _Placed:
    """Cached padded hull and arc polylines of a placed pair."""

    def __init__(self, pair: TransposerPair):
        self.pair = pair
        self.hull = _hull(pair.samples())
        self.prepared = prep(self.hull)
        self.lines = _lines(pair)


def _disjoint(new: _Placed, earlier: Sequence[_Placed]) -> bool:
    for q in earlier:
        if not new.hull.intersects(q.hull):
            continue
        if any(new.prepared.intersects(ln) for ln in q.lines):
            return False
        if any(q.prepared.intersects(ln) for ln in new.lines):
            return False
    return True


def hulls_disjoint(new: TransposerPair, earlier: Sequence[TransposerPair]) -> bool:
    """True when the new pair's padded hull avoids all earlier arcs and vice versa."""
    return _disjoint(_Placed(new), [_Placed(q) for q in earlier])


def edge_cutoff(eps0: float) -> float:
    """Angle c1 whose two edge wedges hold less than ``eps0/16`` of the sine mass."""
    return math.acos(1.0 - eps0 / 16.0) * (1.0 - 1e-9)


@dataclass
class TransposerAssembly:
    strip: Tuple[float, float]
    rho: float
    pairs: List[TransposerPair]
    scale_schedule: List[float]
    unmirrored: List[int]
    c1: float
    tunes: List[TuneResult] = field(default_factory=list)
    crosstalk: float = 0.0
    group_of_arc: Tuple[int, ...] = ()

    @property
    def base(self) -> Tuple[float, float]:
        return -self.rho, self.rho

    def arcs(self) -> List[EllipseArc]:
        return [a for p in self.pairs for a in p.arcs]

    def scene(self) -> MirrorScene:
        return MirrorScene(tuple(self.arcs()))

    def hull(self, n: int = 257) -> Polygon:
        """Convex hull of all mirrors together with the base segment."""
        pts = [a.sample(n) for a in self.arcs()]
        pts.append(np.array([[-self.rho, 0.0], [self.rho, 0.0]]))
        return MultiPoint([tuple(p) for p in np.vstack(pts)]).convex_hull

    def depth(self) -> float:
        ext = self.scene().compiled.extent
        return -ext[1] if ext else 0.0


def _pair_order(ssf: SimpleSymmetricFunction, pairs: List[Tuple[int, int]]):
    def key(kj):
        k, j = kj
        r, p = ssf.rects[k], ssf.rects[j]
        return (-r.mass, min(r.a1, p.a1))
    return sorted(pairs, key=key)


def _pair_from_rects(ssf: SimpleSymmetricFunction, k: int, j: int, r_alpha: float) -> TransposerPair:
    rk, rj = ssf.rects[k], ssf.rects[j]
    if k == j:
        return build_pair(rk.target, rk.target, rk.a2 - rk.a1, 0.0, r_alpha, (rk.a1, rk.a2), None, (k,))
    # bundle k enters around the partner's target (inside k) and leaves around rk.target (inside j)
    return build_pair(rj.target, rk.target, rk.a2 - rk.a1, 0.0, r_alpha,
                      (rk.a1, rk.a2), (rj.a1, rj.a2), (k, j))


def sample_base(rho: float, angle_ranges: Sequence[Tuple[float, float]], n: int, seed: int = 12345):
    """Base points and sine-law angles (restricted to ``angle_ranges``) for crosstalk checks."""
    rng = np.random.Generator(np.random.PCG64(seed))
    y_lo = np.array([1.0 + math.cos(a) for a, _ in angle_ranges])
    y_hi = np.array([1.0 + math.cos(b) for _, b in angle_ranges])
    w = (y_hi - y_lo) / (y_hi - y_lo).sum()
    which = rng.choice(len(angle_ranges), size=n, p=w)
    ys = y_lo[which] + rng.random(n) * (y_hi - y_lo)[which]
    angs = -2.0 * np.arctan2(np.sqrt(np.clip(2.0 - ys, 0, 2)), np.sqrt(np.clip(ys, 0, 2)))
    xs = (rng.random(n) * 2.0 - 1.0) * rho
    return xs, angs, which


def crosstalk_fraction(assembly: TransposerAssembly, rho: float, n: int = 20000, seed: int = 12345) -> float:
    """Share of base phase-space mass that the assembly disturbs.

    A sampled ray counts when its own pair, traced alone, returns it to the
    base after the expected number of bounces, yet inside the full assembly it
    meets a foreign arc or ends elsewhere.
    """
    if not assembly.pairs or rho == 0:
        return 0.0
    ranges, owner = [], []
    for gi, p in enumerate(assembly.pairs):
        ranges.append(p.clip_alpha)
        owner.append(gi)
        if not p.is_circle:
            ranges.append(p.clip_beta)
            owner.append(gi)
    xs, angs, which = sample_base(rho, ranges, n, seed)
    owner = np.array(owner)[which]
    full = trace_batch(assembly.scene(), xs, angs, max_bounces=16)
    bad = np.zeros(n, dtype=bool)
    offset = np.concatenate([[0], np.cumsum([len(p.arcs) for p in assembly.pairs])])
    for gi, p in enumerate(assembly.pairs):
        sel = np.flatnonzero(owner == gi)
        if len(sel) == 0:
            continue
        alone = trace_batch(MirrorScene(p.arcs), xs[sel], angs[sel], max_bounces=16)
        expected = 1 if p.is_circle else 2
        ok_alone = (alone.status == Status.RETURNED) & (alone.bounces == expected) & (np.abs(alone.y) <= rho)
        same = ((full.status[sel] == alone.status) & (full.bounces[sel] == alone.bounces)
                & (full.first_hit[sel] == np.where(alone.first_hit >= 0, alone.first_hit + offset[gi], -1))
                & (full.second_hit[sel] == np.where(alone.second_hit >= 0, alone.second_hit + offset[gi], -1)))
        bad[sel] = ok_alone & ~same
    mirrored_mass = sum(math.cos(b) - math.cos(a) for a, b in ranges) / 2.0
    return float(bad.mean()) * mirrored_mass


def assemble(ssf: SimpleSymmetricFunction, strip: Tuple[float, float], eps0: float,
             r_base: float = 1.0, n_rays: int = 2000, crosstalk_rays: int = 20000,
             max_doublings: int = 200) -> TransposerAssembly:
    """Build and place every mirrored pair of one x-strip around a common base point."""
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    c1 = edge_cutoff(eps0)
    col = ssf.column(strip)
    if not col:
        raise ValueError(f"strip {strip} has no rectangles")
    colset = set(col)
    unmirrored: List[int] = []
    chosen: List[Tuple[int, int]] = []
    for k, j in ssf.pairs(strip):
        if j not in colset:
            raise ValueError("pair crosses strips")
        ends = [ssf.rects[k], ssf.rects[j]]
        if any(r.a1 < -math.pi + c1 or r.a2 > -c1 for r in ends):
            unmirrored.extend(sorted({k, j}))
        else:
            chosen.append((k, j))
    pairs: List[TransposerPair] = []
    placed: List[_Placed] = []
    schedule: List[float] = []
    tunes: List[TuneResult] = []
    for k, j in _pair_order(ssf, chosen):
        r = r_base
        for _ in range(max_doublings):
            cand = _pair_from_rects(ssf, k, j, r)
            pc = _Placed(cand)
            if _disjoint(pc, placed):
                placed.append(pc)
                break
            r *= 2.0
        else:
            raise InfeasibleBundle(f"no non-interfering scale for pair {(k, j)}")
        tune = auto_tune(cand.alpha, cand.beta, cand.dalpha, eps0, cand.clip_alpha, cand.clip_beta,
                         n_rays=n_rays, r_alpha=1.0)
        pairs.append(cand)
        schedule.append(r)
        tunes.append(tune)
    groups = tuple(gi for gi, p in enumerate(pairs) for _ in p.arcs)
    asm = TransposerAssembly(tuple(strip), 0.0, pairs, schedule, sorted(unmirrored), c1, tunes, 0.0, groups)
    if not pairs:
        return asm
    rho = min(t.rho * r for t, r in zip(tunes, schedule))
    budget = eps0 / 16.0
    for _ in range(MAX_HALVINGS):
        ct = crosstalk_fraction(asm, rho, crosstalk_rays)
        if ct <= budget:
            asm.rho, asm.crosstalk = rho, ct
            return asm
        rho *= 0.5
    raise InfeasibleBundle("crosstalk budget not met")
