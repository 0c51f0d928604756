"""Text formats for scenes, ray batches and trace output.

Scene file::

    detreflect-scene 1
    units = length
    provenance.<key> = <value>          (any number, optional)
    guard <floor_depth> [<wall_x> ...]  (at most one)
    arc <f1x> <f1y> <f2x> <f2y> <px> <py> <apex_x> <apex_y> <theta1> <theta2>
    seg <x0> <y0> <x1> <y1>

Numbers are written with 17 significant digits, which round-trips doubles
exactly.  ``#`` starts a comment.
"""
from __future__ import annotations

import math
from typing import Dict, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from .geometry import EllipseArc, GeometryError, Point, SegmentMirror
from .tracer import BatchResult, Guard, MirrorScene, Status

SCENE_MAGIC = "detreflect-scene"
SCENE_VERSION = 1


class FormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def fnum(v: float) -> str:
    return format(float(v), ".17g")


def format_scene(scene: MirrorScene, provenance: Optional[Dict[str, str]] = None) -> str:
    out = [f"{SCENE_MAGIC} {SCENE_VERSION}", "units = length"]
    for k, v in (provenance or {}).items():
        if any(c.isspace() for c in k) or "\n" in str(v):
            raise ValueError(f"bad provenance entry {k!r}")
        out.append(f"provenance.{k} = {v}")
    if scene.guard is not None:
        out.append(" ".join(["guard", fnum(scene.guard.floor_depth)] + [fnum(w) for w in scene.guard.wall_xs]))
    for a in scene.arcs:
        vals = (*a.focus1, *a.focus2, *a.through, *a.apex, *a.clip)
        out.append("arc " + " ".join(fnum(v) for v in vals))
    for s in scene.segments:
        out.append("seg " + " ".join(fnum(v) for v in (*s.p0, *s.p1)))
    return "\n".join(out) + "\n"


def _floats(parts, n, lineno, what):
    if len(parts) != n:
        raise FormatError(f"{what} needs {n} numbers, got {len(parts)}", lineno)
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"bad number in {what} record", lineno) from None


def parse_scene(text: str) -> Tuple[MirrorScene, Dict[str, str]]:
    arcs: List[EllipseArc] = []
    segs: List[SegmentMirror] = []
    guard = None
    prov: Dict[str, str] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if not header_seen:
            if len(parts) != 2 or parts[0] != SCENE_MAGIC:
                raise FormatError(f"expected '{SCENE_MAGIC} <version>'", lineno)
            if parts[1] != str(SCENE_VERSION):
                raise FormatError(f"unsupported scene version {parts[1]}", lineno)
            header_seen = True
            continue
        head = parts[0]
        try:
            if head == "arc":
                v = _floats(parts[1:], 10, lineno, "arc")
                arcs.append(EllipseArc(Point(v[0], v[1]), Point(v[2], v[3]), Point(v[4], v[5]),
                                       Point(v[6], v[7]), (v[8], v[9])))
            elif head == "seg":
                v = _floats(parts[1:], 4, lineno, "seg")
                segs.append(SegmentMirror(Point(v[0], v[1]), Point(v[2], v[3])))
            elif head == "guard":
                if guard is not None:
                    raise FormatError("more than one guard record", lineno)
                v = _floats(parts[1:], len(parts) - 1, lineno, "guard")
                if not v:
                    raise FormatError("guard needs a floor depth", lineno)
                guard = Guard(v[0], tuple(v[1:]))
            elif "=" in line:
                key, val = (s.strip() for s in line.split("=", 1))
                if key.startswith("provenance."):
                    prov[key[len("provenance."):]] = val
                elif key != "units":
                    raise FormatError(f"unknown header key {key!r}", lineno)
            else:
                raise FormatError(f"unknown record {head!r}", lineno)
        except (GeometryError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(str(exc), lineno) from None
    if not header_seen:
        raise FormatError("empty scene file")
    return MirrorScene(tuple(arcs), tuple(segs), guard), prov


def load_scene(path) -> Tuple[MirrorScene, Dict[str, str]]:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


def write_scene(path, scene: MirrorScene, provenance=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_scene(scene, provenance))


# ---------------------------------------------------------------- rays

def parse_rays(text: str) -> Tuple[np.ndarray, np.ndarray]:
    xs, als = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError("expected 'x alpha'", lineno)
        try:
            x, a = float(parts[0]), float(parts[1])
        except ValueError:
            raise FormatError("bad number", lineno) from None
        if not (math.isfinite(x) and -math.pi < a < 0.0):
            raise FormatError(f"phase point ({x}, {a}) outside R x (-pi, 0)", lineno)
        xs.append(x)
        als.append(a)
    return np.array(xs, dtype=float), np.array(als, dtype=float)


def format_rays(xs, alphas) -> str:
    return "".join(f"{fnum(x)} {fnum(a)}\n" for x, a in zip(xs, alphas))


def format_trace_output(res: BatchResult) -> str:
    lines = []
    for st, y, b, nb in zip(res.status, res.y, res.beta, res.bounces):
        lines.append(f"{Status(int(st)).name.lower()} {fnum(y)} {fnum(b)} {int(nb)}\n")
    return "".join(lines)


def parse_trace_output(text: str):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise FormatError("expected 'status y beta bounces'", lineno)
        rows.append((Status[parts[0].upper()], float(parts[1]), float(parts[2]), int(parts[3])))
    return rows


def format_paths(paths: Iterable[List[Point]]) -> str:
    return "".join(" ".join(f"{fnum(p[0])} {fnum(p[1])}" for p in path) + "\n" for path in paths)


def parse_paths(text: str) -> List[List[Tuple[float, float]]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        vals = raw.split()
        if not vals:
            continue
        if len(vals) % 2:
            raise FormatError("odd number of coordinates", lineno)
        nums = [float(v) for v in vals]
        out.append(list(zip(nums[0::2], nums[1::2])))
    return out
