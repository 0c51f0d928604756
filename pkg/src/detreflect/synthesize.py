"""End-to-end construction of a mirror scene for a symmetric kernel.

Stages: discretize the kernel, place bundle pairs for every x-strip, pack
scaled copies of each strip's cell into the strip at the requested depth,
then add the guard floor and walls at every strip edge.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .discretizer import SimpleSymmetricFunction, build_ssf, coarsen_near_diagonal, split_self_pairs
from .kernels import ReflectionKernel, Variant, check_symmetry, format_kernel_spec
from .packer import CantorPacking, CellTemplate, pack
from .scenefile import fnum
from .tracer import DEFAULT_MAX_BOUNCES, Guard, MirrorScene
from .transposer import TransposerAssembly, assemble

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class RunConfig:
    eps0: float = 0.1
    m: int = 3
    depth_n: float = 10.0
    rays: int = 1_000_000
    seed: int = 1
    max_bounces: int = DEFAULT_MAX_BOUNCES
    guards: bool = True
    split_self_pairs: Optional[bool] = None  # None: split unless the target is a retroreflector
    max_gen: int = 12
    strict_packing: bool = False

    def __post_init__(self):
        if not 0 < self.eps0 < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        if not self.depth_n >= 1:
            raise ValueError("depth parameter n must be at least 1")
        if self.m < 0 or self.rays < 1 or self.max_bounces < 1:
            raise ValueError("level, ray count and bounce budget must be positive")

    @property
    def depth(self) -> float:
        return 1.0 / self.depth_n


@dataclass
class Synthesis:
    scene: MirrorScene
    ssf: SimpleSymmetricFunction
    assemblies: Dict[Tuple[float, float], TransposerAssembly]
    packings: Dict[Tuple[float, float], CantorPacking]
    provenance: Dict[str, str]
    lint: List[str] = field(default_factory=list)

    def covered_fraction(self) -> float:
        total = sum(b - a for a, b in self.packings)
        if total == 0:
            return 0.0
        return sum((b - a) * (1.0 - p.leftover_fraction) for (a, b), p in self.packings.items()) / total


def kernel_hash(kernel: ReflectionKernel) -> str:
    return hashlib.sha256(format_kernel_spec(kernel).encode("utf-8")).hexdigest()


def _column_key(ssf: SimpleSymmetricFunction, strip) -> tuple:
    col = ssf.column(strip)
    first = col[0]
    return tuple((ssf.rects[i].y1, ssf.rects[i].y2, ssf.rects[i].partner - first, ssf.rects[i].target) for i in col)


def discretize(kernel: ReflectionKernel, cfg: RunConfig) -> SimpleSymmetricFunction:
    ssf = coarsen_near_diagonal(build_ssf(kernel, cfg.m), cfg.eps0)
    split = cfg.split_self_pairs
    if split is None:
        split = kernel.variant is not Variant.RETRO
    if split:
        ssf = split_self_pairs(ssf)
    ssf.validate()
    return ssf


def lint_scene(scene: MirrorScene, depth: float, strips: Sequence[float], guards: bool = True) -> List[str]:
    """Problems with depth bound and wall layout; empty when the scene is clean."""
    problems = []
    for i, a in enumerate(scene.arcs):
        x0, y0, x1, y1 = a.bbox()
        if not (y0 > -depth and y1 < 0.0):
            problems.append(f"arc {i} leaves the band (-{depth}, 0)")
    if guards:
        g = scene.guard
        if g is None:
            problems.append("guard missing")
        else:
            if g.floor_depth != depth:
                problems.append(f"floor at -{g.floor_depth}, expected -{depth}")
            if tuple(g.wall_xs) != tuple(sorted(strips)):
                problems.append("walls do not match strip edges")
    return problems


def synthesize(kernel: ReflectionKernel, cfg: RunConfig) -> Synthesis:
    try:
        report = check_symmetry(kernel, cfg.m)
    except Exception as exc:
        raise StageError("symmetry", str(exc)) from exc
    if not report.passed:
        raise StageError("symmetry", f"asymmetry {report.max_asymmetry:.3g}")
    try:
        ssf = discretize(kernel, cfg)
    except Exception as exc:
        raise StageError("discretize", str(exc)) from exc
    assemblies: Dict[Tuple[float, float], TransposerAssembly] = {}
    packings: Dict[Tuple[float, float], CantorPacking] = {}
    templates: Dict[tuple, Tuple[TransposerAssembly, CellTemplate]] = {}
    arcs = []
    for strip in kernel.strip_intervals:
        key = _column_key(ssf, strip)
        if key not in templates:
            try:
                asm = assemble(ssf, strip, cfg.eps0)
            except Exception as exc:
                raise StageError("assemble", f"strip {strip}: {exc}") from exc
            templates[key] = (asm, CellTemplate.from_assembly(asm) if asm.pairs else None)
        asm, tmpl = templates[key]
        assemblies[strip] = asm
        if tmpl is None:
            continue
        try:
            pk = pack(tmpl, strip, cfg.depth, cfg.eps0, max_gen=cfg.max_gen, strict=cfg.strict_packing)
        except Exception as exc:
            raise StageError("pack", f"strip {strip}: {exc}") from exc
        packings[strip] = pk
        log.info("strip %s: %d cells, leftover %.6g", strip, len(pk.cells), pk.leftover_fraction)
        for cell in pk.cells:
            arcs.extend(cell.mirrors)
    guard = Guard(cfg.depth, kernel.strips) if cfg.guards else None
    scene = MirrorScene(tuple(arcs), (), guard)
    problems = lint_scene(scene, cfg.depth, kernel.strips, cfg.guards)
    if problems:
        raise StageError("lint", "; ".join(problems[:5]))
    prov = {
        "kernel_sha256": kernel_hash(kernel),
        "variant": kernel.variant.value,
        "eps0": fnum(cfg.eps0),
        "m": str(cfg.m),
        "depth_n": fnum(cfg.depth_n),
        "seed": str(cfg.seed),
        "strips": ",".join(fnum(e) for e in kernel.strips),
        "guards": "true" if cfg.guards else "false",
        "covered_fraction": fnum(_covered(packings, kernel)),
    }
    return Synthesis(scene, ssf, assemblies, packings, prov, problems)


def _covered(packings, kernel) -> float:
    total = kernel.strips[-1] - kernel.strips[0]
    cov = sum((b - a) * (1.0 - p.leftover_fraction) for (a, b), p in packings.items())
    return cov / total
