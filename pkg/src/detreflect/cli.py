"""Command line: ``detreflect {synthesize,trace,verify,render}``."""
from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

import numpy as np

from .kernels import KernelError, load_kernel
from .scenefile import (FormatError, format_paths, format_trace_output, load_scene, parse_paths,
                        parse_rays, write_scene)
from .synthesize import RunConfig, StageError, kernel_hash, synthesize
from .tracer import DEFAULT_MAX_BOUNCES, trace, trace_batch
from .verify import run_verify

log = logging.getLogger("detreflect")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--eps0", type=float, default=0.1, help="accuracy parameter in (0, 1)")
    p.add_argument("--level", type=int, default=3, help="cosine grid level m")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--max-bounces", type=int, default=DEFAULT_MAX_BOUNCES)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="detreflect", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("synthesize", help="build a mirror scene for a kernel spec")
    s.add_argument("kernel")
    _common(s)
    s.add_argument("--depth-n", type=float, default=10.0, help="mirrors stay above depth 1/n")
    s.add_argument("--no-guards", action="store_true", help="omit floor and walls")
    s.add_argument("--max-gen", type=int, default=12)
    s.add_argument("--out", default="scene.txt")

    t = sub.add_parser("trace", help="trace a ray file through a scene")
    t.add_argument("scene")
    t.add_argument("rays")
    t.add_argument("--max-bounces", type=int, default=DEFAULT_MAX_BOUNCES)
    t.add_argument("--out", default="-")
    t.add_argument("--paths", default=None, help="also write ray polylines here")

    v = sub.add_parser("verify", help="Monte Carlo check of a scene against a kernel")
    v.add_argument("scene")
    v.add_argument("kernel")
    _common(v)
    v.add_argument("--rays", type=int, default=1_000_000)
    v.add_argument("--reverse", type=int, default=10_000, help="rays retraced for reversibility")
    v.add_argument("--out", default="-")

    r = sub.add_parser("render", help="draw a scene as SVG")
    r.add_argument("scene")
    r.add_argument("--paths", nargs="*", default=[])
    r.add_argument("--out", default="scene.svg")
    return ap


def _write(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_synthesize(args) -> int:
    kernel = load_kernel(args.kernel)
    cfg = RunConfig(eps0=args.eps0, m=args.level, depth_n=args.depth_n, seed=args.seed,
                    max_bounces=args.max_bounces, guards=not args.no_guards, max_gen=args.max_gen)
    try:
        res = synthesize(kernel, cfg)
    except StageError as exc:
        print(f"synthesize failed at stage {exc.stage}: {exc}", file=sys.stderr)
        return 2
    write_scene(args.out, res.scene, res.provenance)
    log.info("wrote %s (%d arcs, covered fraction %s)", args.out, len(res.scene.arcs),
             res.provenance["covered_fraction"])
    return 0


def cmd_trace(args) -> int:
    scene, _ = load_scene(args.scene)
    with open(args.rays, encoding="utf-8") as fh:
        xs, als = parse_rays(fh.read())
    res = trace_batch(scene, xs, als, args.max_bounces)
    _write(args.out, format_trace_output(res))
    if args.paths:
        paths = [trace(scene, (x, a), args.max_bounces, record_path=True).path for x, a in zip(xs, als)]
        _write(args.paths, format_paths(paths))
    return 0


def cmd_verify(args) -> int:
    scene, prov = load_scene(args.scene)
    kernel = load_kernel(args.kernel)
    want = prov.get("kernel_sha256")
    if want is not None and want != kernel_hash(kernel):
        print("warning: scene was synthesized for a different kernel spec", file=sys.stderr)
    window = (kernel.strips[0], kernel.strips[-1])
    rep = run_verify(scene, kernel, args.level, window, args.rays, args.seed, eps0=args.eps0,
                     max_bounces=args.max_bounces, n_reverse=args.reverse)
    _write(args.out, rep.format())
    return 0 if rep.passed else 1


def cmd_render(args) -> int:
    from .render import render_svg
    scene, _ = load_scene(args.scene)
    paths = []
    for p in args.paths:
        with open(p, encoding="utf-8") as fh:
            paths.extend(parse_paths(fh.read()))
    _write(args.out, render_svg(scene, paths, title=args.scene))
    return 0


COMMANDS = {"synthesize": cmd_synthesize, "trace": cmd_trace, "verify": cmd_verify, "render": cmd_render}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.cmd](args)
    except (FormatError, KernelError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
