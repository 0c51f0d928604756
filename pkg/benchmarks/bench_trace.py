"""Compare the compiled and pure-Python tracing backends on a synthesized scene.

    python benchmarks/bench_trace.py [--rays N] [--kernel knudsen|retro|specular]
"""
import argparse
import time

import numpy as np

from detreflect.kernels import knudsen_kernel, retro_kernel, specular_kernel
from detreflect.synthesize import RunConfig, synthesize
from detreflect.tracer import available_backends, trace_batch
from detreflect.verify import sample_lambda

KERNELS = {"knudsen": knudsen_kernel, "retro": retro_kernel, "specular": specular_kernel}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rays", type=int, default=20_000)
    ap.add_argument("--kernel", choices=sorted(KERNELS), default="knudsen")
    ap.add_argument("--eps0", type=float, default=0.05)
    ap.add_argument("--level", type=int, default=3)
    args = ap.parse_args()

    syn = synthesize(KERNELS[args.kernel](), RunConfig(eps0=args.eps0, m=args.level))
    scene = syn.scene
    scene.compiled  # build the BVH outside the timed region
    xs, als = sample_lambda((0.0, 1.0), args.rays, 1)
    print(f"scene: {args.kernel}, {len(scene.arcs)} arcs; {args.rays} rays")

    results = {}
    for backend in available_backends():
        t0 = time.perf_counter()
        results[backend] = trace_batch(scene, xs, als, backend=backend, workers=1)
        dt = time.perf_counter() - t0
        print(f"{backend:>9}: {dt:8.3f} s  {args.rays / dt:12.0f} rays/s  "
              f"mean bounces {np.mean(results[backend].bounces):.2f}")
    if len(results) == 2:
        a, b = results["compiled"], results["python"]
        same = all(np.array_equal(u, v, equal_nan=True) for u, v in zip(a, b))
        print(f"identical outputs: {same}")


if __name__ == "__main__":
    main()
