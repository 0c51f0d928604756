"""Deterministic mirror systems that approximate symmetric random reflection kernels."""
from .geometry import EllipseArc, Point, Ray, SegmentMirror
from .kernels import ReflectionKernel, Variant, cosine_grid, kernel_mass_matrix
from .tracer import BACKEND, Guard, MirrorScene, PhasePoint, Status, billiard_map, trace, trace_batch

__all__ = [
    "BACKEND", "EllipseArc", "Guard", "MirrorScene", "PhasePoint", "Point", "Ray",
    "ReflectionKernel", "SegmentMirror", "Status", "Variant", "billiard_map",
    "cosine_grid", "kernel_mass_matrix", "trace", "trace_batch",
]
__version__ = "0.1.0"
