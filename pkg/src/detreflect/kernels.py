"""Target reflection kernels and their discretization on the cosine grid.

A kernel gives, for an incoming angle alpha in (-pi, 0), a law on the outgoing
angle beta.  Everything is measured against the sine weight ``-sin(alpha)``;
on the level-m cosine grid every cell carries sine mass ``2**-m`` (the full
range carries 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

SYMMETRY_TOL = 1e-9
ROW_SUM_TOL = 1e-10


class KernelError(ValueError):
    pass


class SymmetryError(KernelError):
    pass


class Variant(str, Enum):
    RETRO = "retro"
    SPECULAR = "specular"
    KNUDSEN = "knudsen"
    MATRIX = "matrix"


def angle_from_mass(y):
    """Angle in [-pi, 0] whose sine mass from -pi is ``y`` (i.e. ``1 + cos``).

    Half-angle form keeps full precision at both ends of the range.
    """
    y = np.clip(y, 0.0, 2.0)
    return -2.0 * np.arctan2(np.sqrt(2.0 - y), np.sqrt(y))


def sine_mass(a1, a2):
    """Integral of ``-sin`` over ``(a1, a2)``."""
    return np.cos(a2) - np.cos(a1)


@dataclass(frozen=True)
class CosineGrid:
    m: int
    gamma: Tuple[float, ...]

    @property
    def n_cells(self) -> int:
        return len(self.gamma) - 1

    @property
    def cell_mass(self) -> float:
        return 2.0 ** -self.m

    def cell_of(self, alpha):
        """Cell index with cells half-open on the right, ``(gamma_k, gamma_k+1]``."""
        idx = np.searchsorted(np.asarray(self.gamma), alpha, side="left") - 1
        return np.clip(idx, 0, self.n_cells - 1)


def cosine_grid(m: int) -> CosineGrid:
    if m < 0:
        raise KernelError("grid level must be nonnegative")
    k = np.arange(2 ** (m + 1) + 1, dtype=float)
    g = angle_from_mass(k * 2.0 ** -m)
    return CosineGrid(m, tuple(float(v) for v in g))


@dataclass(frozen=True, eq=False)
class ReflectionKernel:
    """A symmetric random reflector, constant in x on each strip.

    ``strips`` are strip edges.  For ``MATRIX`` kernels ``masses[i]`` is the
    level-``level`` mass matrix of strip i.
    """

    variant: Variant
    strips: Tuple[float, ...] = (0.0, 1.0)
    level: Optional[int] = None
    masses: Tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        edges = tuple(float(e) for e in self.strips)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise KernelError("strip edges must be strictly increasing")
        object.__setattr__(self, "strips", edges)
        if self.variant is Variant.MATRIX:
            if self.level is None or self.level < 0:
                raise KernelError("matrix kernel needs a grid level")
            n = 2 ** (self.level + 1)
            if len(self.masses) != len(edges) - 1:
                raise KernelError("one mass matrix per strip required")
            mats = []
            for i, mat in enumerate(self.masses):
                mat = np.array(mat, dtype=float)
                if mat.shape != (n, n):
                    raise KernelError(f"strip {i}: expected {n}x{n} matrix, got {mat.shape}")
                if np.any(mat < 0):
                    raise KernelError(f"strip {i}: negative mass")
                width = edges[i + 1] - edges[i]
                target = width * 2.0 ** -self.level
                if np.max(np.abs(mat.sum(axis=1) - target)) > ROW_SUM_TOL * max(1.0, target):
                    raise KernelError(f"strip {i}: row sums must equal strip width x cell mass")
                asym = np.max(np.abs(mat - mat.T))
                if asym > SYMMETRY_TOL * 2.0 * width:
                    raise SymmetryError(f"strip {i}: mass matrix asymmetric by {asym:.3g}")
                mat.setflags(write=False)
                mats.append(mat)
            object.__setattr__(self, "masses", tuple(mats))

    @property
    def strip_intervals(self):
        return list(zip(self.strips[:-1], self.strips[1:]))

    def strip_index(self, strip: Tuple[float, float]) -> int:
        for i, (a, b) in enumerate(self.strip_intervals):
            if abs(a - strip[0]) <= 1e-12 and abs(b - strip[1]) <= 1e-12:
                return i
        raise KernelError(f"strip {strip} is not part of the kernel layout")


def retro_kernel(strips=(0.0, 1.0)) -> ReflectionKernel:
    return ReflectionKernel(Variant.RETRO, tuple(strips))


def specular_kernel(strips=(0.0, 1.0)) -> ReflectionKernel:
    return ReflectionKernel(Variant.SPECULAR, tuple(strips))


def knudsen_kernel(strips=(0.0, 1.0)) -> ReflectionKernel:
    return ReflectionKernel(Variant.KNUDSEN, tuple(strips))


def _aggregate(mat: np.ndarray, factor: int) -> np.ndarray:
    n = mat.shape[0] // factor
    return mat.reshape(n, factor, n, factor).sum(axis=(1, 3))


def _raw_mass_matrix(kernel: ReflectionKernel, m: int, strip) -> np.ndarray:
    width = float(strip[1] - strip[0])
    n = 2 ** (m + 1)
    cell = 2.0 ** -m
    v = kernel.variant
    if v is Variant.KNUDSEN:
        # (-sin a) da over cell n times the outgoing law mass cell/2 of cell j
        return np.full((n, n), width * cell * cell / 2.0)
    if v is Variant.RETRO:
        return np.diag(np.full(n, width * cell))
    if v is Variant.SPECULAR:
        return np.fliplr(np.diag(np.full(n, width * cell)))
    if kernel.level < m:
        raise KernelError(f"matrix kernel has level {kernel.level} < requested {m}")
    mat = kernel.masses[kernel.strip_index(strip)]
    return _aggregate(mat, 2 ** (kernel.level - m))


def kernel_mass_matrix(kernel: ReflectionKernel, m: int, strip=(0.0, 1.0)) -> np.ndarray:
    """Joint sine mass ``a(n, j)`` of (incoming cell n, outgoing cell j) over ``strip``."""
    mat = _raw_mass_matrix(kernel, m, strip)
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > SYMMETRY_TOL * 2.0 * (strip[1] - strip[0]):
        raise SymmetryError(f"kernel asymmetric by {asym:.3g}")
    return mat


@dataclass(frozen=True)
class SymmetryReport:
    max_asymmetry: float
    strip_mass: float
    passed: bool


def check_symmetry(kernel: ReflectionKernel, m: int, matrices: Optional[Sequence[np.ndarray]] = None) -> SymmetryReport:
    """Largest ``|a(n,j) - a(j,n)|`` over strips; ``matrices`` overrides the kernel's own."""
    if matrices is None:
        matrices = [_raw_mass_matrix(kernel, m, s) for s in kernel.strip_intervals]
    worst, worst_mass = 0.0, 2.0
    for mat, (a, b) in zip(matrices, kernel.strip_intervals):
        asym = float(np.max(np.abs(np.asarray(mat) - np.asarray(mat).T)))
        if asym >= worst:
            worst, worst_mass = asym, 2.0 * (b - a)
    return SymmetryReport(worst, worst_mass, worst <= SYMMETRY_TOL * worst_mass)


def sample_exit(kernel: ReflectionKernel, alpha: float, u: float, x: Optional[float] = None) -> float:
    """Draw an outgoing angle for incoming ``alpha`` by inverse CDF at ``u``."""
    v = kernel.variant
    if v is Variant.RETRO:
        return alpha
    if v is Variant.SPECULAR:
        return -math.pi - alpha
    if v is Variant.KNUDSEN:
        return float(angle_from_mass(2.0 * u))
    grid = cosine_grid(kernel.level)
    i = 0
    if x is not None:
        i = int(np.clip(np.searchsorted(kernel.strips, x, side="right") - 1, 0, len(kernel.masses) - 1))
    row = kernel.masses[i][int(grid.cell_of(alpha))]
    cum = np.cumsum(row)
    target = u * cum[-1]
    j = int(min(np.searchsorted(cum, target, side="right"), len(row) - 1))
    while row[j] == 0.0 and j > 0:
        j -= 1
    before = cum[j] - row[j]
    frac = min(max((target - before) / row[j], 0.0), 1.0)
    return float(angle_from_mass((j + frac) * grid.cell_mass))


# ---------------------------------------------------------------- spec files

KERNEL_MAGIC = "detreflect-kernel"
KERNEL_VERSION = 1


def format_kernel_spec(kernel: ReflectionKernel) -> str:
    lines = [f"{KERNEL_MAGIC} {KERNEL_VERSION}",
             f"variant = {kernel.variant.value}",
             "strips = " + " ".join(format(e, ".17g") for e in kernel.strips)]
    if kernel.variant is Variant.MATRIX:
        lines.append(f"level = {kernel.level}")
        for i, mat in enumerate(kernel.masses):
            lines.append(f"matrix {i}")
            for row in mat:
                lines.append(" ".join(format(v, ".17g") for v in row))
    return "\n".join(lines) + "\n"


def parse_kernel_spec(text: str) -> ReflectionKernel:
    """Parse the kernel spec format documented in the README."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if not rows:
        raise KernelError("empty kernel spec")
    lineno, head = rows[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != KERNEL_MAGIC:
        raise KernelError(f"line {lineno}: expected '{KERNEL_MAGIC} <version>'")
    if parts[1] != str(KERNEL_VERSION):
        raise KernelError(f"line {lineno}: unsupported version {parts[1]}")
    header = {}
    blocks = {}
    current = None
    for lineno, line in rows[1:]:
        if "=" in line and current is None:
            key, val = (s.strip() for s in line.split("=", 1))
            header[key] = val
        elif line.startswith("matrix"):
            try:
                current = int(line.split()[1])
            except (IndexError, ValueError):
                raise KernelError(f"line {lineno}: expected 'matrix <strip>'") from None
            blocks[current] = []
        elif current is not None:
            try:
                blocks[current].append([float(v) for v in line.split()])
            except ValueError:
                raise KernelError(f"line {lineno}: bad matrix row") from None
        else:
            raise KernelError(f"line {lineno}: unexpected content {line!r}")
    try:
        variant = Variant(header.get("variant", ""))
    except ValueError:
        raise KernelError(f"unknown variant {header.get('variant')!r}") from None
    strips = tuple(float(v) for v in header.get("strips", "0 1").split())
    if variant is not Variant.MATRIX:
        return ReflectionKernel(variant, strips)
    if "level" not in header:
        raise KernelError("matrix kernel requires 'level'")
    level = int(header["level"])
    masses = []
    for i in range(len(strips) - 1):
        if i not in blocks:
            raise KernelError(f"missing matrix block for strip {i}")
        masses.append(np.array(blocks[i], dtype=float))
    return ReflectionKernel(variant, strips, level, tuple(masses))


def load_kernel(path) -> ReflectionKernel:
    with open(path, encoding="utf-8") as fh:
        return parse_kernel_spec(fh.read())
