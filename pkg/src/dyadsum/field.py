"""Uniform grids, sampled fields, quadrature and the choice map N.

Samples live at cell centers (midpoint rule).  Integrals treat the box as a
subset of R^n with the function extended by zero outside it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import Box, DyadicCube


@dataclass(frozen=True)
class Grid:
    dim: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points_per_axis: int

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError("box bounds must have one entry per axis")
        n = self.points_per_axis
        if n < 1 or n & (n - 1):
            raise ValueError("points_per_axis must be a power of two")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("empty box")

    @classmethod
    def centered(cls, dim: int, half_width: float, points_per_axis: int) -> Grid:
        return cls(dim, (-half_width,) * dim, (half_width,) * dim, points_per_axis)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((u - l) / self.points_per_axis for l, u in zip(self.lower, self.upper))

    @property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @property
    def volume(self) -> float:
        return math.prod(u - l for l, u in zip(self.lower, self.upper))

    @property
    def box(self) -> Box:
        return Box(self.lower, self.upper)

    @property
    def nyquist(self) -> tuple[float, ...]:
        return tuple(0.5 / h for h in self.spacing)

    def axis_centers(self, j: int) -> np.ndarray:
        h = self.spacing[j]
        return self.lower[j] + (np.arange(self.points_per_axis) + 0.5) * h

    def centers(self) -> np.ndarray:
        """Cell centers, shape (*shape, dim)."""
        axes = [self.axis_centers(j) for j in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def refine(self, factor: int = 2) -> Grid:
        return Grid(self.dim, self.lower, self.upper, self.points_per_axis * factor)

    # -- dyadic alignment -------------------------------------------------
    def dyadic_level(self) -> int:
        """Integer a with spacing 2^a on every axis; raises if not dyadic."""
        levels = set()
        for h in self.spacing:
            a = round(math.log2(h))
            if 2.0**a != h:
                raise ValueError("grid spacing is not a power of two")
            levels.add(a)
        if len(levels) != 1:
            raise ValueError("grid spacing differs between axes")
        return levels.pop()

    def cell_offset(self) -> tuple[int, ...]:
        """Absolute dyadic index of the first cell on each axis."""
        a = self.dyadic_level()
        out = []
        for lo in self.lower:
            q = lo / 2.0**a
            if q != round(q):
                raise ValueError("box lower corner is not aligned with the cells")
            out.append(int(round(q)))
        return tuple(out)

    def is_dyadic(self) -> bool:
        try:
            self.cell_offset()
        except ValueError:
            return False
        return True

    def box_index_range(self, box: Box) -> tuple[list[tuple[int, int]], bool]:
        """Cells whose centers lie in ``box``: per-axis [start, stop) and whether
        ``box`` pokes outside the grid (clipped)."""
        ranges = []
        clipped = False
        n = self.points_per_axis
        for lo, hi, glo, h in zip(box.lower, box.upper, self.lower, self.spacing):
            a = math.ceil((lo - glo) / h - 0.5)
            b = math.ceil((hi - glo) / h - 0.5)
            if a < 0 or b > n:
                clipped = True
            ranges.append((max(a, 0), min(max(b, 0), n)))
        return ranges, clipped

    def box_slices(self, box: Box) -> tuple[tuple[slice, ...], bool]:
        ranges, clipped = self.box_index_range(box)
        return tuple(slice(a, max(a, b)) for a, b in ranges), clipped

    def cube_slices(self, cube: DyadicCube) -> tuple[slice, ...]:
        return self.box_slices(cube.as_box())[0]

    def box_mask(self, box: Box) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        sl, _ = self.box_slices(box)
        mask[sl] = True
        return mask


def same_grid(a: Grid, b: Grid) -> bool:
    return a == b


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.shape != self.grid.shape:
            raise ValueError(f"samples shape {arr.shape} != grid shape {self.grid.shape}")
        arr = arr.astype(np.complex128, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def _check(self, other: SampledField) -> None:
        if not same_grid(self.grid, other.grid):
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, SampledField):
            self._check(other)
            return SampledField(self.grid, self.samples + other.samples)
        return SampledField(self.grid, self.samples + other)

    def __sub__(self, other):
        if isinstance(other, SampledField):
            self._check(other)
            return SampledField(self.grid, self.samples - other.samples)
        return SampledField(self.grid, self.samples - other)

    def __mul__(self, c):
        if isinstance(c, SampledField):
            self._check(c)
            return SampledField(self.grid, self.samples * c.samples)
        return SampledField(self.grid, self.samples * c)

    __rmul__ = __mul__

    def __neg__(self):
        return SampledField(self.grid, -self.samples)

    def abs(self) -> np.ndarray:
        return np.abs(self.samples)

    def integral(self) -> complex:
        return complex(self.samples.sum() * self.grid.cell_volume)

    def measure(self) -> float:
        """Measure of the support (cells with nonzero samples)."""
        return float(np.count_nonzero(self.samples) * self.grid.cell_volume)

    def modulate(self, xi: Sequence[float]) -> SampledField:
        """Multiply by exp(2 pi i xi . x)."""
        phase = np.ones(self.grid.shape, dtype=np.complex128)
        for j, f in enumerate(xi):
            e = np.exp(2j * np.pi * f * self.grid.axis_centers(j))
            phase = phase * e.reshape([-1 if i == j else 1 for i in range(self.grid.dim)])
        return SampledField(self.grid, self.samples * phase)


def zeros(grid: Grid) -> SampledField:
    return SampledField(grid, np.zeros(grid.shape))


def indicator(grid: Grid, S) -> SampledField:
    """Indicator of a finite union of boxes/cubes, or of an explicit cell mask.

    A cell belongs to S when its center does.
    """
    if isinstance(S, np.ndarray):
        if S.shape != grid.shape:
            raise ValueError("mask shape does not match grid")
        return SampledField(grid, S.astype(float))
    mask = np.zeros(grid.shape, dtype=bool)
    for piece in S:
        box = piece.as_box() if isinstance(piece, DyadicCube) else piece
        if not grid.box.contains_box(box):
            raise ValueError(f"set piece {box} outside the grid box")
        sl, _ = grid.box_slices(box)
        mask[sl] = True
    return SampledField(grid, mask.astype(float))


def lp_norm(f: SampledField, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(f.samples)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 1:
        return float(a.sum() * f.grid.cell_volume)
    if p == 2:
        return float(math.sqrt(np.vdot(a, a).real * f.grid.cell_volume))
    return float((np.power(a, p).sum() * f.grid.cell_volume) ** (1.0 / p))


def inner(f: SampledField, g: SampledField) -> complex:
    """<f, g> = sum f conj(g) h^n."""
    f._check(g)
    return complex(np.vdot(g.samples, f.samples) * f.grid.cell_volume)


def unitary_dft(f: SampledField) -> np.ndarray:
    return np.fft.fftn(f.samples, norm="ortho")


def l2_norm_fourier(f: SampledField) -> float:
    """L^2 norm computed on the Fourier side (unitary DFT, Parseval)."""
    F = unitary_dft(f)
    return float(math.sqrt(np.vdot(F, F).real * f.grid.cell_volume))


@dataclass(frozen=True, eq=False)
class ChoiceMap:
    """Piecewise-constant N: R^n -> R^n, one frequency point per cell."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.shape == self.grid.shape and self.grid.dim == 1:
            arr = arr[..., None]
        if arr.shape != self.grid.shape + (self.grid.dim,):
            raise ValueError("choice map needs one n-vector per cell")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: Grid, xi: Sequence[float]) -> ChoiceMap:
        return cls(grid, np.broadcast_to(np.asarray(xi, dtype=float), grid.shape + (grid.dim,)))

    def in_cube(self, cube: DyadicCube) -> np.ndarray:
        """Cells x with N(x) in the (half-open) cube."""
        mask = np.ones(self.grid.shape, dtype=bool)
        for j, (lo, hi) in enumerate(zip(cube.lower, cube.upper)):
            v = self.values[..., j]
            mask &= (v >= float(lo)) & (v < float(hi))
        return mask

    def cube_index(self, scale: int) -> np.ndarray:
        """Integer index of the dyadic cube of the given scale containing N(x)."""
        return np.floor(self.values / 2.0**scale).astype(np.int64)


# -- serialization ---------------------------------------------------------

_HEADER = "<qq"


def _write_header(fh, grid: Grid) -> None:
    fh.write(struct.pack(_HEADER, grid.dim, grid.points_per_axis))
    bounds = []
    for lo, hi in zip(grid.lower, grid.upper):
        bounds += [lo, hi]
    fh.write(struct.pack(f"<{2 * grid.dim}d", *bounds))


def _read_header(fh) -> Grid:
    dim, ppa = struct.unpack(_HEADER, fh.read(16))
    bounds = struct.unpack(f"<{2 * dim}d", fh.read(16 * dim))
    return Grid(dim, bounds[0::2], bounds[1::2], ppa)


def write_field(path, f: SampledField) -> None:
    """Header (dim, points_per_axis as int64; lo_j, hi_j as float64 per axis)
    followed by row-major complex128 samples, little endian."""
    with open(path, "wb") as fh:
        _write_header(fh, f.grid)
        fh.write(np.ascontiguousarray(f.samples, dtype="<c16").tobytes())


def read_field(path) -> SampledField:
    with open(path, "rb") as fh:
        grid = _read_header(fh)
        data = np.frombuffer(fh.read(), dtype="<c16")
    return SampledField(grid, data.reshape(grid.shape))


def write_choice(path, N: ChoiceMap) -> None:
    """Same header as fields, then row-major float64 vectors (dim per cell)."""
    with open(path, "wb") as fh:
        _write_header(fh, N.grid)
        fh.write(np.ascontiguousarray(N.values, dtype="<f8").tobytes())


def read_choice(path) -> ChoiceMap:
    with open(path, "rb") as fh:
        grid = _read_header(fh)
        data = np.frombuffer(fh.read(), dtype="<f8")
    return ChoiceMap(grid, data.reshape(grid.shape + (grid.dim,)))


def export_csv(path, f: SampledField) -> None:
    if f.grid.dim != 1:
        raise ValueError("CSV export is for 1-D fields")
    x = f.grid.axis_centers(0)
    with open(path, "w") as fh:
        fh.write("x,re,im,abs\n")
        for xi, v in zip(x, f.samples):
            fh.write(f"{xi!r},{v.real!r},{v.imag!r},{abs(v)!r}\n")


def union_measure(grid: Grid, pieces: Iterable) -> float:
    return indicator(grid, list(pieces)).measure()
