"""Hardy-Littlewood maximal function, the exceptional set and shell families.

The maximal function is discrete: the supremum of averages over axis-aligned
cubes made of whole grid cells that contain the cell, with the field
extended by zero outside the box.  The default family admits every cell
width (so every grid-aligned cube, dyadic or not, is a competitor); the
``"sqrt2"`` family keeps a geometric ladder of widths (all powers of two
included) and is cheaper.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .field import Grid, SampledField
from .geometry import Box, DyadicCube


def _widths(n: int, family: str) -> list[int]:
    if family == "all":
        return list(range(1, n + 1))
    if family == "sqrt2":
        ws = {1}
        j = 0
        while True:
            w = int(round(math.sqrt(2.0) ** j))
            if w > n:
                break
            ws.add(w)
            j += 1
        return sorted(ws)
    raise ValueError(f"unknown cube family {family!r}")


def _sat(a: np.ndarray) -> np.ndarray:
    s = a
    for ax in range(a.ndim):
        s = np.cumsum(s, axis=ax)
        s = np.concatenate([np.zeros_like(s.take([0], axis=ax)), s], axis=ax)
    return s


def _window_sums(S: np.ndarray, w: int, start: int, stop: int) -> np.ndarray:
    """Sums over cubes of width w whose first cell lies in [start, stop) per axis."""
    n = S.ndim
    out = 0
    for corner in itertools.product((0, 1), repeat=n):
        sl = tuple(slice(start + c * w, stop + c * w) for c in corner)
        sign = (-1) ** (n - sum(corner))
        out = out + sign * S[sl]
    return out


def _trailing_max(a: np.ndarray, w: int) -> np.ndarray:
    for ax in range(a.ndim):
        a = maximum_filter1d(a, w, axis=ax, mode="constant", cval=-np.inf, origin=(w - 1) // 2)
    return a


def hl_maximal(f: SampledField, family: str = "all", centered: bool = False) -> SampledField:
    """Maximal averages of a nonnegative field at every cell.

    ``centered=True`` restricts to cubes centered at the cell (odd widths).
    """
    a = f.samples
    if np.any(a.imag != 0) or np.any(a.real < 0):
        raise ValueError("maximal function needs a nonnegative real field")
    a = a.real
    n = f.grid.points_per_axis
    pad = 2 * n if centered else n
    S = _sat(np.pad(a, pad))
    best = np.zeros(f.grid.shape)
    if centered:
        widths = [w for w in _widths(2 * n - 1, family) if w % 2 == 1]
        for w in widths:
            j = w // 2
            sums = _window_sums(S, w, pad - j, pad - j + n)
            np.maximum(best, sums / w**f.grid.dim, out=best)
    else:
        for w in _widths(n, family):
            lo = pad - w + 1
            sums = _window_sums(S, w, lo, pad + n) / w**f.grid.dim
            m = _trailing_max(sums, w)
            sl = tuple(slice(w - 1, w - 1 + n) for _ in range(f.grid.dim))
            np.maximum(best, m[sl], out=best)
    return SampledField(f.grid, best)


def choose_q(p: float, ratio: float) -> float:
    """q in [1, p) when |F| <= |E|, q = inf otherwise."""
    if not 1 < p < math.inf:
        raise ValueError("p must lie in (1, inf)")
    if ratio <= 0:
        raise ValueError("ratio must be positive")
    return (1.0 + p) / 2.0 if ratio <= 1 else math.inf


def inv(q: float) -> float:
    return 0.0 if math.isinf(q) else 1.0 / q


# -- dyadic cubes inside a cell mask ----------------------------------------


@dataclass
class DyadicLevels:
    """For each level j (cube side 2^j cells): which dyadic cubes lie in the mask."""

    grid: Grid
    full: list  # full[j]: bool array over blocks
    origin: list  # origin[j]: absolute block index of full[j][0, ..., 0]

    def cube(self, j: int, block: Sequence[int]) -> DyadicCube:
        scale = self.grid.dyadic_level() + j
        return DyadicCube(scale, tuple(int(o + b) for o, b in zip(self.origin[j], block)))

    def cubes(self, j: int) -> list[DyadicCube]:
        return [self.cube(j, b) for b in np.argwhere(self.full[j])]

    def maximal(self) -> list[DyadicCube]:
        out = []
        for j, full in enumerate(self.full):
            if j + 1 < len(self.full):
                parent = self.full[j + 1]
                up = parent
                for ax in range(full.ndim):
                    up = np.repeat(up, 2, axis=ax)
                keep = full & ~up
            else:
                keep = full
            out += [self.cube(j, b) for b in np.argwhere(keep)]
        return sorted(out)


def dyadic_levels(grid: Grid, mask: np.ndarray) -> DyadicLevels:
    offset = grid.cell_offset()
    n = grid.points_per_axis
    J = int(math.log2(n)) + 1
    B = 1 << J
    pads, starts = [], []
    for a0 in offset:
        left = a0 % B
        total = left + n
        right = (-total) % B
        pads.append((left, right))
        starts.append(a0 - left)
    cur = np.pad(mask.astype(bool), pads, constant_values=False)
    full = [cur]
    origin = [tuple(starts)]
    for j in range(1, J + 1):
        shp = []
        for s in cur.shape:
            shp += [s // 2, 2]
        cur = cur.reshape(shp).all(axis=tuple(range(1, 2 * cur.ndim, 2)))
        full.append(cur)
        origin.append(tuple(s >> j for s in starts))
    return DyadicLevels(grid, full, origin)


def whitney_cubes(grid: Grid, mask: np.ndarray) -> list[DyadicCube]:
    """Maximal dyadic cubes (of at least one cell) whose cells all lie in the mask."""
    if not mask.any():
        return []
    return dyadic_levels(grid, mask).maximal()


@dataclass
class ExceptionalSet:
    q: float
    threshold: float
    cells: np.ndarray
    grid: Grid
    whitney: list = field(default_factory=list)
    maximal: SampledField | None = None

    def __post_init__(self):
        self._count = _sat(self.cells.astype(np.int64))

    @property
    def measure(self) -> float:
        return float(self.cells.sum() * self.grid.cell_volume)

    @property
    def empty(self) -> bool:
        return not self.cells.any()

    def touches_boundary(self) -> bool:
        m = self.cells
        for ax in range(m.ndim):
            if m.take(0, axis=ax).any() or m.take(-1, axis=ax).any():
                return True
        return False

    def contains_box(self, box: Box) -> bool:
        """Every cell center of ``box`` is a cell of Omega; cells outside the
        grid box count as outside Omega, and a box with no cell centers is not
        considered contained."""
        ranges, clipped = self.grid.box_index_range(box)
        if clipped or any(b <= a for a, b in ranges):
            return False
        count = _box_count(self._count, ranges)
        return count == math.prod(b - a for a, b in ranges)

    def contains_cube(self, cube: DyadicCube) -> bool:
        return self.contains_box(cube.as_box())

    def meets_box(self, box: Box) -> bool:
        ranges, _ = self.grid.box_index_range(box)
        if any(b <= a for a, b in ranges):
            return False
        return _box_count(self._count, ranges) > 0

    def to_json(self) -> dict:
        return {
            "q": "inf" if math.isinf(self.q) else self.q,
            "threshold": self.threshold,
            "whitney": [c.to_json() for c in self.whitney],
            "measure": self.measure,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _box_count(S: np.ndarray, ranges) -> int:
    n = S.ndim
    total = 0
    for corner in itertools.product((0, 1), repeat=n):
        idx = tuple(r[c] for r, c in zip(ranges, corner))
        total += (-1) ** (n - sum(corner)) * int(S[idx])
    return total


def level_set(F: SampledField, threshold: float, q: float = math.inf, family: str = "all", M: SampledField | None = None) -> ExceptionalSet:
    """{M chi_F > threshold} with its Whitney cubes (``M`` reuses a computed maximal function)."""
    M = hl_maximal(F, family=family) if M is None else M
    cells = M.samples.real > threshold
    wh = whitney_cubes(F.grid, cells) if F.grid.is_dyadic() else []
    return ExceptionalSet(q, threshold, cells, F.grid, wh, M)


def exceptional_set(F: SampledField, E_measure: float, p: float, kappa: float = 1.0, family: str = "all",
                    M: SampledField | None = None, q: float | None = None) -> ExceptionalSet:
    """Omega = {M chi_F > kappa (2|F|/|E|)^(1/q)} with q from :func:`choose_q` unless given.

    ``kappa`` stands in for the weak-type norm of M, which has no closed form.
    """
    Fm = F.measure()
    if Fm == 0:
        return ExceptionalSet(choose_q(p, 1.0) if q is None else q, math.inf, np.zeros(F.grid.shape, dtype=bool), F.grid, [], None)
    ratio = Fm / E_measure
    q = choose_q(p, ratio) if q is None else q
    threshold = kappa * (2.0 * ratio) ** inv(q)
    return level_set(F, threshold, q, family, M)


def infimum_over(M: SampledField, box: Box) -> float:
    """min of M over cells whose centers lie in box (clipped to the grid)."""
    sl, _ = M.grid.box_slices(box)
    vals = M.samples.real[sl]
    return float(vals.min()) if vals.size else math.nan


# -- shell families -----------------------------------------------------------


@dataclass
class ShellFamily:
    k: int
    cubes: list
    maximal: list

    @property
    def total_measure(self) -> float:
        return float(sum(c.volume for c in self.cubes))


def shell_index(J: DyadicCube, omega: ExceptionalSet, k_max: int = 64) -> int | None:
    """The k with 2^k J in Omega and 2^(k+1) J not in Omega, or None."""
    if not omega.contains_cube(J):
        return None
    k = 0
    while k < k_max and omega.contains_box(J.dilate(2.0 ** (k + 1))):
        k += 1
    return k


def maximal_under_inclusion(cubes: Iterable[DyadicCube]) -> list[DyadicCube]:
    cubes = sorted(set(cubes), key=lambda c: -c.scale)
    present = set(cubes)
    top = max((c.scale for c in cubes), default=0)
    out = []
    for c in cubes:
        if not any(c.ancestor(s) in present for s in range(c.scale + 1, top + 1)):
            out.append(c)
    return sorted(out)


def shell_families(cubes: Iterable[DyadicCube], omega: ExceptionalSet, k_max: int | None = None) -> list[ShellFamily]:
    """F_k for k = 0..k_max among the given cubes."""
    if k_max is None:
        k_max = int(math.log2(omega.grid.points_per_axis)) + 2
    buckets: dict[int, list] = {k: [] for k in range(k_max + 1)}
    for J in set(cubes):
        k = shell_index(J, omega, k_max + 1)
        if k is not None and k <= k_max:
            buckets[k].append(J)
    return [ShellFamily(k, sorted(v), maximal_under_inclusion(v)) for k, v in buckets.items()]


def cubes_in_omega(omega: ExceptionalSet, min_level: int = 0) -> list[DyadicCube]:
    """All dyadic cubes (sides of at least 2^min_level cells) contained in Omega."""
    if omega.empty:
        return []
    lv = dyadic_levels(omega.grid, omega.cells)
    out = []
    for j in range(min_level, len(lv.full)):
        out += lv.cubes(j)
    return out
