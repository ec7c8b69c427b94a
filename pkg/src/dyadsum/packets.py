"""Mother bump and tile wave packets.

The bump has a tensor Fourier transform ``prod_j rho(xi_j)`` with
``rho(u) = exp(-1 / (1 - (10 u)^2))`` on ``|u| < 1/10``.  Because rho is
smooth and vanishes to all orders at the edge of its support, the trapezoid
rule for the inverse transform is exact up to periodization with period
``1/step``; the node count is chosen so that period is far beyond any
evaluation point.

Packets are separable: ``phi_s(x) = prod_j a_j(x_j)`` with
``a_j(y) = l^{-1/2} phi1((y - c_j) / l) exp(2 pi i xi_j y)`` where ``l`` is the
side of I_s and ``xi`` the center of the first semi-tile.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .field import Grid, SampledField
from .geometry import Tile

SUPPORT = 0.1
# Per-axis truncation radius in units of the tile side.  Chosen so the
# discarded L^2 tail of phi1 is below 1e-8 (about 7e-9 at 110).
R_TRUNC = 110.0
_CHUNK = 1 << 22


def rho(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < SUPPORT
    t = 10.0 * u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - t * t))
    return out


def bump_hat(xi) -> float | np.ndarray:
    """prod_j rho(xi_j); ``xi`` may be a point or an array with last axis = dim."""
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        return float(rho(xi))
    val = np.prod(rho(xi), axis=-1)
    return float(val) if val.ndim == 0 else val


def _nodes_for(extent: float) -> int:
    # trapezoid period 10*Q must clear 2*extent plus a margin where phi1 < 1e-12
    return max(256, int(math.ceil((2.0 * extent + 6000.0) / 10.0)))


def mother_1d(x, nodes: int | None = None) -> np.ndarray:
    """phi1(x) = int rho(xi) cos(2 pi x xi) d xi (real and even)."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    Q = nodes or _nodes_for(float(np.max(np.abs(flat))) if flat.size else 0.0)
    step = SUPPORT / Q
    xi = step * np.arange(1, Q)
    w = rho(xi)
    keep = w > 0
    xi, w = xi[keep], w[keep]
    out = np.empty(flat.size)
    rows = max(1, _CHUNK // max(1, xi.size))
    r0 = math.exp(-1.0)
    for a in range(0, flat.size, rows):
        blk = flat[a : a + rows]
        out[a : a + rows] = step * (r0 + 2.0 * np.cos(2 * np.pi * np.outer(blk, xi)) @ w)
    return out.reshape(x.shape)


@lru_cache(maxsize=None)
def mother_l2_sq_1d() -> float:
    """||phi1||_2^2 = int rho^2 (Parseval), by the same exact trapezoid rule."""
    Q = 4096
    xi = SUPPORT / Q * np.arange(-Q + 1, Q)
    return float(SUPPORT / Q * np.sum(rho(xi) ** 2))


def mother_l2(dim: int) -> float:
    """||phi||_2 for the tensor bump in the given dimension."""
    return mother_l2_sq_1d() ** (dim / 2)


class ResolutionError(ValueError):
    pass


class NyquistError(ValueError):
    pass


def synthesize_mother(grid: Grid) -> SampledField:
    """phi on the grid by inverse DFT of bump_hat sampled at k / side.

    The result is the periodization of phi with the box as period cell.
    """
    axes = []
    for j in range(grid.dim):
        n = grid.points_per_axis
        L = grid.upper[j] - grid.lower[j]
        h = grid.spacing[j]
        k = np.fft.fftfreq(n, d=1.0 / n)
        xi = k / L
        inside = np.count_nonzero(np.abs(xi) < SUPPORT)
        if inside < 64:
            raise ResolutionError(
                f"axis {j}: only {inside} frequency samples inside the bump support (need 64)"
            )
        if SUPPORT >= 0.5 / h:
            raise ResolutionError(f"axis {j}: bump support exceeds the Nyquist band")
        coef = rho(xi) * np.exp(2j * np.pi * xi * (grid.lower[j] + 0.5 * h))
        axes.append(np.fft.ifft(coef) * n / L)
    samples = axes[0]
    for a in axes[1:]:
        samples = np.multiply.outer(samples, a)
    return SampledField(grid, samples)


@dataclass(frozen=True, eq=False)
class WavePacket:
    tile: Tile
    grid: Grid
    factors: tuple

    @property
    def samples(self) -> SampledField:
        out = self.factors[0]
        for a in self.factors[1:]:
            out = np.multiply.outer(out, a)
        return SampledField(self.grid, out)


class PacketBank:
    """Evaluates packets of many tiles on one grid, with per-scale tables.

    When the tile side is a multiple of the cell size and the grid is
    dyadically aligned, the envelope samples of every tile at a given scale
    are slices of one lattice table.  Tables are built under a lock and are
    read-only afterwards.
    """

    def __init__(self, grid: Grid, truncation: float | None = R_TRUNC):
        self.grid = grid
        self.truncation = truncation
        self._lock = threading.Lock()
        self._tables: dict = {}
        try:
            self._offset = grid.cell_offset()
            self._level = grid.dyadic_level()
        except ValueError:
            self._offset = None
            self._level = None

    # -- envelopes ------------------------------------------------------
    def _table(self, axis: int, scale: int, o_lo: int, o_hi: int):
        ratio = 2 ** (scale - self._level)
        key = (axis, scale)
        with self._lock:
            have = self._tables.get(key)
            if self.truncation is not None:
                if have is not None:
                    return have
                # entries beyond the truncation radius are zero anyway
                lim = int(math.ceil(self.truncation * ratio + ratio)) + 1
                o_lo, o_hi = -lim, lim
            elif have is not None:
                if have[0] <= o_lo and have[0] + have[1].size >= o_hi:
                    return have
                o_lo = min(o_lo, have[0])
                o_hi = max(o_hi, have[0] + have[1].size)
            o = np.arange(o_lo, o_hi)
            u = (o + 0.5 - 0.5 * ratio) / ratio
            vals = mother_1d(u) if u.size else u
            if self.truncation is not None:
                vals = np.where(np.abs(u) <= self.truncation, vals, 0.0)
            entry = (o_lo, vals)
            self._tables[key] = entry
            return entry

    def envelopes(self, axis: int, scale: int, index: np.ndarray) -> np.ndarray:
        """phi1((x - c) / l) for cubes with the given per-axis indices, shape (T, N)."""
        n = self.grid.points_per_axis
        index = np.asarray(index, dtype=np.int64)
        side = 2.0**scale
        if self._level is not None and scale >= self._level:
            ratio = 2 ** (scale - self._level)
            start = self._offset[axis] - index * ratio
            o_lo, table = self._table(axis, scale, int(start.min()), int(start.max()) + n)
            idx = (start - o_lo)[:, None] + np.arange(n)[None, :]
            valid = (idx >= 0) & (idx < table.size)
            return np.where(valid, table[np.clip(idx, 0, max(table.size - 1, 0))] if table.size else 0.0, 0.0)
        x = self.grid.axis_centers(axis)
        u = (x[None, :] - (index[:, None] + 0.5) * side) / side
        vals = mother_1d(u)
        if self.truncation is not None:
            vals = np.where(np.abs(u) <= self.truncation, vals, 0.0)
        return vals

    # -- packets --------------------------------------------------------
    def check(self, tiles: Sequence[Tile], shift=None) -> None:
        box = self.grid.box
        for s in tiles:
            if s.dim != self.grid.dim:
                raise ValueError("tile dimension does not match grid")
            xi = _frequencies([s], shift)[0]
            l = s.time.side
            for j, f in enumerate(xi):
                if abs(f) + SUPPORT / l >= self.grid.nyquist[j]:
                    raise NyquistError(f"tile {s} modulation {f} not resolved by spacing {self.grid.spacing[j]}")
            if self.truncation is not None:
                sup = s.time.dilate(2.0 * self.truncation)
                if not sup.intersects(box):
                    raise ValueError(f"tile {s} support misses the grid box")

    def factors(self, tiles: Sequence[Tile], shift=None) -> list[np.ndarray]:
        """Per-axis complex factor matrices, each of shape (len(tiles), N)."""
        tiles = list(tiles)
        self.check(tiles, shift)
        T = len(tiles)
        n = self.grid.points_per_axis
        out = [np.zeros((T, n), dtype=np.complex128) for _ in range(self.grid.dim)]
        if not T:
            return out
        scales = np.array([s.scale for s in tiles])
        idx = np.array([s.time.index for s in tiles], dtype=np.int64)
        xi = _frequencies(tiles, shift)
        for k in np.unique(scales):
            sel = np.nonzero(scales == k)[0]
            amp = 2.0 ** (-0.5 * int(k))
            for j in range(self.grid.dim):
                env = self.envelopes(j, int(k), idx[sel, j])
                x = self.grid.axis_centers(j)
                # few distinct frequencies per scale: exponentiate each once
                fu, back = np.unique(xi[sel, j], return_inverse=True)
                mod = np.exp(2j * np.pi * np.outer(fu, x))
                out[j][sel] = (amp * env) * mod[back.reshape(-1)]
        return out

    def samples(self, tiles: Sequence[Tile], shift=None) -> np.ndarray:
        """Dense packet samples, shape (len(tiles), *grid.shape)."""
        fac = self.factors(tiles, shift)
        return _outer_rows(fac)

    def packet(self, s: Tile, shift=None) -> WavePacket:
        fac = self.factors([s], shift)
        return WavePacket(s, self.grid, tuple(a[0] for a in fac))

    def coefficients(self, f: SampledField, tiles: Sequence[Tile], shift=None, chunk: int = 512) -> np.ndarray:
        """<f, phi_s> for every tile."""
        if f.grid != self.grid:
            raise ValueError("field is on a different grid")
        tiles = list(tiles)
        out = np.empty(len(tiles), dtype=np.complex128)
        hv = self.grid.cell_volume
        for a in range(0, len(tiles), chunk):
            fac = self.factors(tiles[a : a + chunk], shift)
            out[a : a + chunk] = _contract(f.samples, [np.conj(m) for m in fac]) * hv
        return out

    def coefficients_masked(self, masks: np.ndarray, tiles: Sequence[Tile], shift=None) -> np.ndarray:
        """<chi_{A_s}, phi_s> where A_s is the boolean cell mask masks[s]."""
        tiles = list(tiles)
        out = np.empty(len(tiles), dtype=np.complex128)
        hv = self.grid.cell_volume
        step = max(1, (1 << 20) // self.grid.size)
        for a in range(0, len(tiles), step):
            dense = self.samples(tiles[a : a + step], shift)
            m = masks[a : a + step].reshape(dense.shape[0], -1)
            out[a : a + step] = np.sum(np.conj(dense.reshape(dense.shape[0], -1)) * m, axis=1) * hv
        return out


def _frequencies(tiles: Sequence[Tile], shift=None) -> np.ndarray:
    xi = np.array([s.modulation() for s in tiles], dtype=float).reshape(len(tiles), -1)
    if shift is not None:
        xi = xi - np.asarray(shift, dtype=float)[None, :]
    return xi


def _outer_rows(fac: list[np.ndarray]) -> np.ndarray:
    out = fac[0]
    for a in fac[1:]:
        out = out[..., None] * a.reshape((a.shape[0],) + (1,) * (out.ndim - 1) + (a.shape[1],))
    return out


def _contract(f: np.ndarray, fac: list[np.ndarray]) -> np.ndarray:
    """sum_x f(x) prod_j fac_j[t, x_j] for every row t."""
    letters = "abcdefgh"[: f.ndim]
    spec = ",".join(f"t{c}" for c in letters) + f",{letters}->t"
    return np.einsum(spec, *fac, f, optimize=True)


@lru_cache(maxsize=32)
def get_bank(grid: Grid, truncation: float | None = R_TRUNC) -> PacketBank:
    return PacketBank(grid, truncation)


def wave_packet(s: Tile, grid: Grid, truncation: float | None = R_TRUNC, shift=None) -> WavePacket:
    return get_bank(grid, truncation).packet(s, shift)
