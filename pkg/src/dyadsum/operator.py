"""Evaluation of D_r f, the restricted pairing and its split, and 1-D partial sums.

Fast path: at a fixed scale every tile whose semi-tile omega_{s(r)} equals
the dyadic cube containing N(x) contributes at x, and these tiles share one
frequency cube, so they are grouped by that cube and evaluated only on the
cells that select it.  The oracle sums every packet densely with its mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .field import ChoiceMap, Grid, SampledField
from .geometry import Tile, _check_r
from .maximal import ExceptionalSet
from .packets import R_TRUNC, get_bank
from .trees import dual_coefficients


@dataclass
class TileSystem:
    D: list
    r: int
    N: ChoiceMap
    grid: Grid
    truncation: float | None = R_TRUNC
    amplitude: float = 1.0  # multiplies the mother bump; D_r scales by its square
    groups: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.D = sorted(dict.fromkeys(self.D), key=Tile.sort_key)
        if self.N.grid != self.grid:
            raise ValueError("choice map lives on a different grid")
        if self.D:
            _check_r(self.r, self.grid.dim)
        seen = set()
        groups: dict = {}
        for i, s in enumerate(self.D):
            if s.dim != self.grid.dim:
                raise ValueError("tile dimension does not match grid")
            key = (s.time, s.semi(self.r))
            if key in seen:
                raise ValueError(f"two tiles of D_J share omega_(s(r)) at {s}")
            seen.add(key)
            groups.setdefault(s.scale, []).append(i)
        self.groups = {}
        for k, idx in groups.items():
            by_sig: dict = {}
            for pos, i in enumerate(idx):
                by_sig.setdefault(self.D[i].semi(self.r).index, []).append(pos)
            self.groups[k] = (np.array(idx), by_sig)
        get_bank(self.grid, self.truncation).check(self.D)

    @property
    def bank(self):
        return get_bank(self.grid, self.truncation)

    def coefficients(self, f: SampledField) -> np.ndarray:
        return self.bank.coefficients(f, self.D) if self.D else np.zeros(0, complex)

    def subsystem(self, keep: Sequence[bool]) -> TileSystem:
        return TileSystem([s for s, k in zip(self.D, keep) if k], self.r, self.N, self.grid, self.truncation, self.amplitude)


def _check_field(sys: TileSystem, f: SampledField) -> None:
    if f.grid != sys.grid:
        raise ValueError("field lives on a different grid")


def scale_parts(sys: TileSystem, f: SampledField, coeffs: np.ndarray | None = None) -> list:
    """[(scale, contribution array)] in ascending scale, without the amplitude factor."""
    _check_field(sys, f)
    grid = sys.grid
    n = grid.dim
    if not sys.D:
        return []
    a = sys.coefficients(f) if coeffs is None else coeffs
    parts = []
    for k in sorted(sys.groups):
        idx, by_sig = sys.groups[k]
        fac = sys.bank.factors([sys.D[i] for i in idx])
        out = np.zeros(grid.size, dtype=np.complex128)
        # bucket cells by the dyadic cube of scale -k-1 that contains N(x)
        keys = sys.N.cube_index(-k - 1).reshape(-1, n)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        order = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
        hits = np.zeros(grid.size, dtype=np.int64)
        for b, u in enumerate(uniq):
            pos = by_sig.get(tuple(int(v) for v in u))
            if pos is None:
                continue
            cells = order[bounds[b] : bounds[b + 1]]
            coords = np.unravel_index(cells, grid.shape)
            vals = fac[0][pos][:, coords[0]]
            for j in range(1, n):
                vals = vals * fac[j][pos][:, coords[j]]
            out[cells] += a[idx[pos]] @ vals
            hits[cells] += 1
        if hits.max(initial=0) > 1:
            raise AssertionError("more than one semi-tile cube selected per cell and scale")
        parts.append((k, out.reshape(grid.shape)))
    return parts


def apply_fast(sys: TileSystem, f: SampledField, coeffs: np.ndarray | None = None) -> SampledField:
    out = np.zeros(sys.grid.shape, dtype=np.complex128)
    for _, part in scale_parts(sys, f, coeffs):
        out += part
    out *= sys.amplitude**2
    return SampledField(sys.grid, out)


def apply_oracle(sys: TileSystem, f: SampledField) -> SampledField:
    """Direct full sum: every packet, densely, times chi_{omega_s(r)}(N(x))."""
    _check_field(sys, f)
    out = np.zeros(sys.grid.shape, dtype=np.complex128)
    hv = sys.grid.cell_volume
    ordered = sorted(sys.D, key=lambda s: (s.scale, s.sort_key()))
    for s in ordered:
        phi = sys.bank.packet(s).samples.samples
        c = np.sum(f.samples * np.conj(phi)) * hv
        mask = sys.N.in_cube(s.semi(sys.r))
        out += np.where(mask, c * phi, 0)
    return SampledField(sys.grid, out * sys.amplitude**2)


def apply_Dr(sys: TileSystem, f: SampledField, oracle: bool = False) -> SampledField:
    return apply_oracle(sys, f) if oracle else apply_fast(sys, f)


def restricted_pairing(sys: TileSystem, F: SampledField, Emask: np.ndarray, Df: SampledField | None = None) -> complex:
    """int_{E'} D_r(chi_F)."""
    Emask = np.asarray(Emask, bool)
    if not Emask.any():
        return 0j
    Df = apply_fast(sys, F) if Df is None else Df
    return complex(np.sum(Df.samples[Emask]) * sys.grid.cell_volume)


def bilinear_terms(sys: TileSystem, F: SampledField, Emask: np.ndarray, coeffs: np.ndarray | None = None) -> np.ndarray:
    """|<chi_F, phi_s>| |<chi_{E' cap N^-1[omega_s(r)]}, phi_s>| per tile."""
    if not sys.D:
        return np.zeros(0)
    a = sys.coefficients(F) if coeffs is None else coeffs
    b = dual_coefficients(sys.D, Emask, sys.N, sys.r, sys.grid, sys.truncation)
    return np.abs(a) * np.abs(b) * sys.amplitude**2


@dataclass
class SplitPairing:
    inside_sum: complex
    outside_bilinear: float
    n_inside: int
    n_outside: int
    total: complex

    @property
    def bound(self) -> float:
        return abs(self.inside_sum) + self.outside_bilinear


def split_pairing(sys: TileSystem, F: SampledField, Emask: np.ndarray, omega: ExceptionalSet) -> SplitPairing:
    """Tiles with I_s in Omega go to the pairing side, the rest to the absolute bilinear side."""
    Emask = np.asarray(Emask, bool)
    inside = np.array([omega.contains_cube(s.time) for s in sys.D], dtype=bool)
    a = sys.coefficients(F)
    Df = apply_fast(sys, F, a)
    total = restricted_pairing(sys, F, Emask, Df)
    sub_in = sys.subsystem(inside)
    ins = restricted_pairing(sub_in, F, Emask, apply_fast(sub_in, F, a[inside])) if inside.any() else 0j
    if (~inside).any():
        sub_out = sys.subsystem(~inside)
        outside = float(bilinear_terms(sub_out, F, Emask, a[~inside]).sum())
    else:
        outside = 0.0
    return SplitPairing(ins, outside, int(inside.sum()), int((~inside).sum()), total)


# -- 1-D partial Fourier sums -------------------------------------------------------


def _freqs(f: SampledField) -> np.ndarray:
    if f.grid.dim != 1:
        raise ValueError("partial sums are one-dimensional")
    return np.fft.fftfreq(f.grid.points_per_axis, d=f.grid.spacing[0])


def fft_partial_sum(f: SampledField, N: float) -> SampledField:
    """Sharp cutoff |xi| <= N of the grid DFT."""
    xi = _freqs(f)
    F = np.fft.fft(f.samples)
    return SampledField(f.grid, np.fft.ifft(np.where(np.abs(xi) <= N, F, 0)))


def carleson_sup(f: SampledField, N_grid: Sequence[float] | None = None) -> SampledField:
    """max over N in the grid of |S_N f| pointwise; default grid = every bin edge |xi|."""
    xi = _freqs(f)
    F = np.fft.fft(f.samples)
    levels = np.unique(np.abs(xi)) if N_grid is None else np.sort(np.asarray(N_grid, dtype=float))
    n = f.grid.points_per_axis
    x = np.arange(n)
    mag = np.abs(xi)
    order = np.argsort(mag, kind="stable")
    S = np.zeros(n, dtype=np.complex128)
    best = np.zeros(n)
    pos = 0
    for N in levels:
        while pos < n and mag[order[pos]] <= N:
            b = order[pos]
            S += F[b] * np.exp(2j * np.pi * b * x / n) / n
            pos += 1
        np.maximum(best, np.abs(S), out=best)
    return SampledField(f.grid, best)
