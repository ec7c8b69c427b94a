"""The weight psi_J, the energy of a function on a tile set, and the mass.

Energy is computed per candidate top: for a top t the largest r-tree inside Q
is every s in Q with s <= t and omega_{t(r)} inside omega_{s(r)}, and adding
tiles never lowers the sum, so the sup over r-trees is a max over tops.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geometry as geo
from .field import ChoiceMap, Grid, SampledField, lp_norm
from .geometry import DyadicCube, Tile, Tree
from .packets import R_TRUNC, get_bank


@dataclass(frozen=True)
class WeightParams:
    gamma: int

    def __post_init__(self):
        if self.gamma < 1 or int(self.gamma) != self.gamma:
            raise ValueError("gamma must be a positive integer")

    @classmethod
    def default(cls, dim: int) -> WeightParams:
        return cls(10 if dim == 1 else 12)


def psi_weight(J: DyadicCube, x, gamma: float) -> np.ndarray | float:
    """|J|^{-1/2} (1 + |x - c(J)| / |J|^{1/n})^{-gamma}; x has shape (..., n)."""
    if gamma < 1:
        raise ValueError("gamma must be at least 1")
    x = np.asarray(x, dtype=float)
    c = np.asarray(J.center)
    r = np.sqrt(np.sum((x - c) ** 2, axis=-1))
    out = J.volume**-0.5 * (1.0 + r / J.side) ** (-float(gamma))
    return float(out) if np.ndim(out) == 0 else out


def mass_bound(dim: int, gamma: float) -> float:
    """The integral of (1 + |y|)^{-gamma} over R^n (needs gamma > n)."""
    if gamma <= dim:
        return math.inf
    sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    return sphere * math.gamma(dim) * math.gamma(gamma - dim) / math.gamma(gamma)


# -- energy -------------------------------------------------------------------


@dataclass
class EnergyReport:
    value: float
    witness: Tree | None
    per_top: list = field(default_factory=list)  # (tile, value) in serialization order
    truncation: float | None = R_TRUNC

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "witness": None if self.witness is None else self.witness.to_json(),
            "per_top": [{"top": t.to_json(), "value": v} for t, v in self.per_top],
            "truncation": self.truncation,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _order_index(tiles: Sequence[Tile]) -> np.ndarray:
    return np.array(sorted(range(len(tiles)), key=lambda i: tiles[i].sort_key()), dtype=np.int64)


def top_energies(tiles: Sequence[Tile], sq: np.ndarray, pairs, alive: np.ndarray | None = None) -> np.ndarray:
    """Sum of |<f, phi_s>|^2 over the maximal r-tree under each top, divided by |I_top|.

    ``pairs`` = (below, top) index arrays from :func:`geometry.order_pairs` with r.
    Dead tops get -inf.
    """
    lo, hi = pairs
    T = len(tiles)
    vol = np.array([s.time.volume for s in tiles])
    wts = sq[lo] if alive is None else sq[lo] * alive[lo]
    sums = np.bincount(hi, weights=wts, minlength=T)
    out = sums / vol
    if alive is not None:
        out = np.where(alive, out, -np.inf)
    return out


def energy_from_coefficients(tiles: Sequence[Tile], coeffs: np.ndarray, fnorm: float, r: int, pairs=None) -> EnergyReport:
    tiles = list(tiles)
    if fnorm <= 0:
        raise ValueError("energy of the zero function is undefined")
    if not tiles:
        return EnergyReport(0.0, None, [])
    if pairs is None:
        pairs = geo.order_pairs(tiles, r)
    sq = np.abs(np.asarray(coeffs)) ** 2
    per = np.sqrt(np.maximum(top_energies(tiles, sq, pairs), 0.0)) / fnorm
    order = _order_index(tiles)
    best = int(order[np.argmax(per[order])])
    lo, hi = pairs
    members = [tiles[i] for i in lo[hi == best]]
    return EnergyReport(
        float(per[best]),
        Tree(frozenset(members), tiles[best]),
        [(tiles[i], float(per[i])) for i in order],
    )


def energy(f: SampledField, Q: Sequence[Tile], r: int, grid: Grid | None = None, truncation: float | None = R_TRUNC) -> EnergyReport:
    """E(f; Q) via the maximal r-tree under every top."""
    grid = grid or f.grid
    fnorm = lp_norm(f, 2)
    if fnorm == 0:
        raise ValueError("energy of the zero function is undefined")
    Q = list(dict.fromkeys(Q))
    if not Q:
        return EnergyReport(0.0, None, [], truncation)
    coeffs = get_bank(grid, truncation).coefficients(f, Q)
    rep = energy_from_coefficients(Q, coeffs, fnorm, r)
    rep.truncation = truncation
    return rep


def energy_bruteforce(tiles: Sequence[Tile], coeffs: np.ndarray, fnorm: float, r: int) -> float:
    """Oracle: max over every subset of Q that is an r-tree (with its own top)."""
    tiles = list(tiles)
    T = len(tiles)
    if T == 0:
        return 0.0
    if T > 16:
        raise ValueError("brute force is limited to 16 tiles")
    member = np.array([[geo.rtree_member(s, t, r) for t in tiles] for s in tiles])
    sq = np.abs(np.asarray(coeffs)) ** 2
    vol = np.array([t.time.volume for t in tiles])
    codes = np.arange(1, 1 << T, dtype=np.int64)
    S = ((codes[:, None] >> np.arange(T)[None, :]) & 1).astype(bool)
    outside = S.astype(np.int64) @ (~member).astype(np.int64)  # members of S not under top j
    valid = S & (outside == 0)
    total = S.astype(float) @ sq
    vals = np.where(valid, total[:, None] / vol[None, :], -np.inf)
    best = vals.max()
    return float(math.sqrt(max(best, 0.0)) / fnorm) if np.isfinite(best) else 0.0


# -- mass ---------------------------------------------------------------------


@dataclass
class MassReport:
    value: float
    witness: tuple | None  # (s, u)
    weights: np.ndarray | None = None
    strict: bool = False

    def to_json(self) -> dict:
        w = None
        if self.witness is not None:
            w = {"s": self.witness[0].to_json(), "u": self.witness[1].to_json()}
        return {"value": self.value, "witness": w, "strict": self.strict}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def mass_weights(tiles: Sequence[Tile], Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float, grid: Grid) -> np.ndarray:
    """w(u) = integral over E' cap N^{-1}[omega_{u(r)}] of |I_u|^{-1}(1 + |x - c(I_u)|/l_u)^{-gamma}."""
    tiles = list(tiles)
    out = np.zeros(len(tiles))
    if not tiles or not Emask.any():
        return out
    pts = grid.centers()
    hv = grid.cell_volume
    groups: dict = {}
    for i, u in enumerate(tiles):
        groups.setdefault(u.semi(r), []).append(i)
    for cube, idx in groups.items():
        cells = Emask & N.in_cube(cube)
        if not cells.any():
            continue
        x = pts[cells]  # (P, n)
        idx = np.array(idx)
        c = np.array([tiles[i].time.center for i in idx])
        side = np.array([tiles[i].time.side for i in idx])
        vol = np.array([tiles[i].time.volume for i in idx])
        for a in range(0, len(idx), 256):
            sl = slice(a, a + 256)
            d = np.sqrt(((x[None, :, :] - c[sl, None, :]) ** 2).sum(-1))
            w = (1.0 + d / side[sl, None]) ** (-float(gamma))
            out[idx[sl]] = w.sum(axis=1) * hv / vol[sl]
    return out


def mass_weights_direct(tiles: Sequence[Tile], Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float, grid: Grid) -> np.ndarray:
    """Same quantity, one dense tile at a time (the independent recomputation)."""
    pts = grid.centers()
    out = np.zeros(len(tiles))
    for i, u in enumerate(tiles):
        cells = Emask & N.in_cube(u.semi(r))
        if cells.any():
            w = psi_weight(u.time, pts, gamma) * u.time.volume**-0.5
            out[i] = float(np.sum(w[cells]) * grid.cell_volume)
    return out


def mass_from_weights(tiles: Sequence[Tile], weights: np.ndarray, strict: bool = False, pairs=None) -> MassReport:
    """sup over s <= u of w(u); with strict=True u needs some s != u below it."""
    tiles = list(tiles)
    if not tiles:
        return MassReport(0.0, None, weights, strict)
    order = _order_index(tiles)
    if strict:
        if pairs is None:
            pairs = geo.order_pairs(tiles)
        lo, hi = pairs
        has = np.zeros(len(tiles), dtype=bool)
        has[hi[lo != hi]] = True
        cand = np.where(has, weights, -np.inf)
    else:
        cand = np.asarray(weights, dtype=float)
    u = int(order[np.argmax(cand[order])])
    if not np.isfinite(cand[u]):
        return MassReport(0.0, None, weights, strict)
    s = u
    if strict:
        lo, hi = pairs
        below = sorted((int(i) for i in lo[(hi == u) & (lo != u)]), key=lambda i: tiles[i].sort_key())
        s = below[0]
    return MassReport(float(cand[u]), (tiles[s], tiles[u]), weights, strict)


def mass(Q: Sequence[Tile], Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float, grid: Grid, strict: bool = False) -> MassReport:
    Q = list(dict.fromkeys(Q))
    if Q:
        geo._check_r(r, Q[0].dim)
    w = mass_weights(Q, np.asarray(Emask, dtype=bool), N, r, gamma, grid)
    return mass_from_weights(Q, w, strict)
