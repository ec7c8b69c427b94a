"""Layered selection P = union of P_j with energy/mass thresholds, and certificates.

Selection at level j: a mass pass (while the remainder has mass above
2^{2jn}, remove every remaining tile below the witness u), then an energy
pass (while the remainder has energy above 2^{jn}, take the lexicographically
least qualifying top and remove every remaining tile below it).  Both passes
remove full trees, so each P_j is a union of trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import geometry as geo
from .field import ChoiceMap, Grid, SampledField, inner, lp_norm
from .functionals import (
    energy_from_coefficients,
    mass_from_weights,
    mass_weights,
    mass_weights_direct,
    top_energies,
)
from .geometry import Tile, Tree
from .packets import R_TRUNC, get_bank, wave_packet


class SelectionError(RuntimeError):
    """The greedy loop exceeded its iteration cap (an implementation bug)."""


@dataclass
class TileData:
    """Everything the selection needs about a fixed tile set."""

    tiles: list
    coeffs: np.ndarray  # <f, phi_s>
    fnorm: float
    weights: np.ndarray  # mass weight w(u)
    r: int
    dim: int
    pairs_r: tuple = None
    pairs: tuple = None

    def __post_init__(self):
        self.sq = np.abs(self.coeffs) ** 2
        if self.pairs_r is None:
            self.pairs_r = geo.order_pairs(self.tiles, self.r)
        if self.pairs is None:
            self.pairs = geo.order_pairs(self.tiles)
        self.keys = [s.sort_key() for s in self.tiles]
        self.rank = np.empty(len(self.tiles), dtype=np.int64)
        self.rank[sorted(range(len(self.tiles)), key=lambda i: self.keys[i])] = np.arange(len(self.tiles))

    def energy(self, alive: np.ndarray) -> np.ndarray:
        """Per-top normalized energy of the alive subset (-inf for dead tops)."""
        e = top_energies(self.tiles, self.sq, self.pairs_r, alive.astype(float))
        return np.where(alive, np.sqrt(np.maximum(e, 0.0)) / self.fnorm, -np.inf)

    def below(self, top: int, alive: np.ndarray) -> np.ndarray:
        lo, hi = self.pairs
        idx = lo[hi == top]
        return idx[alive[idx]]


def tile_data(P: Sequence[Tile], f: SampledField, Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float, truncation=R_TRUNC) -> TileData:
    P = list(dict.fromkeys(P))
    fnorm = lp_norm(f, 2)
    if fnorm == 0:
        raise ValueError("decomposition of the zero function")
    coeffs = get_bank(f.grid, truncation).coefficients(f, P) if P else np.zeros(0, complex)
    w = mass_weights(P, np.asarray(Emask, bool), N, r, gamma, f.grid)
    return TileData(P, coeffs, fnorm, w, r, f.grid.dim)


def _max_alive(vals: np.ndarray, alive: np.ndarray) -> float:
    return float(vals[alive].max()) if alive.any() else 0.0


def initial_level(E: float, M: float, n: int) -> int | None:
    """Smallest integer m0 with E <= 2^{(m0+1)n} and M <= 2^{(2m0+2)n}; None if both vanish."""
    if E <= 0 and M <= 0:
        return None
    cands = []
    if E > 0:
        cands.append(math.ceil(math.log2(E) / n) - 1)
    if M > 0:
        cands.append(math.ceil(math.log2(M) / (2 * n)) - 1)
    j = max(cands)
    ok = lambda j: E <= 2.0 ** ((j + 1) * n) and M <= 2.0 ** ((2 * j + 2) * n)
    while not ok(j):
        j += 1
    while ok(j - 1):
        j -= 1
    return j


def select_layer(data: TileData, alive: np.ndarray, j: int, cap: int | None = None) -> tuple[list, np.ndarray]:
    """Remove trees until the alive set has energy <= 2^{jn} and mass <= 2^{2jn}.

    Returns (trees as (top index, member indices) pairs, new alive mask).
    """
    n = data.dim
    alive = alive.copy()
    cap = int(alive.sum()) + 1 if cap is None else cap
    trees = []
    steps = 0
    e_thr = 2.0 ** (j * n)
    m_thr = 2.0 ** (2 * j * n)
    # mass pass
    while alive.any():
        w = np.where(alive, data.weights, -np.inf)
        best = w.max()
        if best <= m_thr:
            break
        u = min(np.nonzero(w == best)[0], key=lambda i: data.rank[i])
        idx = data.below(int(u), alive)
        trees.append((int(u), idx))
        alive[idx] = False
        steps += 1
        if steps > cap:
            raise SelectionError("mass pass did not terminate")
    # energy pass
    while alive.any():
        e = data.energy(alive)
        over = np.nonzero(e > e_thr)[0]
        if not over.size:
            break
        t = int(min(over, key=lambda i: data.rank[i]))
        idx = data.below(t, alive)
        trees.append((t, idx))
        alive[idx] = False
        steps += 1
        if steps > cap:
            raise SelectionError("energy pass did not terminate")
    return trees, alive


# -- decomposition --------------------------------------------------------------


@dataclass
class Layer:
    j: int
    trees: list  # list of Tree
    floor: bool = False

    @property
    def tiles(self) -> set:
        out = set()
        for T in self.trees:
            out |= T.tiles
        return out

    def top_volume(self) -> float:
        return float(sum(T.top.time.volume for T in self.trees))


@dataclass
class LayerDecomposition:
    m0: int | None
    layers: list  # Layer, descending j
    r: int
    dim: int
    certificates: list = field(default_factory=list)
    C0: float = 0.0
    n_tiles: int = 0

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.certificates)

    def to_json(self) -> dict:
        return {
            "m0": self.m0,
            "r": self.r,
            "dim": self.dim,
            "n_tiles": self.n_tiles,
            "C0": self.C0,
            "layers": [
                {
                    "j": L.j,
                    "floor": L.floor,
                    "trees": [T.to_json() for T in sorted(L.trees, key=lambda T: T.top.sort_key())],
                }
                for L in self.layers
            ],
            "certificates": self.certificates,
            "ok": self.ok,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def maximal_trees(tiles: Sequence[Tile]) -> list[Tree]:
    """Split a tile set into trees under its maximal elements (each tile once)."""
    tiles = sorted(set(tiles), key=Tile.sort_key)
    lo, hi = geo.order_pairs(tiles)
    has_above = np.zeros(len(tiles), dtype=bool)
    has_above[lo[lo != hi]] = True
    taken = np.zeros(len(tiles), dtype=bool)
    out = []
    for t in np.nonzero(~has_above)[0]:
        idx = lo[(hi == t) & ~taken[lo]]
        taken[idx] = True
        out.append(Tree(frozenset(tiles[i] for i in idx), tiles[t]))
    return out


def decompose(P: Sequence[Tile], f: SampledField, Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float,
              depth: int = 40, data: TileData | None = None, certify: bool = True) -> LayerDecomposition:
    """Descending-j selection until the remainder is empty.

    Levels m0, m0-1, ..., m0-depth run the two passes; whatever survives the
    last level (energy and mass below 2^{(m0-depth)n}) forms a floor layer
    one level lower, split into maximal trees.
    """
    data = data or tile_data(P, f, Emask, N, r, gamma)
    n = data.dim
    T = len(data.tiles)
    if T == 0:
        dec = LayerDecomposition(None, [], r, f.grid.dim, [], 0.0, 0)
        return dec
    alive = np.ones(T, dtype=bool)
    E0 = _max_alive(data.energy(alive), alive)
    M0 = float(data.weights.max())
    m0 = initial_level(E0, M0, n)
    layers = []
    if m0 is None:
        layers.append(Layer(0, maximal_trees(data.tiles), floor=True))
        m0_out = None
        j_last = 0
    else:
        m0_out = m0
        j = m0
        while alive.any() and j >= m0 - depth:
            trees, alive = select_layer(data, alive, j)
            if trees:
                layers.append(Layer(j, [Tree(frozenset(data.tiles[i] for i in idx), data.tiles[t]) for t, idx in trees]))
            j -= 1
        j_last = j
        if alive.any():
            rest = [data.tiles[i] for i in np.nonzero(alive)[0]]
            layers.append(Layer(j, maximal_trees(rest), floor=True))
    dec = LayerDecomposition(m0_out, layers, r, n, [], 0.0, T)
    dec._j_last = j_last
    if certify:
        certify_decomposition(dec, data.tiles, f, Emask, N, gamma)
    return dec


# -- certificates -----------------------------------------------------------------


def _direct_energy(tiles: list, coeffs: dict, fnorm: float, r: int) -> float:
    """Energy via dense order matrices and the coefficient table (no hash join)."""
    if not tiles:
        return 0.0
    M = geo.leq_matrix(tiles, tiles, r)
    sq = np.array([abs(coeffs[s]) ** 2 for s in tiles])
    vol = np.array([s.time.volume for s in tiles])
    per = (sq @ M) / vol
    return float(math.sqrt(max(per.max(), 0.0)) / fnorm)


def _direct_mass(tiles: list, weights: dict) -> float:
    return max((weights[s] for s in tiles), default=0.0)


def certify_decomposition(dec: LayerDecomposition, P: Sequence[Tile], f: SampledField, Emask, N: ChoiceMap, gamma: float) -> list:
    """Recompute (a)-(e) from scratch: coefficients from dense packets, weights
    from dense psi sums, tree sums from dense order matrices."""
    P = list(dict.fromkeys(P))
    n = dec.dim
    fnorm = lp_norm(f, 2)
    coeffs = {s: inner(f, wave_packet(s, f.grid).samples) for s in P}
    wvals = mass_weights_direct(P, np.asarray(Emask, bool), N, dec.r, gamma, f.grid)
    weights = dict(zip(P, wvals))
    certs = []
    # exact partition
    seen: list = []
    for L in dec.layers:
        for Tr in L.trees:
            seen += list(Tr.tiles)
    part_ok = len(seen) == len(set(seen)) and set(seen) == set(P)
    certs.append({"property": "partition", "j": None, "value": len(seen), "bound": len(P), "ok": bool(part_ok)})
    if not dec.layers:
        dec.certificates = certs
        return certs
    by_j = {L.j: L for L in dec.layers}
    j_hi = max(by_j) if dec.m0 is None else dec.m0
    j_lo = min(by_j)
    rem = set(P)
    C0 = 0.0
    for j in range(j_hi, j_lo - 1, -1):
        L = by_j.get(j)
        Pj = sorted(L.tiles, key=Tile.sort_key) if L else []
        rem -= set(Pj)
        remaining = sorted(rem, key=Tile.sort_key)
        ea = _direct_energy(Pj, coeffs, fnorm, dec.r)
        mb = _direct_mass(Pj, weights)
        ec = _direct_energy(remaining, coeffs, fnorm, dec.r)
        md = _direct_mass(remaining, weights)
        tv = L.top_volume() if L else 0.0
        c0 = tv * 2.0 ** (2 * j * n)
        C0 = max(C0, c0)
        trees_ok = all(Tr.top in Tr.tiles and all(geo.tile_leq(s, Tr.top) for s in Tr.tiles) for Tr in (L.trees if L else []))
        slack = 1e-9
        certs += [
            {"property": "a", "j": j, "value": ea, "bound": 2.0 ** ((j + 1) * n), "ok": ea <= 2.0 ** ((j + 1) * n) * (1 + slack)},
            {"property": "b", "j": j, "value": mb, "bound": 2.0 ** ((2 * j + 2) * n), "ok": mb <= 2.0 ** ((2 * j + 2) * n) * (1 + slack)},
            {"property": "c", "j": j, "value": ec, "bound": 2.0 ** (j * n), "ok": ec <= 2.0 ** (j * n) * (1 + slack)},
            {"property": "d", "j": j, "value": md, "bound": 2.0 ** (2 * j * n), "ok": md <= 2.0 ** (2 * j * n) * (1 + slack)},
            {"property": "e", "j": j, "value": tv, "bound": c0, "ok": bool(trees_ok)},
        ]
    for c in certs:
        c["ok"] = bool(c["ok"])
    dec.certificates = certs
    dec.C0 = C0
    return certs


# -- Lemma-2 style tree estimate ------------------------------------------------


def pairing_masks(tiles: Sequence[Tile], Emask: np.ndarray, N: ChoiceMap, r: int) -> dict:
    """E' cap N^{-1}[omega_{s(r)}] as a cell mask, keyed by semi-tile cube."""
    out = {}
    for s in tiles:
        c = s.semi(r)
        if c not in out:
            out[c] = np.asarray(Emask, bool) & N.in_cube(c)
    return out


def dual_coefficients(tiles: Sequence[Tile], Emask: np.ndarray, N: ChoiceMap, r: int, grid: Grid, truncation=R_TRUNC) -> np.ndarray:
    """<chi_{E' cap N^{-1}[omega_{s(r)}]}, phi_s> for every tile, grouped by the mask."""
    tiles = list(tiles)
    out = np.zeros(len(tiles), dtype=np.complex128)
    bank = get_bank(grid, truncation)
    groups: dict = {}
    for i, s in enumerate(tiles):
        groups.setdefault(s.semi(r), []).append(i)
    for cube, idx in groups.items():
        mask = np.asarray(Emask, bool) & N.in_cube(cube)
        if not mask.any():
            continue
        out[idx] = bank.coefficients(SampledField(grid, mask.astype(float)), [tiles[i] for i in idx])
    return out


def tree_sum_estimate(T: Tree, f: SampledField, Emask: np.ndarray, N: ChoiceMap, r: int, gamma: float) -> tuple[float, float, float]:
    """(lhs, rhs, lhs/rhs) for sum |<f,phi_s><chi_{E' cap N^-1[omega_s(r)]}, phi_s>|
    against |I_top| E(f;T) M(T) ||f||_2."""
    tiles = sorted(T.tiles, key=Tile.sort_key)
    a = get_bank(f.grid).coefficients(f, tiles)
    b = dual_coefficients(tiles, Emask, N, r, f.grid)
    lhs = float(np.sum(np.abs(a * b)))
    fnorm = lp_norm(f, 2)
    E = energy_from_coefficients(tiles, a, fnorm, r).value if fnorm > 0 else 0.0
    M = mass_from_weights(tiles, mass_weights(tiles, np.asarray(Emask, bool), N, r, gamma, f.grid)).value
    rhs = T.top.time.volume * E * M * fnorm
    if rhs == 0:
        ratio = 0.0 if lhs == 0 else math.inf
    else:
        ratio = lhs / rhs
    return lhs, rhs, ratio
