"""Dyadic cubes, tiles, semi-tiles and trees.

Everything here is exact integer arithmetic.  A dyadic cube of scale ``k``
and multi-index ``m`` is the product of ``[m_j 2^k, (m_j + 1) 2^k)``; a tile
pairs a time cube with a frequency cube of the opposite scale so that the
product of their volumes is one.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

# Scales outside this window are rejected; keeps every endpoint an exact
# dyadic rational with a small denominator.
SCALE_WINDOW = (-12, 12)
_INDEX_BOUND = 2**62


@dataclass(frozen=True, order=True)
class DyadicCube:
    scale: int
    index: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.index, tuple):
            object.__setattr__(self, "index", tuple(int(i) for i in self.index))
        lo, hi = SCALE_WINDOW
        if not lo <= self.scale <= hi:
            raise ValueError(f"scale {self.scale} outside window {SCALE_WINDOW}")
        if not self.index:
            raise ValueError("cube needs at least one axis")
        if any(abs(i) >= _INDEX_BOUND for i in self.index):
            raise ValueError("cube index does not fit the 64-bit window")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0**self.scale

    @property
    def volume(self) -> float:
        return 2.0 ** (self.scale * self.dim)

    @property
    def lower(self) -> tuple[Fraction, ...]:
        s = Fraction(2) ** self.scale
        return tuple(m * s for m in self.index)

    @property
    def upper(self) -> tuple[Fraction, ...]:
        s = Fraction(2) ** self.scale
        return tuple((m + 1) * s for m in self.index)

    @property
    def center(self) -> tuple[float, ...]:
        s = 2.0**self.scale
        return tuple((m + 0.5) * s for m in self.index)

    def contains(self, other: DyadicCube) -> bool:
        """True iff ``other`` is a subset of ``self``."""
        d = self.scale - other.scale
        if d < 0:
            return False
        return all((b >> d) == a for a, b in zip(self.index, other.index))

    def intersects(self, other: DyadicCube) -> bool:
        return self.contains(other) or other.contains(self)

    def parent(self) -> DyadicCube:
        return DyadicCube(self.scale + 1, tuple(m >> 1 for m in self.index))

    def ancestor(self, scale: int) -> DyadicCube:
        d = scale - self.scale
        if d < 0:
            raise ValueError("ancestor scale below cube scale")
        return DyadicCube(scale, tuple(m >> d for m in self.index))

    def children(self) -> list[DyadicCube]:
        """The 2^n children, in lexicographic order of their centers."""
        return [
            DyadicCube(self.scale - 1, tuple(2 * m + e for m, e in zip(self.index, bits)))
            for bits in itertools.product((0, 1), repeat=self.dim)
        ]

    def dilate(self, factor: float) -> Box:
        """The cube with the same center and ``factor`` times the side."""
        c = self.center
        half = 0.5 * factor * self.side
        return Box(tuple(x - half for x in c), tuple(x + half for x in c))

    def as_box(self) -> Box:
        return Box(tuple(float(x) for x in self.lower), tuple(float(x) for x in self.upper))

    def to_json(self) -> dict:
        return {"k": self.scale, "m": list(self.index)}

    @classmethod
    def from_json(cls, data: dict) -> DyadicCube:
        return cls(int(data["k"]), tuple(int(i) for i in data["m"]))


def children(c: DyadicCube) -> list[DyadicCube]:
    return c.children()


def _integer_coords(a: DyadicCube, b: DyadicCube):
    """Endpoints of both cubes as integers in units of the finer side."""
    base = min(a.scale, b.scale)

    def ends(c):
        f = 1 << (c.scale - base)
        return [(m * f, (m + 1) * f) for m in c.index]

    return ends(a), ends(b), base


def cube_distance_sq(a: DyadicCube, b: DyadicCube) -> Fraction:
    """Exact squared Euclidean set distance between two cubes."""
    ea, eb, base = _integer_coords(a, b)
    total = 0
    for (alo, ahi), (blo, bhi) in zip(ea, eb):
        gap = max(0, blo - ahi, alo - bhi)
        total += gap * gap
    return Fraction(total) * Fraction(2) ** (2 * base)


def cube_distance(a: DyadicCube, b: DyadicCube) -> float:
    return math.sqrt(cube_distance_sq(a, b))


@dataclass(frozen=True)
class Box:
    """Half-open axis-aligned box with float endpoints (used for dilates)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return math.prod(max(0.0, u - l) for l, u in zip(self.lower, self.upper))

    def contains_box(self, other: Box) -> bool:
        return all(sl <= ol and ou <= su for sl, su, ol, ou in zip(self.lower, self.upper, other.lower, other.upper))

    def intersects(self, other: Box) -> bool:
        return all(ol < su and sl < ou for sl, su, ol, ou in zip(self.lower, self.upper, other.lower, other.upper))

    def contains_point(self, x: Sequence[float]) -> bool:
        return all(l <= xi < u for l, u, xi in zip(self.lower, self.upper, x))

    def distance(self, other: Box) -> float:
        gaps = [max(0.0, ol - su, sl - ou) for sl, su, ol, ou in zip(self.lower, self.upper, other.lower, other.upper)]
        return math.sqrt(sum(g * g for g in gaps))


@dataclass(frozen=True, order=True)
class Tile:
    time: DyadicCube
    freq: DyadicCube

    def __post_init__(self):
        if self.time.dim != self.freq.dim:
            raise ValueError("time and frequency cubes differ in dimension")
        if self.freq.scale != -self.time.scale:
            raise ValueError("tile must satisfy |I_s| * |omega_s| = 1")

    @property
    def dim(self) -> int:
        return self.time.dim

    @property
    def scale(self) -> int:
        return self.time.scale

    def semi(self, i: int) -> DyadicCube:
        """Frequency cube of the i-th semi-tile (1-based)."""
        n = 2**self.dim
        if not 1 <= i <= n:
            raise ValueError(f"semi-tile number {i} outside [1, {n}]")
        return self.freq.children()[i - 1]

    def modulation(self) -> tuple[float, ...]:
        """Center of the first semi-tile, the frequency the packet is modulated by."""
        return self.semi(1).center

    def sort_key(self):
        """Lexicographic key: frequency center, then time center, then scale."""
        return (self.freq.center, self.time.center, self.scale)

    def to_json(self) -> dict:
        return {"dim": self.dim, "time": self.time.to_json(), "freq": self.freq.to_json()}

    @classmethod
    def from_json(cls, data: dict) -> Tile:
        t = cls(DyadicCube.from_json(data["time"]), DyadicCube.from_json(data["freq"]))
        if "dim" in data and int(data["dim"]) != t.dim:
            raise ValueError("dim field disagrees with cube indices")
        return t


@dataclass(frozen=True)
class SemiTile:
    parent: Tile
    i: int

    def __post_init__(self):
        n = 2**self.parent.dim
        if not 1 <= self.i <= n:
            raise ValueError(f"semi-tile number {self.i} outside [1, {n}]")

    @property
    def time(self) -> DyadicCube:
        return self.parent.time

    @property
    def freq(self) -> DyadicCube:
        return self.parent.semi(self.i)


def semitile(s: Tile, i: int) -> SemiTile:
    return SemiTile(s, i)


def tile_leq(s: Tile, t: Tile) -> bool:
    """The tile order s <= t: I_s inside I_t and omega_t inside omega_s (reflexive)."""
    if s.dim != t.dim:
        raise ValueError("tiles of different dimension")
    return t.time.contains(s.time) and s.freq.contains(t.freq)


def tile_lt(s: Tile, t: Tile) -> bool:
    """Strict variant of the tile order."""
    return s != t and tile_leq(s, t)


@dataclass(frozen=True)
class Tree:
    tiles: frozenset
    top: Tile

    def __post_init__(self):
        if not isinstance(self.tiles, frozenset):
            object.__setattr__(self, "tiles", frozenset(self.tiles))
        if self.top not in self.tiles:
            raise ValueError("top must belong to the tree")
        bad = [s for s in self.tiles if not tile_leq(s, self.top)]
        if bad:
            raise ValueError(f"{len(bad)} tiles are not below the top")

    def __len__(self):
        return len(self.tiles)

    def __iter__(self):
        return iter(sorted(self.tiles, key=Tile.sort_key))

    def to_json(self) -> dict:
        return {"top": self.top.to_json(), "tiles": tiles_to_json(self)}


def _check_r(r: int, dim: int) -> None:
    if not 2 <= r <= 2**dim:
        raise ValueError(f"r = {r} outside [2, {2**dim}]")


def is_rtree(tree: Tree, r: int) -> bool:
    _check_r(r, tree.top.dim)
    target = tree.top.semi(r)
    return all(s.semi(r).contains(target) for s in tree.tiles)


def rtree_member(s: Tile, top: Tile, r: int) -> bool:
    """Whether s may join an r-tree with the given top."""
    return tile_leq(s, top) and s.semi(r).contains(top.semi(r))


def tiles_to_json(tiles: Iterable[Tile]) -> list[dict]:
    return [t.to_json() for t in sorted(tiles, key=Tile.sort_key)]


def tiles_from_json(data: list[dict]) -> list[Tile]:
    return [Tile.from_json(d) for d in data]


def write_tiles(path, tiles: Iterable[Tile]) -> None:
    with open(path, "w") as fh:
        json.dump(tiles_to_json(tiles), fh, indent=1, sort_keys=True)


def read_tiles(path) -> list[Tile]:
    with open(path) as fh:
        return tiles_from_json(json.load(fh))


# -- vectorized order relations ---------------------------------------------


def _tile_arrays(tiles: Sequence[Tile]):
    k = np.array([s.scale for s in tiles], dtype=np.int64)
    m = np.array([s.time.index for s in tiles], dtype=np.int64).reshape(len(tiles), -1)
    w = np.array([s.freq.index for s in tiles], dtype=np.int64).reshape(len(tiles), -1)
    return k, m, w


def semi_bits(r: int, dim: int) -> tuple[int, ...]:
    """Child offsets of the r-th semi-tile inside its frequency cube."""
    return tuple(itertools.product((0, 1), repeat=dim))[r - 1]


def leq_matrix(below: Sequence[Tile], above: Sequence[Tile], r: int | None = None) -> np.ndarray:
    """Dense boolean matrix [i, j] = below[i] <= above[j] (and, with r, the
    r-tree condition of above[j] as top)."""
    below, above = list(below), list(above)
    out = np.zeros((len(below), len(above)), dtype=bool)
    if not below or not above:
        return out
    ks, ms, ws = _tile_arrays(below)
    kt, mt, wt = _tile_arrays(above)
    d = kt[None, :] - ks[:, None]
    ok = d >= 0
    dd = np.where(ok, d, 0)[..., None]
    ok &= np.all((ms[:, None, :] >> dd) == mt[None, :, :], axis=-1)
    ok &= np.all((wt[None, :, :] >> dd) == ws[:, None, :], axis=-1)
    if r is not None:
        _check_r(r, below[0].dim)
        b = np.array(semi_bits(r, below[0].dim), dtype=np.int64)
        ok &= np.all(((2 * wt[None, :, :] + b) >> dd) == (2 * ws[:, None, :] + b), axis=-1)
    return ok


def order_pairs(tiles: Sequence[Tile], r: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """All index pairs (i, j) with tiles[i] <= tiles[j], by a hash join per
    pair of scales.  With r, only pairs where tiles[i] may join an r-tree
    topped by tiles[j]."""
    tiles = list(tiles)
    if not tiles:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    k, m, w = _tile_arrays(tiles)
    bits = None
    if r is not None:
        _check_r(r, tiles[0].dim)
        bits = np.array(semi_bits(r, tiles[0].dim), dtype=np.int64)
    by_scale = {int(s): np.nonzero(k == s)[0] for s in np.unique(k)}
    lo_list, hi_list = [], []
    for ks, si in by_scale.items():
        for kt, ti in by_scale.items():
            d = kt - ks
            if d < 0:
                continue
            # s <= t iff anc(I_s) = I_t and anc(omega_t) = omega_s at the shared scales
            table: dict = {}
            for j in ti:
                key = (tuple(m[j]), tuple(w[j] >> d))
                table.setdefault(key, []).append(j)
            for i in si:
                hits = table.get((tuple(m[i] >> d), tuple(w[i])))
                if not hits:
                    continue
                for j in hits:
                    if bits is not None and not np.all(((2 * w[j] + bits) >> d) == 2 * w[i] + bits):
                        continue
                    lo_list.append(i)
                    hi_list.append(j)
    return np.array(lo_list, dtype=np.int64), np.array(hi_list, dtype=np.int64)
