"""Random test objects: dyadic-aligned sets, choice maps, tile windows, trees.

Every generator takes an explicit numpy Generator; trial generators are
seeded from (run seed, experiment tag, trial index) so a trial does not
depend on which other trials ran or in what order.
"""

from __future__ import annotations

import itertools
import math
import zlib
from dataclasses import dataclass

import numpy as np

from .. import geometry as geo
from ..field import ChoiceMap, Grid, SampledField, indicator
from ..geometry import DyadicCube, Tile, Tree
from ..packets import mother_l2
from .config import RunConfig


def trial_rng(seed: int, tag: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), int(index)]))


def desk_grid(cfg: RunConfig, factor: int = 1) -> Grid:
    return Grid.centered(cfg.dim, cfg.half_width, cfg.points * factor)


def amplitude(cfg: RunConfig) -> float:
    return 1.0 / mother_l2(cfg.dim) if cfg.unit_mother else 1.0


def _range_indices(scale: int, half: float) -> range:
    side = 2.0**scale
    lo = math.floor(-half / side)
    hi = math.ceil(half / side)
    return range(lo, hi)


def cubes_in_window(dim: int, scale: int, half: float) -> list[DyadicCube]:
    """Dyadic cubes of the scale meeting [-half, half)^n."""
    r = _range_indices(scale, half)
    return [DyadicCube(scale, idx) for idx in itertools.product(r, repeat=dim)]


def window_tiles(cfg: RunConfig, scales=None) -> list[Tile]:
    """All tiles with scale in the window, time cube in [-a,a)^n, frequency cube in [-b,b)^n."""
    out = []
    for k in sorted(cfg.scales if scales is None else scales):
        times = cubes_in_window(cfg.dim, k, cfg.tile_half)
        freqs = cubes_in_window(cfg.dim, -k, cfg.freq_max)
        out += [Tile(I, w) for I in times for w in freqs]
    return sorted(out, key=Tile.sort_key)


def subsample(rng: np.random.Generator, tiles: list, count: int) -> list:
    if count <= 0 or count >= len(tiles):
        return list(tiles)
    keep = np.sort(rng.choice(len(tiles), size=count, replace=False))
    return [tiles[i] for i in keep]


def random_cubes(rng: np.random.Generator, dim: int, half: float, scales: tuple, count: int) -> list[DyadicCube]:
    out = []
    for _ in range(count):
        k = int(rng.integers(scales[0], scales[1] + 1))
        r = _range_indices(k, half)
        idx = tuple(int(v) for v in rng.integers(r.start, r.stop, size=dim))
        out.append(DyadicCube(k, idx))
    return out


def random_F(rng: np.random.Generator, grid: Grid, cfg: RunConfig, measure: tuple | None = None, tries: int = 200) -> tuple[SampledField, list]:
    """Union of 1-8 random dyadic cubes inside [-c,c)^n, optionally with |F| in a range."""
    lo_k = max(cfg.F_scales[0], grid.dyadic_level())
    for _ in range(tries):
        count = int(rng.integers(cfg.F_pieces[0], cfg.F_pieces[1] + 1))
        cubes = random_cubes(rng, grid.dim, cfg.F_half, (lo_k, cfg.F_scales[1]), count)
        F = indicator(grid, [c.as_box() for c in cubes])
        m = F.measure()
        if measure is None or measure[0] <= m <= measure[1]:
            return F, cubes
    raise RuntimeError("could not draw F in the requested measure range")


def random_E(rng: np.random.Generator, grid: Grid, cfg: RunConfig, measure: tuple = (0.5, 1.0)) -> tuple[np.ndarray, list]:
    """A cell mask of dyadic cubes with |E| in the range (the normalization |E| ~ 1), and the cubes."""
    lvl = grid.dyadic_level()
    hv = grid.cell_volume
    mask = np.zeros(grid.shape, dtype=bool)
    cubes = []
    while mask.sum() * hv < measure[0]:
        room = measure[1] - mask.sum() * hv
        k_hi = math.floor(math.log2(room) / grid.dim) if room > 0 else lvl
        k = int(rng.integers(lvl, max(lvl, min(k_hi, lvl + 3)) + 1))
        c = random_cubes(rng, grid.dim, cfg.E_half, (k, k), 1)[0]
        new = mask | grid.box_mask(c.as_box())
        if new.sum() * hv <= measure[1]:
            mask = new
            cubes.append(c)
    return mask, cubes


def cube_mask(grid: Grid, cubes: list) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for c in cubes:
        mask |= grid.box_mask(c.as_box())
    return mask


def random_choice(rng: np.random.Generator, grid: Grid, cfg: RunConfig) -> ChoiceMap:
    """N constant on dyadic cells of side 2^choice_scale, uniform in [-b, b)^n."""
    per = 2.0**cfg.choice_scale / grid.spacing[0]
    if per < 1 or per != int(per):
        raise ValueError("choice cells must be whole numbers of grid cells")
    per = int(per)
    blocks = grid.points_per_axis // per
    vals = rng.uniform(-cfg.freq_max, cfg.freq_max, size=(blocks,) * grid.dim + (grid.dim,))
    for ax in range(grid.dim):
        vals = np.repeat(vals, per, axis=ax)
    return ChoiceMap(grid, vals)


def refine_choice(N: ChoiceMap, grid: Grid) -> ChoiceMap:
    """The same piecewise-constant N sampled on a refined grid."""
    f = grid.points_per_axis // N.grid.points_per_axis
    vals = N.values
    for ax in range(grid.dim):
        vals = np.repeat(vals, f, axis=ax)
    return ChoiceMap(grid, vals)


def random_pieces(rng: np.random.Generator, cfg: RunConfig, scale: int, complex_: bool = True) -> tuple[list, np.ndarray]:
    """Values on the dyadic cells of a scale over [-c,c)^n with modulus <= 1."""
    cells = cubes_in_window(cfg.dim, scale, cfg.F_half)
    mod = rng.uniform(0, 1, size=len(cells))
    if complex_:
        mod = mod * np.exp(2j * np.pi * rng.uniform(0, 1, size=len(cells)))
    return cells, mod


def piecewise_field(grid: Grid, cells: list, values: np.ndarray) -> SampledField:
    out = np.zeros(grid.shape, dtype=np.complex128)
    for c, v in zip(cells, values):
        out[grid.cube_slices(c)] = v
    return SampledField(grid, out)


@dataclass
class RandomTree:
    tree: Tree
    full: int  # size of the maximal r-tree under the top inside the window


def random_rtree(rng: np.random.Generator, tiles: list, r: int, keep: float = 0.5) -> RandomTree:
    """A random subset (top always kept) of the maximal r-tree under a random top."""
    top = tiles[int(rng.integers(len(tiles)))]
    M = geo.leq_matrix(tiles, [top], r)[:, 0]
    idx = np.nonzero(M)[0]
    pick = rng.uniform(size=len(idx)) < keep
    members = {tiles[i] for i, k in zip(idx, pick) if k}
    members.add(top)
    return RandomTree(Tree(frozenset(members), top), len(idx))
