"""Calderon-Zygmund decomposition of chi_{F cap 3 I_t} relative to a tree top.

The level is c |F|^{1/q}.  Omega_F = {M chi_F > level} is cut into maximal
dyadic cubes; those at least as large as I_t are split into cubes of exactly
the size of I_t.  With a modulation xi0 the decomposed function is
chi_{F cap 3I_t} e^{-2 pi i xi0.x}, paired against packets demodulated by xi0,
which leaves every inner product unchanged.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .field import Grid, SampledField, lp_norm
from .geometry import Box, DyadicCube, Tile, _integer_coords, cube_distance
from .maximal import ExceptionalSet, inv, level_set
from .packets import R_TRUNC, get_bank


class _NothingToProve:
    """No point of I_t has M chi_F at or below the level; the estimate is vacuous."""

    def __repr__(self):
        return "NOTHING_TO_PROVE"

    def __bool__(self):
        return False


NOTHING_TO_PROVE = _NothingToProve()


def _require_inside(grid: Grid, cube: DyadicCube) -> None:
    if not grid.box.contains_box(cube.as_box()):
        raise ValueError("tree top must lie inside the grid box")


def has_good_point(omega: ExceptionalSet, I_t: DyadicCube) -> bool:
    sl = omega.grid.cube_slices(I_t)
    cells = omega.cells[sl]
    return bool(cells.size) and not bool(cells.all())


def split_to(cube: DyadicCube, scale: int) -> list[DyadicCube]:
    """Descendants of ``cube`` of the given (smaller or equal) scale."""
    d = cube.scale - scale
    if d < 0:
        raise ValueError("target scale above cube scale")
    ranges = [range(m << d, (m + 1) << d) for m in cube.index]
    return [DyadicCube(scale, idx) for idx in itertools.product(*ranges)]


def whitney_split(omega: ExceptionalSet, I_t: DyadicCube):
    """[(J_k, split_flag)] or NOTHING_TO_PROVE."""
    _require_inside(omega.grid, I_t)
    if omega.empty:
        return []
    if not has_good_point(omega, I_t):
        return NOTHING_TO_PROVE
    out = []
    for J in omega.whitney:
        if J.scale >= I_t.scale:
            out += [(c, True) for c in split_to(J, I_t.scale)]
        else:
            out.append((J, False))
    return sorted(out)


# -- exact geometry ---------------------------------------------------------------


def _ends(c: DyadicCube, base: int, factor: int = 1):
    """Per-axis integer endpoints of the concentric factor-dilate (factor odd)."""
    f = 1 << (c.scale - base)
    half = (factor - 1) // 2
    return [((m - half) * f, (m + 1 + half) * f) for m in c.index]


def _box_rel(a, b):
    """(a inside b, a meets b) for per-axis half-open integer boxes."""
    inside = all(bl <= al and ah <= bh for (al, ah), (bl, bh) in zip(a, b))
    meets = all(al < bh and bl < ah for (al, ah), (bl, bh) in zip(a, b))
    return inside, meets


def case_classify(J: DyadicCube, I_s: DyadicCube) -> str:
    """'a': J in 3I_s; 'b': J misses 3I_s; 'c': the rest.  Raises if J
    properly contains I_s (then I_s would sit inside Omega)."""
    base = min(J.scale, I_s.scale)
    j = _ends(J, base)
    s1 = _ends(I_s, base)
    s3 = _ends(I_s, base, 3)
    in3, meet3 = _box_rel(j, s3)
    in1, meet1 = _box_rel(j, s1)
    if meet1 and not in1:
        raise ValueError("Whitney cube properly overlaps I_s")
    if in3:
        tag = "a"
    elif not meet3:
        tag = "b"
    else:
        tag = "c"
    alt = (not meet1) and cube_distance(J, I_s) == 0 and J.volume >= 2**J.dim * I_s.volume
    if (tag == "c") != alt:
        raise AssertionError("the two phrasings of case (c) disagree")
    return tag


def inside_dilate(J: DyadicCube, I: DyadicCube, factor: int) -> bool:
    """J contained in the concentric dilate factor*I (factor a power of two or odd)."""
    base = min(J.scale, I.scale) - 2
    f = 1 << (I.scale - base)
    g = 1 << (J.scale - base)
    for m, k in zip(J.index, I.index):
        c2 = (2 * k + 1) * f  # twice the center of I in base units
        lo, hi = 2 * m * g, 2 * (m + 1) * g
        if lo < c2 - factor * f or hi > c2 + factor * f:
            return False
    return True


# -- the decomposition ---------------------------------------------------------------


@dataclass
class BadPart:
    cube: DyadicCube
    grid: Grid
    slices: tuple
    values: np.ndarray  # samples on the cells of the cube

    def as_field(self) -> SampledField:
        out = np.zeros(self.grid.shape, dtype=np.complex128)
        out[self.slices] = self.values
        return SampledField(self.grid, out)

    @property
    def l1(self) -> float:
        return float(np.abs(self.values).sum() * self.grid.cell_volume)

    @property
    def integral(self) -> complex:
        return complex(self.values.sum() * self.grid.cell_volume)


@dataclass
class CZOutput:
    level: float
    q: float
    c: float
    F_measure: float
    top: DyadicCube
    modulation: tuple | None
    omega: ExceptionalSet
    cubes: list = field(default_factory=list)
    split: list = field(default_factory=list)
    bad: list = field(default_factory=list)
    good: SampledField | None = None
    target: SampledField | None = None
    far: SampledField | None = None
    bounds_table: list = field(default_factory=list)
    status: str = "ok"

    @property
    def Fq(self) -> float:
        return self.F_measure ** inv(self.q)

    def reconstruction_error(self) -> float:
        total = self.good.samples.copy()
        for b in self.bad:
            total[b.slices] += b.values
        return float(np.max(np.abs(total - self.target.samples))) if total.size else 0.0

    def mean_errors(self) -> list[float]:
        """|int b_k| / |J_k|^{1/2} per cube."""
        return [abs(b.integral) / math.sqrt(b.cube.volume) for b in self.bad]

    def compliance_11p(self) -> float:
        if not self.bounds_table:
            return 1.0
        return sum(r["ok_11p"] for r in self.bounds_table) / len(self.bounds_table)

    def constants(self) -> dict:
        Fq = self.Fq
        out = {
            "g_inf": lp_norm(self.good, math.inf) / Fq if Fq > 0 else 0.0,
            "g_l1": lp_norm(self.good, 1) / (Fq * self.top.volume) if Fq > 0 else 0.0,
            "g_l2": lp_norm(self.good, 2) / (Fq * math.sqrt(self.top.volume)) if Fq > 0 else 0.0,
            "compliance_11p": self.compliance_11p(),
            "reconstruction_error": self.reconstruction_error(),
            "max_mean_error": max(self.mean_errors(), default=0.0),
        }
        return out

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "level": self.level,
            "q": "inf" if math.isinf(self.q) else self.q,
            "c": self.c,
            "F_measure": self.F_measure,
            "top": self.top.to_json(),
            "modulation": None if self.modulation is None else list(self.modulation),
            "cubes": [{"cube": J.to_json(), "split": s} for J, s in zip(self.cubes, self.split)],
            "bounds": self.bounds_table,
            "constants": self.constants() if self.status == "ok" else {},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _cell_phase(grid: Grid, xi) -> np.ndarray:
    ph = np.ones(grid.shape, dtype=np.complex128)
    for j, f in enumerate(xi):
        e = np.exp(-2j * np.pi * f * grid.axis_centers(j))
        shape = [1] * grid.dim
        shape[j] = -1
        ph = ph * e.reshape(shape)
    return ph


def cz_split(F: SampledField, I_t: DyadicCube, q: float, c: float, modulation=None, family: str = "all") -> CZOutput:
    grid = F.grid
    _require_inside(grid, I_t)
    n = grid.dim
    Fm = F.measure()
    level = c * Fm ** inv(q) if Fm > 0 else math.inf
    if Fm > 0:
        omega = level_set(F, level, q, family)
    else:
        omega = ExceptionalSet(q, level, np.zeros(grid.shape, bool), grid, [], None)
    xi = None if modulation is None else tuple(float(v) for v in modulation)
    out = CZOutput(level, q, c, Fm, I_t, xi, omega)
    pieces = whitney_split(omega, I_t)
    if pieces is NOTHING_TO_PROVE:
        out.status = "nothing_to_prove"
        return out
    fmask = F.samples.real > 0.5
    m3 = grid.box_mask(I_t.dilate(3.0))
    base = (fmask & m3).astype(np.complex128)
    far = (fmask & ~m3).astype(np.complex128)
    if xi is not None:
        ph = _cell_phase(grid, xi)
        base = base * ph
        far = far * ph
    target = SampledField(grid, base)
    good = base.copy()
    hv = grid.cell_volume
    Fq = Fm ** inv(q)
    lt = I_t.side
    rows = []
    for J, was_split in pieces:
        sl = grid.cube_slices(J)
        loc = base[sl]
        avg = loc.mean()
        good[sl] = avg
        bvals = loc - avg
        out.cubes.append(J)
        out.split.append(was_split)
        out.bad.append(BadPart(J, grid, sl, bvals))
        FJ = float(fmask[sl].sum() * hv)
        FJ3 = float((fmask & m3)[sl].sum() * hv)
        dist = cube_distance(I_t, J)
        small = J.volume < I_t.volume
        if small:
            b11 = 2**n * level * J.volume
        else:
            b11 = 2**n * level * J.volume * (1 + dist / lt) ** n
        verbatim = 2 * level * J.volume * (1 + dist / I_t.volume) ** n
        l1 = float(np.abs(bvals).sum() * hv)
        escape = True if was_split else not omega.contains_cube(J.parent())
        rows.append(
            {
                "cube": J.to_json(),
                "split": was_split,
                "size": "small" if small else "top",
                "F_cap_J": FJ,
                "F_cap_J_3It": FJ3,
                "dist": dist,
                "bound_11p": b11,
                "ok_11p": bool(FJ <= b11 * (1 + 1e-12)),
                "b_l1": l1,
                "b_l1_bound_verbatim": verbatim,
                "ok_l1_verbatim": bool(l1 <= verbatim * (1 + 1e-12)),
                "b_l1_bound": 2.0 * b11,
                "ok_l1": bool(l1 <= 2.0 * b11 * (1 + 1e-12)),
                "mean": abs(bvals.sum() * hv) / math.sqrt(J.volume),
                "parent_escapes": bool(escape),
            }
        )
    out.good = SampledField(grid, good)
    out.target = target
    out.far = SampledField(grid, far)
    out.bounds_table = rows
    return out


# -- packet bounds ------------------------------------------------------------------


@dataclass
class PacketBound:
    actual: float
    bound122: float
    bound142: float
    bound132: float
    bound122_full: float
    d_ks: float

    @property
    def gm_error(self) -> float:
        g = self.bound132**2
        return abs(g - self.bound122 * self.bound142) / g if g > 0 else 0.0

    @property
    def ratio(self) -> float:
        m = min(self.bound122, self.bound142)
        return self.actual / m if m > 0 else (0.0 if self.actual == 0 else math.inf)


def packet_bound_formulas(J: DyadicCube, I_s: DyadicCube, I_t: DyadicCube, gamma: float, Fq: float):
    """The three displayed majorants with unit constants."""
    n = J.dim
    d = cube_distance(J, I_s)
    base = 1.0 + d / I_s.side
    b122 = Fq * J.volume**2 * I_s.volume**-1.5 / base**gamma
    b142 = Fq * I_s.volume**0.5 / base**gamma
    b132 = Fq * J.volume * I_s.volume**-0.5 / base**gamma
    dkt = cube_distance(J, I_t)
    full = Fq * J.volume * (1 + dkt / I_t.side) ** n * J.volume * I_s.volume**-1.5 / base ** (gamma + n)
    return b122, b142, b132, full, d


def bad_packet_bounds(b: BadPart, s: Tile, I_t: DyadicCube, gamma: float, Fq: float, modulation=None, truncation=R_TRUNC) -> PacketBound:
    pk = get_bank(b.grid, truncation).packet(s, modulation)
    loc = pk.factors[0][b.slices[0]]
    for a, sl in zip(pk.factors[1:], b.slices[1:]):
        loc = np.multiply.outer(loc, a[sl])
    actual = abs(np.sum(b.values * np.conj(loc)) * b.grid.cell_volume)
    b122, b142, b132, full, d = packet_bound_formulas(b.cube, s.time, I_t, gamma, Fq)
    return PacketBound(float(actual), b122, b142, b132, full, d)


def bad_coefficients(cz: CZOutput, tiles: Sequence[Tile], truncation=R_TRUNC) -> np.ndarray:
    """Matrix [k, s] of <b_k, phi_s> (packets demodulated like the decomposition)."""
    tiles = list(tiles)
    out = np.zeros((len(cz.bad), len(tiles)), dtype=np.complex128)
    if not tiles or not cz.bad:
        return out
    fac = get_bank(cz.omega.grid, truncation).factors(tiles, cz.modulation)
    hv = cz.omega.grid.cell_volume
    letters = "abcdefgh"[: len(fac)]
    spec = ",".join(f"t{c}" for c in letters) + f",{letters}->t"
    for k, b in enumerate(cz.bad):
        parts = [np.conj(m[:, sl]) for m, sl in zip(fac, b.slices)]
        out[k] = np.einsum(spec, *parts, b.values, optimize=True) * hv
    return out


def tree_coefficients(field_: SampledField, tiles: Sequence[Tile], modulation=None, truncation=R_TRUNC) -> np.ndarray:
    return get_bank(field_.grid, truncation).coefficients(field_, list(tiles), modulation)


def case_aggregates(cz: CZOutput, tiles: Sequence[Tile], truncation=R_TRUNC) -> dict:
    """Normalized left sides of the case (a)/(b)/(c), far-part and good-part estimates.

    Each aggregate is divided by |F|^{2/q} |I_t| (the good-part Bessel ratio
    is also reported against ||g||_2^2).
    """
    tiles = sorted(set(tiles), key=Tile.sort_key)
    n = cz.top.dim
    B = bad_coefficients(cz, tiles, truncation)
    tags = np.array([[case_classify(J, s.time) for s in tiles] for J in cz.cubes]).reshape(len(cz.cubes), len(tiles))
    norm = cz.Fq**2 * cz.top.volume
    out = {}
    for X in "abc":
        sel = tags == X
        per_s = np.abs(np.sum(np.where(sel, B, 0), axis=0)) ** 2
        out[f"case_{X}"] = float(per_s.sum() / norm) if norm > 0 else 0.0
    count_c = (tags == "c").sum(axis=0) if tags.size else np.zeros(len(tiles), int)
    out["max_case_c_per_tile"] = int(count_c.max()) if count_c.size else 0
    out["case_c_limit"] = 2**n - 1
    far = tree_coefficients(cz.far, tiles, cz.modulation, truncation)
    out["far"] = float(np.sum(np.abs(far) ** 2) / norm) if norm > 0 else 0.0
    good = tree_coefficients(cz.good, tiles, cz.modulation, truncation)
    gsum = float(np.sum(np.abs(good) ** 2))
    g2 = lp_norm(cz.good, 2) ** 2
    out["good"] = gsum / norm if norm > 0 else 0.0
    out["good_bessel"] = gsum / g2 if g2 > 0 else 0.0
    # shell containment for the cubes outside 3I_t
    tot = inside = 0
    for J in cz.cubes:
        if inside_dilate(J, cz.top, 3):
            continue
        d = cube_distance(J, cz.top)
        l = max(1, math.ceil(math.log2(d / cz.top.side))) if d > 0 else 1
        tot += 1
        inside += inside_dilate(J, cz.top, 2 ** (l + 2))
    out["shell_total"] = tot
    out["shell_inside"] = inside
    return out
