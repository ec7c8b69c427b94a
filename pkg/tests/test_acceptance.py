"""Exit-criteria suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -m acceptance -s`` (or ``python3 tests/test_acceptance.py``);
the lines are also collected into the terminal summary.
"""

import itertools
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dyadsum import geometry as geo
from dyadsum.cz import cz_split
from dyadsum.field import indicator, inner, lp_norm
from dyadsum.functionals import energy, energy_bruteforce
from dyadsum.geometry import DyadicCube, Tile, tile_leq
from dyadsum.harness import experiments as X
from dyadsum.harness import suites as S
from dyadsum.harness.config import RunConfig
from dyadsum.maximal import choose_q, inv
from dyadsum.operator import TileSystem, apply_fast, apply_oracle
from dyadsum.packets import wave_packet

pytestmark = pytest.mark.acceptance

RESULTS: list = []
ROOT = Path(__file__).resolve().parents[1]


def report(num: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} {name}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)


# -- 1 -------------------------------------------------------------------------------


def test_01_oracle_equivalence():
    cfg = RunConfig.desk(1)
    grid = S.desk_grid(cfg)
    window = S.window_tiles(cfg)
    worst = 0.0
    t0 = time.perf_counter()
    for i in range(100):
        rng = S.trial_rng(0, "acceptance-1", i)
        tiles = S.subsample(rng, window, int(rng.integers(1, 501)))
        N = S.random_choice(rng, grid, cfg)
        F, _ = S.random_F(rng, grid, cfg)
        sysm = TileSystem(tiles, cfg.r, N, grid, amplitude=S.amplitude(cfg))
        fast = apply_fast(sysm, F).samples
        slow = apply_oracle(sysm, F).samples
        scale = np.abs(slow).max()
        worst = max(worst, float(np.abs(fast - slow).max() / scale) if scale > 0 else float(np.abs(fast).max()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 60
    report(1, "oracle equivalence", ok, f"100 systems, max rel err {worst:.2e}, {dt:.1f} s")
    assert ok


# -- 2 -------------------------------------------------------------------------------


def _ends(c: DyadicCube, base: int = -12):
    """Per-axis integer endpoints in units of 2^base, computed from the definition."""
    f = 2 ** (c.scale - base)
    return [(m * f, (m + 1) * f) for m in c.index]


def _contains(a, b) -> bool:
    return all(al <= bl and bh <= ah for (al, ah), (bl, bh) in zip(_ends(a), _ends(b)))


def _meets(a, b) -> bool:
    return all(al < bh and bl < ah for (al, ah), (bl, bh) in zip(_ends(a), _ends(b)))


def _leq(s: Tile, t: Tile) -> bool:
    return _contains(t.time, s.time) and _contains(s.freq, t.freq)


def _partition_ok(s: Tile) -> bool:
    parts = [s.semi(i) for i in range(1, 2**s.dim + 1)]
    if sum(p.volume for p in parts) != s.freq.volume:
        return False
    if not all(_contains(s.freq, p) for p in parts):
        return False
    if any(_meets(a, b) for a, b in itertools.combinations(parts, 2)):
        return False
    return [p.center for p in parts] == sorted(p.center for p in parts)


def exhaustive_window_1d(a: int = 2, b: int = 2) -> list:
    """Every tile with scale in [-6, 6] whose time cube meets [0, 2^a) and frequency cube meets [0, 2^b)."""
    out = []
    for k in range(-6, 7):
        for m in range(max(1, 2 ** (a - k))):
            for w in range(max(1, 2 ** (b + k))):
                out.append(Tile(DyadicCube(k, (m,)), DyadicCube(-k, (w,))))
    return out


def test_02_geometry_exactness():
    t0 = time.perf_counter()
    fails = 0
    tiles = exhaustive_window_1d()
    T = len(tiles)
    # order: scalar, vectorized and definitional agree on every pair
    L = geo.leq_matrix(tiles, tiles)
    Lr = geo.leq_matrix(tiles, tiles, 2)
    for i, s in enumerate(tiles):
        for j, t in enumerate(tiles):
            ref = _leq(s, t)
            fails += (tile_leq(s, t) != ref) + (bool(L[i, j]) != ref)
            fails += bool(Lr[i, j]) != (ref and _contains(s.semi(2), t.semi(2)))
    # partial order: reflexive, antisymmetric, transitive (matrix product over all triples)
    fails += int((~np.diag(L)).sum())
    fails += int((L & L.T & ~np.eye(T, dtype=bool)).sum())
    Lf = L.astype(np.float32)
    fails += int(((Lf @ Lf > 0) & ~L).sum())
    # semi-tile partition
    fails += sum(not _partition_ok(s) for s in tiles)
    # dyadic dichotomy over every cube of the window
    cubes = sorted({s.time for s in tiles} | {s.freq for s in tiles} | {s.semi(i) for s in tiles for i in (1, 2)})
    for A, B in itertools.product(cubes, repeat=2):
        meet = _meets(A, B)
        fails += meet != A.intersects(B)
        fails += A.contains(B) != _contains(A, B)
        if meet:
            fails += not (_contains(A, B) or _contains(B, A))
    n1 = T * T
    # randomized n = 2
    rng = np.random.default_rng(2024)
    cases = 100_000
    for _ in range(cases):
        k = int(rng.integers(-6, 7))
        t = Tile(DyadicCube(k, tuple(int(v) for v in rng.integers(-4, 4, 2))), DyadicCube(-k, tuple(int(v) for v in rng.integers(-4, 4, 2))))
        d = int(rng.integers(0, 3)) if k - 2 >= -6 else 0
        ks = k - d
        if rng.uniform() < 0.5:
            m = tuple((v << d) + int(rng.integers(0, 1 << d)) for v in t.time.index)
        else:
            m = tuple(int(v) for v in rng.integers(-8, 8, 2))
        w = tuple(v >> d for v in t.freq.index) if rng.uniform() < 0.5 else tuple(int(v) for v in rng.integers(-4, 4, 2))
        s = Tile(DyadicCube(ks, m), DyadicCube(-ks, w))
        r = int(rng.integers(2, 5))
        ref = _leq(s, t)
        fails += tile_leq(s, t) != ref
        fails += geo.rtree_member(s, t, r) != (ref and _contains(s.semi(r), t.semi(r)))
        fails += not _partition_ok(s)
        meet = _meets(s.time, t.time)
        fails += meet != s.time.intersects(t.time)
        if meet:
            fails += not (_contains(s.time, t.time) or _contains(t.time, s.time))
    dt = time.perf_counter() - t0
    ok = fails == 0
    report(2, "geometry exactness", ok, f"n=1 exhaustive {T} tiles ({n1} pairs), n=2 {cases} random cases, {fails} failures, {dt:.1f} s")
    assert ok


# -- 3 -------------------------------------------------------------------------------


def test_03_bessel_rtrees():
    rep = X.Bessel_rtrees(RunConfig.desk(1), trials=200)
    c = rep.constants
    ok = rep.checks["finite"] and rep.checks["stable"]
    report(3, "Bessel on r-trees", ok, f"200 trees, C = {c['C']:.4g} -> {c['C_refined']:.4g} on the doubled grid")
    assert ok


# -- 4 -------------------------------------------------------------------------------


def test_04_decomposition_certificates():
    cfg = RunConfig.desk(1, trials=50)
    res = [X.e3_trial(cfg, i, 200) for i in range(50)]
    fails = sum(t["failures"] for t in res)
    decomposed = sum(t["tiles"] > 0 for t in res)
    sizes = [t["tiles"] for t in res]
    ok = fails == 0 and max(sizes) <= 200 and decomposed == 50
    report(4, "decomposition certificates", ok, f"{decomposed}/50 nonempty tile sets (<= {max(sizes)} tiles), {fails} certificate failures")
    assert ok


# -- 5 -------------------------------------------------------------------------------


def test_05_energy_bruteforce():
    cfg = RunConfig.desk(1)
    grid = S.desk_grid(cfg)
    window = S.window_tiles(cfg)
    worst = 0.0
    nontrivial = 0
    for i in range(1000):
        rng = S.trial_rng(0, "acceptance-5", i)
        # draw Q near a random top so that trees with several tiles occur
        top = window[int(rng.integers(len(window)))]
        near = [s for s in window if s.time.intersects(top.time) or s.freq.intersects(top.freq)]
        size = int(rng.integers(1, 13))
        Q = S.subsample(rng, near, size)
        F, _ = S.random_F(rng, grid, cfg)
        rep = energy(F, Q, cfg.r)
        fnorm = lp_norm(F, 2)
        coeffs = np.array([inner(F, wave_packet(s, grid).samples) for s in Q])
        ref = energy_bruteforce(Q, coeffs, fnorm, cfg.r)
        nontrivial += len(rep.witness) > 1 if rep.witness else 0
        err = abs(rep.value - ref) / ref if ref > 0 else abs(rep.value)
        worst = max(worst, err)
    ok = worst <= 1e-12
    report(5, "energy via brute force", ok, f"1000 cases (|Q| <= 12, {nontrivial} multi-tile witnesses), max rel err {worst:.2e}")
    assert ok


# -- 6 and 7 share the CZ suite --------------------------------------------------------


@pytest.fixture(scope="module")
def cz_suite():
    return X.E4_cz_suite(RunConfig.desk(1, trials=50, refine=True))


def test_06_cz_exactness(cz_suite):
    c = cz_suite.constants
    ok_trials = [t for t in cz_suite.trials if t["status"] == "ok"]
    with_cubes = sum(t["cubes"] > 0 for t in ok_trials)
    ok = c["reconstruction_error"] <= 1e-12 and c["max_mean_error"] <= 1e-10 and c["compliance_11p"] == 1.0 and with_cubes > 0
    report(6, "CZ exactness", ok,
           f"50 pairs ({with_cubes} with bad cubes, {c['nothing_to_prove']} vacuous), reconstruction {c['reconstruction_error']:.1e}, "
           f"mean {c['max_mean_error']:.1e} |J|^(1/2), (11p) {100 * c['compliance_11p']:.0f}%")
    assert ok


def test_07_bound_formulas(cz_suite):
    c = cz_suite.constants
    ok = c["pairs"] >= 500 and c["gm_error_max"] <= 1e-12 and bool(cz_suite.stable)
    report(7, "bound formulas", ok,
           f"{c['pairs']} (b_k, s) pairs, gm error {c['gm_error_max']:.1e}, C_gamma {c['C_gamma']:.4g} -> {c['C_gamma_refined']:.4g}")
    assert ok


# -- 8 -------------------------------------------------------------------------------


def test_08_distributional_shape():
    rep = X.E2_distributional(RunConfig.desk(1, trials=20))
    c = rep.constants
    ok = rep.ok
    report(8, "distributional shape", ok,
           f"20 trials, C = {c['C']:.4g}, c = {c['c']:.4g}, {c.get('empty_tails', 0)} empty tails, checks {sorted(k for k, v in rep.checks.items() if not v) or 'all ok'}")
    assert ok


# -- 9 -------------------------------------------------------------------------------


def test_09_restricted_weak_type():
    rep = X.E1_restricted_weak_type(RunConfig.desk(1, trials=100))
    c = rep.constants
    sups = ", ".join(f"{k}={v:.3g}" for k, v in sorted(c.items()) if k.startswith("C_") and isinstance(v, float))
    ok = rep.ok
    levels = "[" + ", ".join(f"{v:.3g}" for v in c["C_4.0_by_level"]) + "]"
    report(9, "restricted weak type", ok, f"100 trials, {sups}; p=4 sup by level {levels}; "
           f"failed checks: {sorted(k for k, v in rep.checks.items() if not v) or 'none'}")
    assert ok


# -- 10 ------------------------------------------------------------------------------


def test_10_shell_counting():
    lines = []
    ok = True
    for dim in (1, 2):
        rep = X.E5_shell_counting(RunConfig.desk(dim, trials=50))
        c = rep.constants
        ok &= rep.ok
        lines.append(f"n={dim}: c_n = {c['c_n']:.3g} <= {2 ** (dim + 1)}, C0 2^-gamma = {c['C0'] * 2.0 ** -RunConfig.desk(dim).gamma:.2e}")
    report(10, "shell counting", ok, "; ".join(lines))
    assert ok


# -- 11 ------------------------------------------------------------------------------


def _cli(args, out):
    return subprocess.run([sys.executable, "-m", "dyadsum.harness", *args, "--out", str(out)], capture_output=True, text=True, cwd=ROOT)


def test_11_reproducibility(tmp_path):
    conf = tmp_path / "repro.conf"
    conf.write_text("trials=3\nmax_tiles=120\n")
    runs = [
        ["verify", "--experiment", "E1,E3,E4,E5,BESSEL", "--config", str(conf)],
        ["scan", "--experiment", "E2,E6", "--config", str(conf)],
        ["calibrate-kappa", "--config", str(conf)],
        ["decompose", "--certify", "--config", str(conf)],
        ["cz", "--config", str(conf)],
        ["verify", "--experiment", "E5", "--dim", "2", "--config", str(conf)],
    ]
    mismatched = []
    compared = 0
    for k, args in enumerate(runs):
        a, b = tmp_path / f"a{k}", tmp_path / f"b{k}"
        _cli(args, a)
        _cli(args, b)
        files = sorted(p.name for p in a.iterdir() if not p.name.endswith(".timing.json"))
        for name in files:
            compared += 1
            if (a / name).read_bytes() != (b / name).read_bytes():
                mismatched.append(name)
        if not files:
            mismatched.append(f"no output for {args[0]}")
    ok = not mismatched and compared > 0
    report(11, "reproducibility", ok, f"{compared} report files regenerated, {len(mismatched)} differ {mismatched or ''}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
