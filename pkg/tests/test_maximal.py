import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadsum.field import Grid, SampledField, indicator
from dyadsum.geometry import Box, DyadicCube
from dyadsum.maximal import (
    choose_q,
    cubes_in_omega,
    exceptional_set,
    hl_maximal,
    infimum_over,
    level_set,
    shell_families,
    shell_index,
    whitney_cubes,
)


def brute_uncentered_1d(a):
    n = len(a)
    S = np.concatenate([[0.0], np.cumsum(a)])
    out = np.zeros(n)
    for lo in range(n):
        for hi in range(lo + 1, n + 1):
            v = (S[hi] - S[lo]) / (hi - lo)
            out[lo:hi] = np.maximum(out[lo:hi], v)
    return out


def brute_uncentered_2d(a):
    n = a.shape[0]
    S = np.zeros((n + 1, n + 1))
    S[1:, 1:] = a.cumsum(0).cumsum(1)
    out = np.zeros_like(a)
    for w in range(1, n + 1):
        for x in range(n + 1 - w):
            for y in range(n + 1 - w):
                v = (S[x + w, y + w] - S[x, y + w] - S[x + w, y] + S[x, y]) / w**2
                out[x : x + w, y : y + w] = np.maximum(out[x : x + w, y : y + w], v)
    return out


@given(st.integers(0, 10_000))
def test_uncentered_matches_brute_force_1d(seed):
    g = Grid.centered(1, 4.0, 64)
    a = np.random.default_rng(seed).uniform(size=64) ** 3
    M = hl_maximal(SampledField(g, a)).samples.real
    assert np.abs(M - brute_uncentered_1d(a)).max() <= 1e-13


def test_uncentered_matches_brute_force_2d():
    g = Grid.centered(2, 4.0, 16)
    a = np.random.default_rng(1).uniform(size=(16, 16))
    M = hl_maximal(SampledField(g, a)).samples.real
    assert np.abs(M - brute_uncentered_2d(a)).max() <= 1e-13


def test_constant_field():
    g = Grid.centered(2, 2.0, 32)
    M = hl_maximal(SampledField(g, np.full(g.shape, 0.7)))
    assert np.allclose(M.samples, 0.7, atol=1e-14)


def test_centered_example_at_two():
    # chi_[0,1) on [-8, 8): the centered maximal function at x = 2 is 1/4
    # (best radius 2); the grid is shifted so x = 2 is a cell center
    h = 1 / 64
    g = Grid(1, (-8.0 - h / 2,), (8.0 - h / 2,), 1024)
    x = g.axis_centers(0)
    F = SampledField(g, ((x >= 0) & (x < 1)).astype(float))
    i = int(np.argmin(np.abs(x - 2)))
    assert x[i] == 2.0
    assert abs(hl_maximal(F, centered=True).samples[i].real - 0.25) <= 2 * h


@given(st.integers(0, 10_000))
def test_maximal_dominates_field(seed):
    g = Grid.centered(1, 8.0, 128)
    a = np.random.default_rng(seed).uniform(size=128)
    M = hl_maximal(SampledField(g, a)).samples.real
    assert np.all(M >= a - 1e-12)  # summed-area differences round at this level


def test_rejects_signed_field():
    g = Grid.centered(1, 1.0, 8)
    with pytest.raises(ValueError):
        hl_maximal(SampledField(g, -np.ones(8)))


def test_weak_11_surrogate():
    # lambda |{M chi_F > lambda}| <= C |F|; the measured sup is about 1.76 in
    # 1-D (the continuous uncentered constant is 2)
    rng = np.random.default_rng(0)
    g = Grid.centered(1, 32.0, 512)
    worst = 0.0
    for _ in range(20):
        F = SampledField(g, (rng.uniform(size=512) < 0.05).astype(float))
        M = hl_maximal(F).samples.real
        for lam in np.geomspace(0.01, 1, 30):
            worst = max(worst, lam * (M > lam).sum() * g.cell_volume / F.measure())
    assert 1.0 <= worst <= 2.0


def test_choose_q_examples():
    assert choose_q(2.0, 0.5) == 1.5
    assert choose_q(2.0, 4.0) == math.inf
    for p in (1.25, 2.0, 4.0):
        q = choose_q(p, 1.0)
        assert 1 <= q < p
    with pytest.raises(ValueError):
        choose_q(1.0, 0.5)


def test_exceptional_set_empty_cases():
    g = Grid.centered(1, 8.0, 256)
    F = indicator(g, [Box((0.0,), (2.0,))])
    om = exceptional_set(F, 1.0, 2.0, kappa=1.0)
    assert om.q == math.inf and om.empty
    assert exceptional_set(indicator(g, []), 1.0, 2.0).empty


def test_exceptional_set_threshold():
    g = Grid.centered(1, 8.0, 256)
    F = indicator(g, [Box((0.0,), (0.25,))])
    om = exceptional_set(F, 1.0, 2.0, kappa=1.0)
    assert om.q == 1.5
    assert om.threshold == pytest.approx(0.5 ** (2 / 3))
    M = hl_maximal(F).samples.real
    assert np.array_equal(om.cells, M > om.threshold)
    assert 0 < om.measure <= 0.5


def test_whitney_cubes_cover_and_disjoint(rng):
    g = Grid.centered(1, 8.0, 128)
    for _ in range(10):
        mask = np.zeros(128, bool)
        for a in rng.integers(0, 120, size=3):
            mask[a : a + int(rng.integers(1, 9))] = True
        wh = whitney_cubes(g, mask)
        cover = np.zeros(128, int)
        for c in wh:
            cover[g.cube_slices(c)] += 1
        assert np.array_equal(cover, mask.astype(int))
        # maximality: the parent leaves the mask
        for c in wh:
            assert not mask[g.cube_slices(c.parent())].all()


def test_shell_families_definition():
    g = Grid.centered(1, 16.0, 256)
    F = indicator(g, [Box((0.0,), (1.0,))])
    om = level_set(F, 0.1)
    assert om.contains_cube(DyadicCube(0, (0,)))
    J = DyadicCube(-2, (-60,))
    k = shell_index(DyadicCube(0, (0,)), om)
    assert om.contains_box(DyadicCube(0, (0,)).dilate(2.0**k))
    assert not om.contains_box(DyadicCube(0, (0,)).dilate(2.0 ** (k + 1)))
    assert shell_index(J, om) is None
    fams = shell_families(cubes_in_omega(om), om)
    seen = [c for f in fams for c in f.cubes]
    assert len(seen) == len(set(seen))
    for f in fams:
        # maximal members of one family are disjoint and inside Omega
        assert f.total_measure >= sum(c.volume for c in f.maximal)
        assert sum(c.volume for c in f.maximal) <= om.measure + 1e-12


def test_shell_families_empty_omega():
    g = Grid.centered(1, 8.0, 64)
    om = level_set(indicator(g, []), 0.5)
    assert all(not f.cubes for f in shell_families(cubes_in_omega(om), om))


def test_infimum_over():
    g = Grid.centered(1, 2.0, 8)
    M = SampledField(g, np.arange(8.0))
    assert infimum_over(M, Box((0.0,), (2.0,))) == 4.0
    assert math.isnan(infimum_over(M, Box((5.0,), (6.0,))))
