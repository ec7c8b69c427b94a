import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadsum.field import (
    ChoiceMap,
    Grid,
    SampledField,
    indicator,
    inner,
    l2_norm_fourier,
    lp_norm,
    read_choice,
    read_field,
    write_choice,
    write_field,
    export_csv,
)
from dyadsum.geometry import Box, DyadicCube

UNIT = Grid(1, (0.0,), (1.0,), 256)


def random_field(seed, grid=UNIT):
    r = np.random.default_rng(seed)
    return SampledField(grid, r.normal(size=grid.shape) + 1j * r.normal(size=grid.shape))


def test_grid_spacing_and_levels():
    g = Grid.centered(2, 4.0, 64)
    assert g.spacing == (0.125, 0.125)
    assert g.size == 64**2
    assert g.dyadic_level() == -3
    assert g.cell_offset() == (-32, -32)
    with pytest.raises(ValueError):
        Grid(1, (0.0,), (1.0,), 100)


def test_indicator_examples():
    whole = indicator(UNIT, [UNIT.box])
    assert np.all(whole.samples == 1) and lp_norm(whole, 1) == 1.0
    assert indicator(UNIT, []).measure() == 0.0
    q = indicator(UNIT, [Box((0.0,), (0.25,))])
    assert np.count_nonzero(q.samples) == 64
    assert q.measure() == 0.25
    with pytest.raises(ValueError):
        indicator(UNIT, [Box((0.5,), (1.5,))])


def test_lp_norm_examples():
    one = indicator(UNIT, [UNIT.box])
    for p in (1, 1.5, 2, 3, np.inf):
        assert lp_norm(one, p) == pytest.approx(1.0, abs=1e-14)
    q = indicator(UNIT, [Box((0.0,), (0.25,))])
    assert lp_norm(q, 2) == 0.5
    f = random_field(0)
    for p in (1, 2, 4, np.inf):
        assert lp_norm(f * (-3.0), p) == pytest.approx(3 * lp_norm(f, p), rel=1e-13)
    with pytest.raises(ValueError):
        lp_norm(f, 0.5)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_inner_identities(a, b):
    f, g = random_field(a), random_field(b)
    assert inner(f, f).real == pytest.approx(lp_norm(f, 2) ** 2, rel=1e-12)
    assert inner(f, g) == pytest.approx(np.conj(inner(g, f)), rel=1e-12)


def test_disjoint_indicators_orthogonal():
    a = indicator(UNIT, [Box((0.0,), (0.5,))])
    b = indicator(UNIT, [Box((0.5,), (1.0,))])
    assert inner(a, b) == 0


@given(st.integers(0, 10_000))
def test_parseval(seed):
    g = Grid.centered(2, 2.0, 32)
    f = random_field(seed, g)
    assert l2_norm_fourier(f) == pytest.approx(lp_norm(f, 2), rel=1e-10)


@given(st.integers(0, 10_000), st.sampled_from([(1.0, np.inf), (2.0, 2.0), (1.5, 3.0), (4.0, 4.0 / 3.0)]))
def test_holder(seed, pq):
    f, g = random_field(seed), random_field(seed + 1)
    p, q = pq
    assert abs(inner(f, g)) <= lp_norm(f, p) * lp_norm(g, q) * (1 + 1e-12)


def test_l1_l2_support_bound():
    q = indicator(UNIT, [Box((0.125,), (0.5,))])
    assert lp_norm(q, 1) <= lp_norm(q, 2) * q.measure() ** 0.5 * (1 + 1e-12)


def test_modulate_unimodular():
    f = random_field(3)
    g = f.modulate((2.5,))
    assert np.allclose(np.abs(g.samples), np.abs(f.samples))


def test_cube_slices_match_box_mask():
    g = Grid.centered(1, 8.0, 128)
    c = DyadicCube(-1, (3,))
    sl = g.cube_slices(c)
    mask = np.zeros(g.shape, bool)
    mask[sl] = True
    assert np.array_equal(mask, g.box_mask(c.as_box()))
    assert mask.sum() * g.cell_volume == c.volume


def test_choice_map_membership_half_open():
    g = Grid.centered(1, 1.0, 4)
    N = ChoiceMap(g, np.array([0.0, 0.5, 0.999, 1.0]))
    assert N.in_cube(DyadicCube(0, (0,))).tolist() == [True, True, True, False]
    assert N.cube_index(-1).tolist() == [[0], [1], [1], [2]]
    with pytest.raises(ValueError):
        ChoiceMap(g, np.zeros((4, 2)))


def test_field_and_choice_io_round_trip(tmp_path):
    g = Grid.centered(2, 2.0, 16)
    f = random_field(5, g)
    write_field(tmp_path / "f.field", f)
    h = read_field(tmp_path / "f.field")
    assert h.grid == g and np.array_equal(h.samples, f.samples)
    N = ChoiceMap(g, np.random.default_rng(0).uniform(-1, 1, g.shape + (2,)))
    write_choice(tmp_path / "n.choice", N)
    M = read_choice(tmp_path / "n.choice")
    assert np.array_equal(M.values, N.values)
    f1 = random_field(6)
    export_csv(tmp_path / "f.csv", f1)
    assert (tmp_path / "f.csv").read_text().count("\n") >= UNIT.size
