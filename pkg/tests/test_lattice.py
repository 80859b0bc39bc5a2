import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import sum_of_three_squares
from perctravel.lattice import (
    BallSpec,
    BoxSpec,
    Configuration,
    Site,
    SiteSet,
    admissible_radii,
    box,
    index_to_site,
    inner_boundary,
    is_sum_of_three_squares,
    lattice_witness,
    load_configuration,
    mix_seed,
    outer_boundary,
    sample_configuration,
    save_configuration,
    site_index,
    sites_to_indices,
)

coords = st.integers(-6, 6)


@given(coords, coords, coords)
def test_site_index_round_trip(x, y, z):
    n = 6
    i = site_index((x, y, z), n)
    assert 0 <= i < 13 ** 3
    assert index_to_site(i, n) == (x, y, z)


def test_index_order_has_x_fastest():
    assert site_index((-1, -1, -1), 1) == 0
    assert site_index((0, -1, -1), 1) == 1
    assert site_index((-1, 0, -1), 1) == 3
    assert site_index((-1, -1, 0), 1) == 9
    pts = box(2).sites()
    assert np.array_equal(sites_to_indices(pts, 2), np.arange(125))


def test_box_boundaries():
    inner = inner_boundary(box(2))
    outer = outer_boundary(box(2))
    assert len(inner) == 5 ** 3 - 3 ** 3
    # only face-adjacent sites: 6 faces of 5 x 5
    assert len(outer) == 6 * 25
    assert all(max(abs(c) for c in s) == 2 for s in inner)
    assert all(max(abs(c) for c in s) == 3 and sum(abs(c) == 3 for c in s) == 1 for s in outer)


def test_ball_and_site_set_boundaries():
    ball = BallSpec((0, 0, 0), 4)
    assert ball.contains((2, 0, 0)) and not ball.contains((2, 1, 0))
    inner = {tuple(s) for s in inner_boundary(ball)}
    members = {tuple(s) for s in ball.sites()}
    for s in members:
        nbrs = [(s[0] + d[0], s[1] + d[1], s[2] + d[2]) for d in
                ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))]
        assert (s in inner) == any(v not in members for v in nbrs)
    single = SiteSet.of([(0, 0, 0)])
    assert len(outer_boundary(single)) == 6
    assert len(inner_boundary(single)) == 1


def test_region_validation():
    with pytest.raises(ValueError):
        BoxSpec((0, 0, 0), -1)
    with pytest.raises(ValueError):
        BallSpec((0, 0, 0), 0)


@given(st.integers(0, 400))
def test_three_squares_matches_enumeration(k):
    assert is_sum_of_three_squares(k) == sum_of_three_squares(k)
    w = lattice_witness(k)
    assert (w is not None) == sum_of_three_squares(k)
    if w is not None:
        assert w.x ** 2 + w.y ** 2 + w.z ** 2 == k


def test_admissible_radii():
    radii = admissible_radii((0, 0, 0), box(3))
    assert radii[0] == 1 and radii[-1] == 9
    assert 7 not in radii and 9 in radii
    assert admissible_radii((3, 0, 0), box(3)) == []
    assert admissible_radii((2, 0, 0), box(3)) == [1]


def test_mix_seed_is_deterministic_and_spreads():
    seeds = {mix_seed(1, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert mix_seed(1, 5) == mix_seed(1, 5)
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_sampling_is_deterministic():
    a = sample_configuration(4, 0.5, 42)
    b = sample_configuration(4, 0.5, 42)
    c = sample_configuration(4, 0.5, 43)
    assert a == b
    assert a.to_bytes() == b.to_bytes()
    assert a != c


def test_extreme_probabilities():
    assert sample_configuration(3, 0.0, 1).open_flat.sum() == 0
    assert sample_configuration(3, 1.0, 1).open_flat.sum() == 7 ** 3


def test_open_fraction_is_near_p():
    cfg = sample_configuration(20, 0.3, 7)
    assert abs(cfg.open_fraction() - 0.3) < 0.01


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32), st.floats(0.05, 0.9), st.floats(0.01, 0.09))
def test_sampling_couples_monotonically_in_p(seed, p, dp):
    low = sample_configuration(4, p, seed).open_flat
    high = sample_configuration(4, p + dp, seed).open_flat
    assert np.all(low <= high)


def test_stream_is_position_addressed():
    small = sample_configuration(2, 0.5, 11)
    big = sample_configuration(3, 0.5, 11)
    # the same index draws the same uniform, whatever the box size
    assert np.array_equal(small.open_flat, big.open_flat[:125])


def test_grid_view_matches_site_lookup():
    cfg = sample_configuration(3, 0.5, 5)
    for s in [(-3, -3, -3), (1, -2, 3), (0, 0, 0), (3, 2, -1)]:
        assert cfg.grid[s[0] + 3, s[1] + 3, s[2] + 3] == cfg.is_open(s)


def test_with_states():
    cfg = sample_configuration(2, 0.5, 5)
    forced = cfg.with_states(open_sites=[(0, 0, 0)], closed_sites=[(1, 1, 1)])
    assert forced.is_open((0, 0, 0)) and not forced.is_open((1, 1, 1))
    assert cfg.open_flat.flags.writeable is False


def test_perc_round_trip(tmp_path):
    cfg = sample_configuration(5, 0.37, 2 ** 63 + 5)
    path = tmp_path / "c.perc"
    save_configuration(path, cfg)
    data = path.read_bytes()
    assert data[:5] == b"PERC3" and data[5] == 1
    assert len(data) == 6 + 20 + (11 ** 3 + 7) // 8
    back = load_configuration(path)
    assert back == cfg
    assert back.to_bytes() == data


def test_perc_rejects_bad_input():
    cfg = sample_configuration(2, 0.5, 1)
    data = cfg.to_bytes()
    with pytest.raises(ValueError):
        Configuration.from_bytes(b"XXXXX" + data[5:])
    with pytest.raises(ValueError):
        Configuration.from_bytes(data[:5] + bytes([9]) + data[6:])
    with pytest.raises(ValueError):
        Configuration.from_bytes(data[:-1])


def test_sample_rejects_bad_arguments():
    with pytest.raises(ValueError):
        sample_configuration(2, 1.5, 0)
    with pytest.raises(ValueError):
        sample_configuration(-1, 0.5, 0)


def test_site_arithmetic():
    assert Site(1, 2, 3) + (1, 1, 1) == (2, 3, 4)
    assert Site(1, 2, 3) - (1, 1, 1) == (0, 1, 2)
