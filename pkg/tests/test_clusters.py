import numpy as np
import pytest

from oracles import states_of, union_find_labels
from perctravel.clusters import (
    onion_layers,
    open_cluster,
    reaches_boundary,
    reaches_boundary_sampled,
)
from perctravel.lattice import BallSpec, box, mix_seed, sample_configuration
from perctravel.traveltime import travel_field


@pytest.mark.parametrize("seed,p", [(1, 0.25), (2, 0.35), (3, 0.6)])
def test_open_cluster_matches_union_find(seed, p):
    cfg = sample_configuration(5, p, seed)
    states = states_of(cfg)
    allowed = set(states)
    labels = union_find_labels(states, allowed)
    for x in [(0, 0, 0), (1, 2, 3), (-5, 5, 0), (2, -1, -4)]:
        got = {tuple(s) for s in open_cluster(cfg, box(5), x)}
        if not states[x]:
            assert got == set()
        else:
            assert got == {s for s, r in labels.items() if r == labels[x]}


def test_open_cluster_respects_region():
    cfg = sample_configuration(4, 1.0, 0)
    ball = BallSpec((0, 0, 0), 2)
    assert len(open_cluster(cfg, ball, (0, 0, 0))) == len(ball.sites())


@pytest.mark.parametrize("seed,p", [(4, 0.3), (5, 0.5), (6, 0.7)])
def test_onion_layers_are_travel_balls(seed, p):
    n = 6
    cfg = sample_configuration(n, p, seed).with_states(open_sites=[(0, 0, 0)])
    layers = onion_layers(cfg, box(n), (0, 0, 0), 4)
    field = travel_field(cfg, box(n), (0, 0, 0))
    for k, layer in enumerate(layers.layers):
        assert {tuple(s) for s in layer} == field.ball(k)
    for a, shell in enumerate(layers.shells):
        assert all(not cfg.is_open(s) for s in shell)
        for b in range(a):
            assert not ({tuple(s) for s in shell} & {tuple(s) for s in layers.shells[b]})


def test_truncation_flag():
    cfg = sample_configuration(2, 1.0, 0)
    layers = onion_layers(cfg, box(2), (0, 0, 0), 2)
    assert layers.truncated_at == 0 and layers.exact_layers() == []
    shut = sample_configuration(3, 0.0, 0).with_states(open_sites=[(0, 0, 0)])
    layers = onion_layers(shut, box(3), (0, 0, 0), 4)
    # C_k is the l1 ball of radius k, which reaches the faces of Λ(3) at k = 3
    assert layers.truncated_at == 3
    assert len(layers.exact_layers()) == 3


def test_closed_origin_is_rejected():
    cfg = sample_configuration(2, 0.0, 0)
    with pytest.raises(ValueError):
        onion_layers(cfg, box(2), (0, 0, 0), 1)
    with pytest.raises(ValueError):
        onion_layers(sample_configuration(2, 1.0, 0), box(2), (0, 0, 0), -1)


def test_reaches_boundary_extremes():
    assert reaches_boundary(sample_configuration(5, 1.0, 0), 5)
    assert not reaches_boundary(sample_configuration(5, 0.0, 0), 3)
    assert reaches_boundary(sample_configuration(5, 1.0, 0), 0)
    with pytest.raises(ValueError):
        reaches_boundary(sample_configuration(2, 1.0, 0), 3)


def test_reaches_boundary_matches_union_find():
    for seed in range(20):
        cfg = sample_configuration(4, 0.35, seed)
        states = states_of(cfg)
        labels = union_find_labels(states, set(states))
        expect = states[(0, 0, 0)] and any(
            labels[s] == labels[(0, 0, 0)] for s in labels if max(map(abs, s)) == 4)
        assert reaches_boundary(cfg, 4) == expect


def test_sampled_search_matches_stored_configurations():
    R, p = 6, 0.35
    seeds = np.array([mix_seed(3, i) for i in range(300)], dtype=np.uint64)
    lazy = reaches_boundary_sampled(R, p, seeds)
    stored = [reaches_boundary(sample_configuration(R, p, int(s)), R) for s in seeds]
    assert lazy.tolist() == stored
    assert 0 < lazy.sum() < len(seeds)
