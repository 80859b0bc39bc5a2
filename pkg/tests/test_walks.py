import math

import numpy as np
import pytest

from walk_checks import contraction_steps, doubles_every_three, face_monotone, legs_replay
from perctravel.geometry import face_distance
from perctravel.lattice import box, sample_configuration
from perctravel.traveltime import cluster_index, travel_field
from perctravel.walks import (
    WalkBudget,
    WalkTrace,
    capped_face_distances,
    chain_step,
    cube_walk,
    doubling_step,
    in_box,
    sphere_step_bound,
    sphere_walk,
    theorem_path,
)


def _budget(n, **kw):
    return WalkBudget.desk(n, math.ceil(3 * math.log(n)), **kw)


def test_budget_defaults():
    b = WalkBudget.desk(64, 10)
    assert b.stop_radius == 8 and b.r_min == pytest.approx(600)
    assert b.step_limit(64) == 64 * math.ceil(math.log(129))
    with pytest.raises(ValueError):
        WalkBudget(5, contraction=0.9)
    with pytest.raises(ValueError):
        WalkBudget(5, thickness=-1)


def test_doubling_step_choice():
    n = 16
    M, h, i, j = doubling_step((15, 2, -3), n)
    assert M == 1 and h == 1 and i == 2
    # the chosen quarter keeps every capped face distance
    assert j in range(1, 5)
    with pytest.raises(ValueError):
        # a boundary site has no room for a cube; the adjust leg removes this case
        doubling_step((16, 0, 0), n)


def test_chain_step_points_to_origin():
    assert chain_step((10, 3, -2), 4) == (2, 3)
    assert chain_step((1, -9, 0), 4) == (3, 3)


def test_capped_face_distances():
    assert capped_face_distances((0, 0, 0), 8) == [6] * 6
    assert capped_face_distances((7, 0, 0), 8)[:2] == [1, 6]


@pytest.mark.parametrize("x", [(16, 16, 16), (-16, 3, 0), (5, -16, 9), (12, 12, -1)])
def test_all_open_cube_walk_is_free(x):
    cfg = sample_configuration(16, 1.0, 0)
    tr = cube_walk(cfg, x, _budget(16))
    assert tr.outcome == "reached" and tr.total_cost == 0
    assert in_box(tr.final, 4)


@pytest.mark.parametrize("seed", range(8))
def test_cube_walk_invariants(seed):
    n = 32
    cfg = sample_configuration(n, 0.6, seed)
    rng = np.random.default_rng(seed)
    x = tuple(int(v) for v in rng.integers(-n, n + 1, 3))
    tr = cube_walk(cfg, x, _budget(n))
    assert tr.waypoints[0] == x
    assert tr.outcome in ("reached", "budget_exceeded")
    assert in_box(tr.final, n / 4)
    assert face_monotone(tr, n) and doubles_every_three(tr, n)
    assert legs_replay(cfg, tr)
    assert tr.total_cost == sum(tr.leg_costs)
    assert tr.total_cost >= travel_field(cfg, box(n), x)[tr.final]
    assert cube_walk(cfg, x, _budget(n)) == tr


def test_cube_walk_from_inner_box_is_empty():
    cfg = sample_configuration(16, 0.5, 1)
    tr = cube_walk(cfg, (1, 2, -3), _budget(16))
    assert tr.legs == [] and tr.outcome == "reached"
    with pytest.raises(ValueError):
        cube_walk(cfg, (17, 0, 0), _budget(16))


def test_budget_exceeded_names_the_leg():
    cfg = sample_configuration(16, 0.0, 0)
    tr = cube_walk(cfg, (16, 16, 16), WalkBudget(0, stop_radius=2))
    assert tr.outcome == "budget_exceeded"
    assert tr.legs[tr.failing_leg].label in ("doubling", "chain")


def test_sphere_walk_all_open():
    cfg = sample_configuration(32, 1.0, 0)
    tr = sphere_walk(cfg, (-8, -8, -8), (8, 7, 8), _budget(32))
    assert tr.outcome == "reached" and tr.total_cost == 0 and tr.final == (8, 7, 8)


@pytest.mark.parametrize("seed", range(6))
def test_sphere_walk_reaches_target(seed):
    n = 64
    cfg = sample_configuration(n, 0.6, seed)
    rng = np.random.default_rng(seed)
    x, y = (tuple(int(v) for v in rng.integers(-16, 17, 3)) for _ in range(2))
    b = _budget(n)
    tr = sphere_walk(cfg, x, y, b)
    assert tr.final == y and tr.outcome in ("reached", "budget_exceeded")
    assert legs_replay(cfg, tr)
    assert tr.steps <= b.step_limit(n)
    assert tr.total_cost >= cluster_index(cfg).travel_time(x, y)


def test_sphere_walk_contracts_above_r_min():
    n = 64
    b = WalkBudget(20, thickness=1.0, contraction=0.999, stop_radius=2.0)
    assert b.r_min < 55
    y = (16, 16, 16)
    for seed in range(5):
        cfg = sample_configuration(n, 0.6, seed)
        tr = sphere_walk(cfg, (-16, -16, -16), y, b)
        steps = contraction_steps(tr, y, b)
        assert steps
        assert all(new <= b.contraction * r for r, new in steps)
        assert tr.outcome != "contraction_violated"


def test_sphere_walk_needs_inner_sites():
    cfg = sample_configuration(16, 0.5, 1)
    with pytest.raises(ValueError):
        sphere_walk(cfg, (0, 0, 0), (9, 0, 0), _budget(16))


def test_sphere_step_bound():
    b = WalkBudget(5, stop_radius=10.0)
    assert sphere_step_bound(5, b) == 0
    assert sphere_step_bound(10 / 0.97 ** 3, b) == 3


@pytest.mark.parametrize("seed", range(5))
def test_theorem_path_never_beats_the_optimum(seed):
    n = 32
    cfg = sample_configuration(n, 0.6, seed)
    rng = np.random.default_rng(100 + seed)
    x, y = (tuple(int(v) for v in rng.integers(-n, n + 1, 3)) for _ in range(2))
    tr = theorem_path(cfg, x, y, _budget(n))
    assert tr.waypoints[0] == x and tr.final == y
    assert all(a == leg.start for a, leg in zip(tr.waypoints, tr.legs))
    assert tr.total_cost >= cluster_index(cfg).travel_time(x, y)
    assert legs_replay(cfg, tr)


def test_theorem_path_all_open_is_free():
    cfg = sample_configuration(16, 1.0, 0)
    tr = theorem_path(cfg, (16, -16, 3), (-15, 16, -16), _budget(16))
    assert tr.outcome == "reached" and tr.total_cost == 0


def test_trace_json_round_trip():
    cfg = sample_configuration(32, 0.6, 3)
    tr = theorem_path(cfg, (32, 1, -5), (-30, 20, 2), _budget(32))
    back = WalkTrace.from_json(tr.to_json())
    assert back == tr
    assert back.to_json() == tr.to_json()
    assert tr.queries("E") and all(len(q) == 4 for q in tr.queries("E"))


def test_face_distance_helper_matches_definition():
    assert [face_distance((3, -1, 2), 5, f) for f in range(1, 7)] == [2, 8, 6, 4, 3, 7]
