import numpy as np
import pytest

from oracles import event_E_brute, event_F_brute
from perctravel.events import (
    EventReport,
    cached_travel,
    check_event_E,
    check_event_F,
    quarter_of,
    recheck,
    travel_E,
    travel_F,
    wilson_upper,
)
from perctravel.lattice import sample_configuration


def _agrees(rep, ref):
    assert rep.holds == ref["holds"]
    assert rep.max_travel == ref["max_travel"]
    assert rep.violating_centers == ref["violating_centers"]
    assert rep.checks_performed == ref["checks"]
    if ref["witness"] is None:
        assert rep.violation is None
    else:
        v = rep.violation
        assert (tuple(v.center), v.shape, v.target, v.travel) == ref["witness"]


@pytest.mark.parametrize("seed,p,k", [(1, 0.3, 1), (2, 0.6, 1), (3, 0.9, 0)])
def test_event_E_matches_brute_force(seed, p, k):
    cfg = sample_configuration(3, p, seed)
    _agrees(check_event_E(cfg, k), event_E_brute(cfg, k))


@pytest.mark.parametrize("seed,p,k", [(1, 0.3, 1), (2, 0.6, 0), (3, 0.9, 0)])
def test_event_F_matches_brute_force(seed, p, k):
    cfg = sample_configuration(3, p, seed)
    _agrees(check_event_F(cfg, k), event_F_brute(cfg, k))


def test_all_open_holds_and_all_closed_fails():
    opn = sample_configuration(4, 1.0, 0)
    assert check_event_E(opn, 0).holds and check_event_F(opn, 0).holds
    shut = sample_configuration(1, 0.0, 0)
    rep = check_event_E(shut, 0)
    assert not rep.holds
    v = rep.violation
    assert tuple(v.center) == (0, 0, 0) and v.shape == 1 and v.target == 0 and v.travel == 2
    # at r² = 1 the centre lies in every thick set, so the cost is the centre alone
    assert check_event_F(shut, 1).holds and not check_event_F(shut, 0).holds


def test_report_counts():
    rep = check_event_E(sample_configuration(2, 0.5, 1), 5)
    # centres at depth 1 (26 of them) have one box, the origin has two
    assert rep.n_subboxes == 26 + 2
    assert rep.checks_performed == 24 * rep.n_subboxes
    assert rep.holds


def test_recheck_reproduces_witness():
    for event, check in (("E", check_event_E), ("F", check_event_F)):
        cfg = sample_configuration(4, 0.45, 8)
        rep = check(cfg, 0)
        assert not rep.holds
        assert recheck(cfg, rep) == rep.violation.travel


def test_single_checks_and_on_demand():
    cfg = sample_configuration(4, 0.5, 3)
    full = check_event_E(cfg, 1)
    v = full.violation
    face, quadrant = quarter_of(v.target)
    assert travel_E(cfg, v.center, v.shape, face, quadrant) == v.travel
    rep = check_event_E(cfg, 1, "on_demand", queries=[(v.center, v.shape, face, quadrant)] * 2)
    assert rep.checks_performed == 1 and not rep.holds
    assert rep.violation == v
    assert cached_travel(cfg, "E", (v.center, v.shape, face, quadrant)) == v.travel
    f = check_event_F(cfg, 5, "on_demand", queries=[((0, 0, 0), 9, 0), ((1, 0, 0), 4, 47)])
    assert f.holds and f.checks_performed == 2
    assert f.max_travel == max(travel_F(cfg, (0, 0, 0), 9, 0), travel_F(cfg, (1, 0, 0), 4, 47))


def test_sampled_mode_and_json_round_trip():
    cfg = sample_configuration(6, 0.7, 9)
    rep = check_event_F(cfg, 1, "sampled", samples=40, sample_seed=5)
    assert rep.samples == 40 and rep.sample_seed == 5
    assert 0 <= rep.violating_centers <= 40
    assert rep.violation_rate_upper >= rep.violating_centers / 40
    back = EventReport.from_json(rep.to_json())
    assert back == rep
    again = check_event_F(cfg, 1, "sampled", samples=40, sample_seed=5)
    assert again == rep


def test_threads_do_not_change_reports():
    cfg = sample_configuration(4, 0.5, 2)
    assert check_event_E(cfg, 1, threads=1) == check_event_E(cfg, 1, threads=3)
    assert check_event_F(cfg, 1, threads=1) == check_event_F(cfg, 1, threads=3)


def test_argument_checks():
    cfg = sample_configuration(2, 0.5, 1)
    with pytest.raises(ValueError):
        check_event_E(cfg, -1)
    with pytest.raises(ValueError):
        check_event_E(cfg, 1, "bogus")
    with pytest.raises(ValueError):
        check_event_E(cfg, 1, "sampled")
    with pytest.raises(ValueError):
        check_event_E(sample_configuration(20, 0.5, 1), 1)


def test_wilson_upper():
    assert wilson_upper(0, 100) == pytest.approx(0.0267, abs=1e-3)
    assert wilson_upper(100, 100) == 1.0
    assert np.all(np.diff([wilson_upper(k, 50) for k in range(51)]) > 0)
