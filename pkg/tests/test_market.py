import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings
from hypothesis.strategies import integers

from conftest import single_cell
from mecsim.market import (
    Cloud, DemandProfile, DuplicateUser, ModeMismatch, Station, Topology, TopologyError, admit,
    critical_payments, is_special_case, occupancy, price, ranking_metric, ratio_bound,
    truthfulness_probe,
)
from mecsim.offload import VmCatalog
from mecsim.oracles import exact_admission
from mecsim.scenario import random_auction


def test_ranking_metric():
    catalog = VmCatalog((50e9,))
    topo = single_cell(10, 100e9, [0])
    d = DemandProfile(user=0, q=5, s=1, claimed=4.5, true_value=4.5)
    assert occupancy(d, topo, catalog) == pytest.approx(1.0)
    assert ranking_metric(d, topo, catalog) == pytest.approx(4.5)
    assert ranking_metric(replace(d, claimed=0.0), topo, catalog) == 0.0


def test_admit_three_users(three_users):
    demands, topo, catalog = three_users
    result = admit(demands, topo, catalog)
    assert result.winners == [1, 2]
    assert result.x[3] == 0
    assert result.welfare_bid == 16.0
    assert result.rank_order == (1, 2, 3)
    assert result.station_used == {0: 2}
    assert result.cloud_used == {0: 10e9}


def test_admit_empty():
    topo = single_cell(2, 10e9, [])
    result = admit([], topo, VmCatalog((5e9,)))
    assert result.winners == []
    assert result.welfare_bid == 0.0


def test_admit_adversarial(adversarial):
    demands, topo, catalog = adversarial
    greedy = admit(demands, topo, catalog)
    best = exact_admission(demands, topo, catalog)
    assert greedy.winners == [1]
    assert greedy.welfare_bid == pytest.approx(6.0)
    assert best.welfare == pytest.approx(9.6)
    assert best.winners == (2, 3)
    assert greedy.welfare_bid >= ratio_bound(topo, catalog) * best.welfare


def test_ties_prefer_higher_claim_then_smaller_id():
    catalog = VmCatalog((5e9, 10e9))
    topo = single_cell(4, 20e9, [0, 1, 2])
    demands = [
        DemandProfile(user=2, q=1, s=1, claimed=3.0, true_value=3.0),
        DemandProfile(user=1, q=2, s=2, claimed=6.0, true_value=6.0),
        DemandProfile(user=0, q=1, s=1, claimed=3.0, true_value=3.0),
    ]
    # gamma is 6 for every user
    assert admit(demands, topo, catalog).rank_order == (1, 0, 2)


def test_duplicate_user_rejected(three_users):
    demands, topo, catalog = three_users
    with pytest.raises(DuplicateUser):
        admit([*demands, demands[0]], topo, catalog)


def test_topology_requires_consistent_clouds():
    with pytest.raises(TopologyError):
        Topology(stations=(Station(0, 5, 1e6),), clouds=(Cloud(0, 1e9),), station_cloud={}, associations={})
    with pytest.raises(TopologyError):
        Topology(stations=(Station(0, 5, 1e6),), clouds=(Cloud(0, 1e9), Cloud(1, 1e9)),
                 station_cloud={0: 0}, associations={7: (0, 1)})


def test_ratio_bound_examples(adversarial):
    _, topo, catalog = adversarial
    assert ratio_bound(topo, catalog) == pytest.approx(0.3)

    stations = tuple(Station(k, 15, 1e6) for k in range(3))
    clouds = (Cloud(0, 50e9), Cloud(1, 100e9), Cloud(2, 200e9))
    topo = Topology(stations=stations, clouds=clouds, station_cloud={0: 0, 1: 1, 2: 2}, associations={})
    assert ratio_bound(topo, VmCatalog((5e9, 10e9, 20e9))) == pytest.approx(55 / 1200)

    unit = single_cell(1, 5e9, [])
    assert ratio_bound(unit, VmCatalog((5e9,))) == pytest.approx(1.0)


def test_special_case_detection(three_users, adversarial):
    assert is_special_case(*three_users[:2])
    assert not is_special_case(*adversarial[:2])


@pytest.mark.parametrize("mode", ["definitional", "literal"])
def test_critical_payments_three_users(three_users, mode):
    demands, topo, catalog = three_users
    result = price(demands, topo, catalog, mode)
    assert result.payments == {1: 4.0, 2: 4.0, 3: 0.0}
    assert result.revenue == pytest.approx(8.0)
    assert result.pricing_mode == mode


def test_ample_capacity_is_free(three_users):
    demands, _, catalog = three_users
    roomy = single_cell(10, 100e9, [1, 2, 3])
    result = price(demands, roomy, catalog)
    assert result.winners == [1, 2, 3]
    assert set(result.payments.values()) == {0.0}


def test_payments_need_matching_allocation(three_users, adversarial):
    demands, topo, catalog = three_users
    result = admit(demands, topo, catalog)
    with pytest.raises(ModeMismatch):
        critical_payments(demands[:2], topo, catalog, result)
    with pytest.raises(ModeMismatch):
        critical_payments(demands, topo, catalog, replace(result, x={1: 1, 2: 0, 3: 1}))
    with pytest.raises(ValueError):
        critical_payments(demands, topo, catalog, result, mode="vickrey")


def test_truthfulness_probe_three_users(three_users):
    demands, topo, catalog = three_users
    rows = {r.claimed: r for r in truthfulness_probe(demands, topo, catalog, 1, [3.0, 10.0, 20.0])}
    assert rows[10.0].win and rows[10.0].payment == 4.0 and rows[10.0].utility == 6.0
    assert not rows[3.0].win and rows[3.0].utility == 0.0
    assert rows[20.0].win and rows[20.0].payment == 4.0 and rows[20.0].utility == 6.0


@settings(deadline=None, max_examples=30)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_payments_within_claims(seed):
    demands, topo, catalog = random_auction(seed, n_users=14, n_stations=3, n_clouds=2)
    for mode in ("definitional", "literal"):
        result = price(demands, topo, catalog, mode)
        claims = {d.user: d.claimed for d in demands}
        for n, pay in result.payments.items():
            if result.x[n]:
                assert 0.0 <= pay <= claims[n] + 1e-9
            else:
                assert pay == 0.0


@settings(deadline=None, max_examples=30)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_greedy_meets_ratio_bound(seed):
    demands, topo, catalog = random_auction(seed, n_users=12, n_stations=2, n_clouds=1)
    greedy = admit(demands, topo, catalog)
    best = exact_admission(demands, topo, catalog)
    assert greedy.welfare_bid >= ratio_bound(topo, catalog) * best.welfare - 1e-9


@settings(deadline=None, max_examples=20)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_winners_keep_winning_with_higher_claims(seed):
    demands, topo, catalog = random_auction(seed, n_users=10, n_stations=2, n_clouds=1)
    result = admit(demands, topo, catalog)
    for n in result.winners:
        raised = [replace(d, claimed=d.claimed * 2 + 1) if d.user == n else d for d in demands]
        assert admit(raised, topo, catalog).x[n] == 1


@settings(deadline=None, max_examples=15)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_truthful_reporting_is_a_best_response(seed):
    demands, topo, catalog = random_auction(seed, n_users=10, n_stations=2, n_clouds=1)
    n = demands[0].user
    v = demands[0].true_value
    rows = truthfulness_probe(demands, topo, catalog, n, list(np.linspace(0.0, 2 * v, 21)))
    truthful = next(r for r in rows if r.claimed == pytest.approx(v))
    assert all(r.utility <= truthful.utility + 1e-9 for r in rows)


def test_seeded_tie_break_is_reproducible(three_users):
    demands, topo, catalog = three_users
    flat = [replace(d, claimed=5.0, true_value=5.0) for d in demands]
    a = admit(flat, topo, catalog, np.random.default_rng(4)).rank_order
    b = admit(flat, topo, catalog, np.random.default_rng(4)).rank_order
    assert a == b
    assert sorted(a) == [1, 2, 3]
