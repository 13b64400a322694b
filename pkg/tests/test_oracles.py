import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers

from conftest import single_cell
from mecsim.market import DemandProfile, admit
from mecsim.models import CrossEntropyParams
from mecsim.offload import VmCatalog
from mecsim.oracles import (
    InstanceTooLarge, NotSpecialCase, baseline_coarse_greedy, baseline_random,
    cross_entropy_admission, exact_admission, greedy_admission, naive_admission,
    special_case_relaxed_greedy,
)
from mecsim.scenario import random_auction


def test_exact_three_users(three_users):
    report = exact_admission(*three_users)
    assert report.welfare == pytest.approx(16.0)
    assert report.winners == (1, 2)
    assert report.exact


def test_naive_agrees_on_worked_examples(three_users, adversarial):
    assert naive_admission(*three_users).welfare == pytest.approx(16.0)
    assert naive_admission(*adversarial).winners == (2, 3)


def test_exact_empty_and_cap(three_users):
    _, topo, catalog = three_users
    assert exact_admission([], topo, catalog).welfare == 0.0
    demands, topo, catalog = random_auction(0, n_users=30, n_stations=1, n_clouds=1)
    with pytest.raises(InstanceTooLarge):
        exact_admission(demands, topo, catalog, cap=22)


def test_coarse_ranks_by_claim(adversarial, three_users):
    assert baseline_coarse_greedy(*three_users).winners == (1, 2)
    # same blocking user wins on claim alone
    assert baseline_coarse_greedy(*adversarial).welfare == pytest.approx(6.0)


def test_coarse_loses_to_gamma_ranking():
    catalog = VmCatalog((10e9, 50e9))
    topo = single_cell(10, 60e9, [0, 1, 2])
    demands = [
        DemandProfile(user=0, q=9, s=2, claimed=7.0, true_value=7.0),
        DemandProfile(user=1, q=3, s=1, claimed=5.0, true_value=5.0),
        DemandProfile(user=2, q=3, s=1, claimed=5.0, true_value=5.0),
    ]
    assert baseline_coarse_greedy(demands, topo, catalog).welfare == pytest.approx(7.0)
    assert greedy_admission(demands, topo, catalog).welfare == pytest.approx(10.0)


def test_random_baseline_is_seeded():
    demands, topo, catalog = random_auction(5, n_users=20, n_stations=2, n_clouds=1)
    first = baseline_random(demands, topo, catalog, seed=9)
    again = baseline_random(demands, topo, catalog, seed=9)
    assert first.winners == again.winners
    assert first.welfare == again.welfare


def test_random_takes_everything_when_all_fit(three_users):
    demands, _, catalog = three_users
    roomy = single_cell(10, 100e9, [1, 2, 3])
    assert baseline_random(demands, roomy, catalog, seed=1).welfare == pytest.approx(20.0)


def test_relaxation_on_three_users(three_users):
    report = special_case_relaxed_greedy(*three_users)
    assert report.welfare == pytest.approx(16.0)
    assert report.winners == (1, 2)
    assert report.fractional[3] == pytest.approx(0.0, abs=1e-9)


def test_relaxation_needs_uniform_bids(adversarial):
    with pytest.raises(NotSpecialCase):
        special_case_relaxed_greedy(*adversarial)


def test_cross_entropy_never_below_greedy(adversarial):
    params = CrossEntropyParams(population=50, iterations=10, seed=3)
    report = cross_entropy_admission(*adversarial, params)
    assert report.welfare >= 6.0
    assert report.welfare <= 9.6 + 1e-9
    assert cross_entropy_admission([], adversarial[1], adversarial[2], params).welfare == 0.0


@settings(deadline=None, max_examples=25)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_exact_matches_enumeration(seed):
    demands, topo, catalog = random_auction(seed, n_users=10, n_stations=2, n_clouds=2)
    exact = exact_admission(demands, topo, catalog)
    naive = naive_admission(demands, topo, catalog)
    assert exact.welfare == pytest.approx(naive.welfare)
    assert exact.welfare >= admit(demands, topo, catalog).welfare_bid - 1e-9


@settings(deadline=None, max_examples=25)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_uniform_instances_sandwich_greedy(seed):
    demands, topo, catalog = random_auction(seed, n_users=12, n_stations=2, n_clouds=1, uniform=True)
    greedy = admit(demands, topo, catalog).welfare_bid
    exact = exact_admission(demands, topo, catalog).welfare
    relaxed = special_case_relaxed_greedy(demands, topo, catalog).welfare
    assert greedy <= exact + 1e-9
    assert exact <= relaxed + 1e-6
    assert relaxed <= 2 * greedy + 1e-6
    assert greedy >= 0.5 * exact - 1e-9


@settings(deadline=None, max_examples=10)
@given(integers(min_value=0, max_value=2**31 - 1))
def test_cross_entropy_feasible_and_bounded(seed):
    demands, topo, catalog = random_auction(seed, n_users=12, n_stations=2, n_clouds=1)
    params = CrossEntropyParams(population=40, iterations=8, seed=seed % 1000)
    ce = cross_entropy_admission(demands, topo, catalog, params)
    exact = exact_admission(demands, topo, catalog)
    assert admit(demands, topo, catalog).welfare_bid - 1e-9 <= ce.welfare <= exact.welfare + 1e-9


def test_cross_entropy_finds_optimum_on_small_instances():
    hits = 0
    for seed in range(100):
        demands, topo, catalog = random_auction(seed, n_users=10, n_stations=2, n_clouds=1)
        ce = cross_entropy_admission(demands, topo, catalog, CrossEntropyParams(iterations=20, seed=seed))
        greedy = admit(demands, topo, catalog).welfare_bid
        optimum = exact_admission(demands, topo, catalog).welfare
        assert ce.welfare >= greedy - 1e-9
        hits += ce.welfare >= optimum - 1e-9
    assert hits >= 95


def test_random_baseline_median_not_above_greedy():
    gaps = []
    for seed in range(50):
        demands, topo, catalog = random_auction(seed, n_users=16, n_stations=3, n_clouds=1)
        greedy = admit(demands, topo, catalog).welfare_bid
        gaps.append(baseline_random(demands, topo, catalog, seed=seed).welfare - greedy)
    assert np.median(gaps) <= 1e-9
