import numpy as np
import pytest

from crossplan.kinematics import KinematicLimits
from crossplan.order_search import (CrossingOrder, NoFeasibleOrder,
                                    PlannedVehicle, SearchPrep, fifo_order,
                                    obs_search, pp_search)
from crossplan.scheduling import ReservationTable
from instances import api_evaluator, lane_chains, random_instance
from oracles import brute_force_best_order

LIM = KinematicLimits()
VL = 5.0


def make_prep(model, vehicles, base=None):
    prep = SearchPrep(model, vehicles, LIM, VL)
    dep = base if base is not None else np.full(model.n_zones, -np.inf)
    return prep, dep


def as_rows(vehicles):
    chains = lane_chains(vehicles)
    rows = []
    for lane, chain in chains.items():
        for pos, vid in enumerate(chain):
            rows.append((vid, lane, pos))
    return rows


def assert_lane_consistent(order, vehicles):
    chains = lane_chains(vehicles)
    rank = {vid: i for i, vid in enumerate(order)}
    for chain in chains.values():
        ranks = [rank[v] for v in chain]
        assert ranks == sorted(ranks)


def test_fifo_sorts_by_earliest_arrival(default_model):
    vehicles = [
        PlannedVehicle(0, (0, 2), 200.0, 13.0),
        PlannedVehicle(1, (1, 3), 150.0, 13.0),
        PlannedVehicle(2, (2, 0), 230.0, 13.0),
    ]
    prep, dep = make_prep(default_model, vehicles)
    res = fifo_order(prep, dep)
    assert res.order == [2, 0, 1]


def test_fifo_never_reorders_a_lane(default_model):
    # fast follower right behind a slow leader would jump the queue on raw
    # earliest arrival; the effective key must hold the lane order
    vehicles = [
        PlannedVehicle(0, (0, 2), 200.0, 1.0),
        PlannedVehicle(1, (0, 2), 180.0, 13.0),
    ]
    prep, dep = make_prep(default_model, vehicles)
    assert prep.t_min0[1] < prep.t_min0[0]
    res = fifo_order(prep, dep)
    assert res.order == [0, 1]


def test_eval_order_matches_scheduling_api(default_model):
    rng = np.random.default_rng(2)
    for _ in range(30):
        vehicles = random_instance(default_model, rng, int(rng.integers(2, 7)))
        prep, dep = make_prep(default_model, vehicles)
        evaluate = api_evaluator(default_model, vehicles, LIM, VL,
                                 ReservationTable.empty(16))
        order = [v.vid for v in vehicles]
        rng.shuffle(order)
        assert prep.eval_order(order, dep) == pytest.approx(evaluate(order), abs=1e-9)


def test_obs_matches_brute_force(default_model):
    rng = np.random.default_rng(17)
    for _ in range(25):
        vehicles = random_instance(default_model, rng, int(rng.integers(2, 6)))
        prep, dep = make_prep(default_model, vehicles)
        res = obs_search(prep, dep, 4096)
        assert_lane_consistent(res.order, vehicles)
        evaluate = api_evaluator(default_model, vehicles, LIM, VL,
                                 ReservationTable.empty(16))
        best_delay, best_order, n_feasible = brute_force_best_order(
            as_rows(vehicles), evaluate)
        assert n_feasible >= 1
        assert res.total_delay == pytest.approx(best_delay, abs=1e-6)


def test_obs_budget_one_is_greedy_but_valid(default_model):
    rng = np.random.default_rng(23)
    vehicles = random_instance(default_model, rng, 6)
    prep, dep = make_prep(default_model, vehicles)
    res = obs_search(prep, dep, 1)
    assert res.leaves == 1
    assert sorted(res.order) == sorted(v.vid for v in vehicles)
    assert_lane_consistent(res.order, vehicles)


def test_obs_leaves_within_budget(default_model):
    rng = np.random.default_rng(31)
    for budget in (1, 2, 3, 7, 50):
        vehicles = random_instance(default_model, rng, 6)
        prep, dep = make_prep(default_model, vehicles)
        res = obs_search(prep, dep, budget)
        assert 1 <= res.leaves <= budget


def test_obs_deterministic(default_model):
    rng = np.random.default_rng(41)
    vehicles = random_instance(default_model, rng, 7)
    prep, dep = make_prep(default_model, vehicles)
    r1 = obs_search(prep, dep, 64)
    r2 = obs_search(prep, dep, 64)
    assert r1.order == r2.order
    assert r1.total_delay == r2.total_delay
    assert r1.leaves == r2.leaves


def test_obs_delay_non_increasing_in_budget(default_model):
    rng = np.random.default_rng(43)
    vehicles = random_instance(default_model, rng, 8)
    prep, dep = make_prep(default_model, vehicles)
    delays = [obs_search(prep, dep, b).total_delay for b in (1, 2, 4, 8, 16, 32)]
    for a, b in zip(delays, delays[1:]):
        assert b <= a + 1e-9


def test_obs_trace_actions(default_model):
    rng = np.random.default_rng(47)
    vehicles = random_instance(default_model, rng, 5)
    prep, dep = make_prep(default_model, vehicles)
    rows = []
    obs_search(prep, dep, 8, trace=rows.append)
    assert rows
    assert {r["action"] for r in rows} <= {"commit", "branch", "leaf"}
    assert any(r["action"] == "leaf" for r in rows)
    for r in rows:
        assert set(r) == {"depth", "frontier", "action", "delay"}


def test_pp_lane_consistent_and_deterministic(default_model):
    rng = np.random.default_rng(53)
    for _ in range(10):
        vehicles = random_instance(default_model, rng, int(rng.integers(2, 8)))
        prep, dep = make_prep(default_model, vehicles)
        r1 = pp_search(prep, dep, 16, np.random.default_rng([99, 1]))
        r2 = pp_search(prep, dep, 16, np.random.default_rng([99, 1]))
        assert r1.order == r2.order
        assert r1.total_delay == r2.total_delay
        assert_lane_consistent(r1.order, vehicles)


def test_pp_best_of_n_non_increasing(default_model):
    rng = np.random.default_rng(59)
    vehicles = random_instance(default_model, rng, 8)
    prep, dep = make_prep(default_model, vehicles)
    delays = [pp_search(prep, dep, n, np.random.default_rng([7, 1])).total_delay
              for n in (1, 2, 4, 8, 16, 32)]
    for a, b in zip(delays, delays[1:]):
        assert b <= a + 1e-12


def test_pp_never_beats_obs_full_search(default_model):
    rng = np.random.default_rng(61)
    for _ in range(10):
        vehicles = random_instance(default_model, rng, int(rng.integers(2, 6)))
        prep, dep = make_prep(default_model, vehicles)
        obs = obs_search(prep, dep, 4096)
        pp = pp_search(prep, dep, 64, np.random.default_rng([5, 1]))
        assert pp.total_delay >= obs.total_delay - 1e-9


def test_infeasible_vehicle_raises(default_model):
    # flat out 1 m before a right turn: cannot slow to the turn speed
    vehicles = [PlannedVehicle(0, (0, 1), 249.0, 13.0)]
    with pytest.raises(NoFeasibleOrder):
        SearchPrep(default_model, vehicles, LIM, VL)


def test_empty_instance(default_model):
    prep, dep = make_prep(default_model, [])
    assert fifo_order(prep, dep).order == []
    assert pp_search(prep, dep, 4, np.random.default_rng(1)).order == []
    assert obs_search(prep, dep, 4).order == []


def test_nonempty_base_table_delays_everyone(default_model):
    vehicles = [PlannedVehicle(0, (0, 2), 240.0, 13.0)]
    prep, dep = make_prep(default_model, vehicles)
    busy = dep.copy()
    busy[:] = 1e4
    res_free = obs_search(prep, dep, 4)
    res_busy = obs_search(prep, busy, 4)
    assert res_free.total_delay == pytest.approx(0.0, abs=1e-9)
    assert res_busy.total_delay > 1e3
