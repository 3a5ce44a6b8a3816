"""
Heuristic Tests
Cost-benefit ranking, LP rounding and the MIH repair
"""

import numpy as np
import pytest

from errors import ConfigError
from evaluator import lp_relaxation
from heuristics import (
    cbr,
    cost_benefit_index,
    depot_index,
    mih,
    plant_index,
    ranking,
    round_relaxation,
    rounding_heuristic,
)
from instance import Individual, generate_instance, is_feasible, make_instance, random_individual


def ranked_plants_instance():
    """Plant indices (5.0, 3.0, 4.0), capacity 10 each, demand 15"""
    return make_instance(
        f=[49, 29, 39], b=[10, 10, 10],
        g=[5], p=[30],
        c=[[1], [1], [1]],
        d=[[1, 1]],
        q=[7, 8],
    )


def generated_instances():
    return [generate_instance(class_id, n, seed) for class_id in range(1, 6) for n in (2, 4) for seed in range(3)]


# ================================
# Cost-benefit index
# ================================

def test_indices_by_hand(saturated):
    index = cost_benefit_index(saturated)
    assert index.plant_index == pytest.approx([13 / 5, 24 / 5])
    assert index.depot_index == pytest.approx([15 / 4, 15 / 6])
    assert np.all(index.plant_index > 0) and np.all(index.depot_index > 0)


def test_restricted_depot_index(saturated):
    # only plant 1 open: inbound costs c[1] = (3, 1)
    assert depot_index(saturated, np.array([0, 1])) == pytest.approx([(3 + 3 + 8) / 4, (1 + 4 + 8) / 6])


def test_ranking_breaks_ties_by_id():
    assert ranking(np.array([2.0, 1.0, 2.0, 1.0])).tolist() == [1, 3, 0, 2]


# ================================
# CBR
# ================================

def test_cbr_opens_by_rank():
    inst = ranked_plants_instance()
    assert plant_index(inst) == pytest.approx([5.0, 3.0, 4.0])
    ind = cbr(inst)
    assert ind.y.tolist() == [0, 1, 1]
    assert ind.z.tolist() == [1]


def test_cbr_single_plant_suffices():
    inst = make_instance(
        f=[10, 50], b=[20, 10], g=[5], p=[30],
        c=[[1], [1]], d=[[1, 1]], q=[7, 8],
    )
    assert cbr(inst).y.tolist() == [1, 0]


def test_cbr_always_feasible():
    for inst in generated_instances():
        assert is_feasible(inst, cbr(inst))


def test_cbr_matches_mih_from_zeros_on_plants():
    """Identical unless a prefix of the ranked capacities hits demand exactly"""
    for inst in generated_instances():
        prefix = np.cumsum(inst.b[ranking(plant_index(inst))])
        if np.any(prefix == inst.total_demand):
            continue
        zeros = Individual(np.zeros(inst.n_plants), np.zeros(inst.n_depots))
        assert np.array_equal(cbr(inst).y, mih(inst, zeros).y)


# ================================
# MIH
# ================================

def test_mih_closes_redundant_plant():
    inst = ranked_plants_instance()
    repaired = mih(inst, Individual([1, 1, 1], [1]))
    assert repaired.y.tolist() == [0, 1, 1]


def test_mih_stops_at_first_breaking_closure():
    # indices (5.0, 4.0, 3.0); closing plant 0 breaks coverage, so plant 1 is never tried
    # even though dropping it alone would leave 20 >= 15
    inst = make_instance(
        f=[49, 11, 29], b=[10, 3, 10],
        g=[5], p=[30],
        c=[[1], [1], [1]],
        d=[[1, 1]],
        q=[7, 8],
    )
    repaired = mih(inst, Individual([1, 1, 1], [1]))
    assert repaired.y.tolist() == [1, 1, 1]


def test_mih_feasibility_on_random_vectors():
    """10,000 random vectors are all repaired to feasibility"""
    rng = np.random.default_rng(99)
    instances = generated_instances()
    violations = 0
    for trial in range(10000):
        inst = instances[trial % len(instances)]
        mode = 'restricted' if trial % 2 else 'all'
        if not is_feasible(inst, mih(inst, random_individual(inst, rng), mode)):
            violations += 1
    assert violations == 0


def test_mih_is_idempotent():
    rng = np.random.default_rng(4)
    for inst in generated_instances():
        for _ in range(20):
            once = mih(inst, random_individual(inst, rng))
            assert mih(inst, once) == once


def worst_open_is_needed(state, caps, index, demand):
    capacity = int(caps @ state)
    if capacity < demand:
        return False
    if capacity == demand:
        return True
    worst = next(k for k in ranking(index)[::-1] if state[k])
    return capacity - int(caps[worst]) < demand


def test_mih_leaves_only_the_sentinel_closable():
    """After repair the worst-ranked open facility of each stage cannot be closed"""
    rng = np.random.default_rng(17)
    for inst in generated_instances():
        demand = inst.total_demand
        for trial in range(200):
            mode = 'restricted' if trial % 2 else 'all'
            repaired = mih(inst, random_individual(inst, rng), mode)
            assert worst_open_is_needed(repaired.y, inst.b, plant_index(inst), demand)
            plants = repaired.y if mode == 'restricted' else None
            assert worst_open_is_needed(repaired.z, inst.p, depot_index(inst, plants), demand)


def test_mih_keeps_feasible_flag(small):
    repaired = mih(small, Individual(np.zeros(small.n_plants), np.zeros(small.n_depots)))
    assert repaired.feasible is True


def test_unknown_depot_mode(small):
    with pytest.raises(ConfigError):
        mih(small, cbr(small), 'nearest')


# ================================
# Rounding
# ================================

def test_rounding_then_repair(single_path):
    relaxation = lp_relaxation(single_path)
    assert relaxation.y == pytest.approx([0.2])
    rounded = round_relaxation(single_path, relaxation)
    assert rounded.bitstring() == '0|0'
    assert rounding_heuristic(single_path, relaxation).bitstring() == '1|1'


def test_integral_relaxation_rounds_to_itself(saturated):
    relaxation = lp_relaxation(saturated)
    assert relaxation.y == pytest.approx([1.0, 1.0])
    assert round_relaxation(saturated, relaxation) == Individual([1, 1], [1, 1])


def test_rounding_heuristic_feasible():
    for inst in generated_instances():
        assert is_feasible(inst, rounding_heuristic(inst))
