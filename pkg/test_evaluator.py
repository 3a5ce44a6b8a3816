"""
Evaluator Tests
Exact objective, LP lower bound, RPD and exhaustive enumeration
"""

import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from errors import CapacityShortfallError, DomainError
from evaluator import (
    ExactEvaluator,
    enumerate_optimum,
    evaluate_exact,
    fixed_cost,
    lp_lower_bound,
    lp_relaxation,
    rpd,
)
from heuristics import mih
from instance import Individual, generate_instance, is_feasible, make_instance, random_individual


def transport_lp(inst, ind):
    """Transportation LP on the open facilities solved by HiGHS"""
    plants, depots = np.flatnonzero(ind.y), np.flatnonzero(ind.z)
    n_i, n_j, n_k = len(plants), len(depots), inst.n_customers
    n_x = n_i * n_j
    cost = np.concatenate((inst.c[np.ix_(plants, depots)].ravel(), inst.d[depots].ravel()))

    upper_rows, upper_rhs = [], []
    for a in range(n_i):
        row = np.zeros(n_x + n_j * n_k)
        row[a * n_j:(a + 1) * n_j] = 1
        upper_rows.append(row)
        upper_rhs.append(inst.b[plants[a]])
    for j in range(n_j):
        row = np.zeros(n_x + n_j * n_k)
        row[n_x + j * n_k:n_x + (j + 1) * n_k] = 1
        upper_rows.append(row)
        upper_rhs.append(inst.p[depots[j]])

    eq_rows, eq_rhs = [], []
    for j in range(n_j):
        row = np.zeros(n_x + n_j * n_k)
        row[j:n_x:n_j] = 1
        row[n_x + j * n_k:n_x + (j + 1) * n_k] = -1
        eq_rows.append(row)
        eq_rhs.append(0)
    for k in range(n_k):
        row = np.zeros(n_x + n_j * n_k)
        row[n_x + k::n_k] = 1
        eq_rows.append(row)
        eq_rhs.append(inst.q[k])

    result = linprog(cost, A_ub=upper_rows, b_ub=upper_rhs, A_eq=eq_rows, b_eq=eq_rhs,
                     bounds=(0, None), method='highs')
    assert result.status == 0
    return result.fun


# ================================
# Exact evaluation
# ================================

def test_single_path_objective(single_path):
    result = evaluate_exact(single_path, Individual([1], [1]))
    assert result.objective == 115.0
    assert result.fixed_cost == 15
    assert result.transport_cost == 100
    assert result.exact is True


def test_all_zero_demand_is_free():
    inst = make_instance(f=[10], b=[5], g=[5], p=[5], c=[[2]], d=[[3, 4]], q=[0, 0], validate=False)
    result = evaluate_exact(inst, Individual([0], [0]))
    assert result.objective == 0.0


def test_infeasible_mask_names_stage(saturated):
    with pytest.raises(CapacityShortfallError) as excinfo:
        evaluate_exact(saturated, Individual([1, 0], [1, 1]))
    assert excinfo.value.stage == 'plant'
    with pytest.raises(CapacityShortfallError) as excinfo:
        evaluate_exact(saturated, Individual([1, 1], [1, 0]))
    assert excinfo.value.stage == 'depot'


def test_all_open_matches_lp_oracle(tiny):
    ind = Individual(np.ones(tiny.n_plants), np.ones(tiny.n_depots))
    result = evaluate_exact(tiny, ind)
    expected = fixed_cost(tiny, ind) + transport_lp(tiny, ind)
    assert result.objective == pytest.approx(expected, rel=1e-9)


def test_conservation_on_random_masks():
    """Total first-stage flow equals total second-stage flow equals demand"""
    rng = np.random.default_rng(0)
    instances = [generate_instance(class_id, 3, seed) for class_id in range(1, 6) for seed in range(4)]
    violations = 0
    for trial in range(1000):
        inst = instances[trial % len(instances)]
        ind = mih(inst, random_individual(inst, rng))
        flows = evaluate_exact(inst, ind).flows
        if not flows.first_stage_total == flows.second_stage_total == inst.total_demand:
            violations += 1
    assert violations == 0


def test_opening_more_never_raises_transport(small):
    rng = np.random.default_rng(3)
    for _ in range(20):
        ind = mih(small, random_individual(small, rng))
        closed = np.flatnonzero(ind.genes == 0)
        if closed.size == 0:
            continue
        genes = ind.genes.copy()
        genes[closed[0]] = 1
        wider = Individual.from_genes(genes, small.n_plants)
        assert evaluate_exact(small, wider).transport_cost <= evaluate_exact(small, ind).transport_cost


# ================================
# Lower bound
# ================================

def test_single_path_lower_bound(single_path):
    assert lp_lower_bound(single_path) == pytest.approx(20 * (2 + 10 / 100) + 20 * (3 + 5 / 100))
    assert round(lp_lower_bound(single_path), 1) == 103.0


def test_saturated_bound_is_tight(saturated):
    all_open = evaluate_exact(saturated, Individual([1, 1], [1, 1])).objective
    assert lp_lower_bound(saturated) == pytest.approx(all_open)


def test_relaxation_fractions(small):
    relaxation = lp_relaxation(small)
    assert np.all(relaxation.y >= 0) and np.all(relaxation.y <= 1 + 1e-12)
    assert np.all(relaxation.z >= 0) and np.all(relaxation.z <= 1 + 1e-12)
    assert relaxation.flows.first_stage_total == small.total_demand


def test_bound_below_every_feasible_mask(tiny):
    bound = lp_lower_bound(tiny)
    for genes in itertools.product((0, 1), repeat=tiny.n_facilities):
        ind = Individual.from_genes(genes, tiny.n_plants)
        if is_feasible(tiny, ind):
            assert bound <= evaluate_exact(tiny, ind).objective + 1e-6


# ================================
# RPD
# ================================

def test_rpd_values():
    assert round(rpd(722178.0, 721209.6), 2) == 0.13
    assert rpd(500.0, 500.0) == 0.0
    assert rpd(110, 100) == pytest.approx(10.0)


@pytest.mark.parametrize('bound', [0.0, -5.0])
def test_rpd_rejects_non_positive_bound(bound):
    with pytest.raises(DomainError):
        rpd(10.0, bound)


# ================================
# Counting and enumeration
# ================================

def test_exact_evaluator_counts(saturated):
    evaluator = ExactEvaluator(saturated)
    ind = Individual([1, 1], [1, 1])
    assert evaluator(ind) == evaluator.evaluate(ind).objective
    assert evaluator.count == 2


def test_enumerate_optimum(saturated):
    best, value = enumerate_optimum(saturated)
    assert best == Individual([1, 1], [1, 1])
    assert value == evaluate_exact(saturated, best).objective


def test_enumerate_refuses_large_instances(small):
    with pytest.raises(ValueError):
        enumerate_optimum(small, max_bits=10)
