"""
Exact Evaluation
Objective of an open/close mask, LP-relaxation lower bound and RPD
"""

import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from errors import CapacityShortfallError, DomainError
from flow import FlowPlan, LayeredNetwork, min_cost_flow
from instance import Individual, Instance, is_feasible, open_capacity

logger = logging.getLogger(__name__)


@dataclass
class EvaluatedSolution:
    individual: Individual
    objective: float
    flows: FlowPlan
    fixed_cost: int
    transport_cost: int
    exact: bool = True


@dataclass
class LpRelaxation:
    """Continuous relaxation optimum with fixed costs folded into unit costs"""

    bound: float
    flows: FlowPlan
    y: np.ndarray
    z: np.ndarray


def fixed_cost(inst: Instance, ind: Individual) -> int:
    return int(inst.f @ ind.y) + int(inst.g @ ind.z)


def evaluate_exact(inst: Instance, ind: Individual) -> EvaluatedSolution:
    """
    Exact objective Z for a feasible mask

    Args:
        inst: Problem instance
        ind: Feasible open/close mask (repair with mih first)

    Returns:
        Objective, optimal flows and the fixed/transport split

    Raises:
        CapacityShortfallError: open plant or depot capacity below demand
    """
    demand = inst.total_demand
    plant_cap, depot_cap = open_capacity(inst, ind)
    if plant_cap < demand:
        raise CapacityShortfallError('plant', plant_cap, demand)
    if depot_cap < demand:
        raise CapacityShortfallError('depot', depot_cap, demand)

    flows = min_cost_flow(LayeredNetwork.from_instance(inst, ind))
    opening = fixed_cost(inst, ind)
    transport = int(flows.cost)
    return EvaluatedSolution(
        individual=ind,
        objective=float(opening + transport),
        flows=flows,
        fixed_cost=opening,
        transport_cost=transport,
    )


def lp_relaxation(inst: Instance) -> LpRelaxation:
    """
    Solve the relaxation with y, z in [0, 1] and the x <= b z constraint dropped

    With continuous y and z the optimum sets y_i = outflow_i / b_i and
    z_j = throughput_j / p_j, so the fixed costs become per-unit surcharges
    f_i / b_i and g_j / p_j on the arcs leaving plant i and depot j.
    """
    c = inst.c + (inst.f / inst.b)[:, None]
    d = inst.d + (inst.g / inst.p)[:, None]
    flows = min_cost_flow(LayeredNetwork.from_instance(inst, None, c=c, d=d))
    return LpRelaxation(
        bound=float(flows.cost),
        flows=flows,
        y=flows.plant_outflow() / inst.b,
        z=flows.depot_throughput() / inst.p,
    )


def lp_lower_bound(inst: Instance) -> float:
    bound = lp_relaxation(inst).bound
    logger.debug(f"LP lower bound {bound:.1f}")
    return bound


def rpd(z_alg: float, z_lb: float) -> float:
    """Relative percentage deviation of z_alg above the lower bound z_lb"""
    if not z_lb > 0:
        raise DomainError(f"RPD needs a positive lower bound, got {z_lb}")
    return (z_alg - z_lb) * 100.0 / z_lb


class ExactEvaluator:
    """
    Counting front end to evaluate_exact

    Safe to call from several worker threads; only the counter is shared.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        self.count = 0
        self._lock = threading.Lock()

    def evaluate(self, ind: Individual) -> EvaluatedSolution:
        result = evaluate_exact(self.inst, ind)
        with self._lock:
            self.count += 1
        return result

    def __call__(self, ind: Individual) -> float:
        return self.evaluate(ind).objective


def enumerate_optimum(inst: Instance, max_bits: int = 20) -> Tuple[Optional[Individual], float]:
    """
    Exhaustive search over every feasible mask

    Only meant for tiny instances; refuses anything above max_bits facilities.

    Returns:
        (best individual, objective); (None, inf) if nothing is feasible
    """
    n_bits = inst.n_facilities
    if n_bits > max_bits:
        raise ValueError(f"Enumeration over {n_bits} facilities exceeds the limit of {max_bits}")

    best: Optional[Individual] = None
    best_value = float('inf')
    for genes in itertools.product((0, 1), repeat=n_bits):
        ind = Individual.from_genes(genes, inst.n_plants)
        if not is_feasible(inst, ind):
            continue
        value = evaluate_exact(inst, ind).objective
        if value < best_value:
            best, best_value = ind, value
    logger.info(f"Enumerated 2^{n_bits} masks, optimum {best_value:.1f}")
    return best, best_value
