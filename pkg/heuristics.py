"""
Construction and Repair Heuristics
Cost-benefit ranking (CBR), LP rounding and the MIH feasibility repair
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import ConfigError
from evaluator import LpRelaxation, lp_relaxation
from instance import Individual, Instance

logger = logging.getLogger(__name__)

DEPOT_INDEX_MODES = ('restricted', 'all')
ROUNDING_THRESHOLD = 0.5


@dataclass(frozen=True)
class CostBenefitIndex:
    """Fixed plus transport cost per unit of capacity; lower is better"""

    plant_index: np.ndarray
    depot_index: np.ndarray


def plant_index(inst: Instance) -> np.ndarray:
    return (inst.f + inst.c.sum(axis=1)) / inst.b


def depot_index(inst: Instance, y: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Depot cost-benefit index

    Args:
        inst: Problem instance
        y: Plant mask; when given only open plants contribute inbound costs
    """
    inbound = inst.c.sum(axis=0) if y is None else np.asarray(y, dtype=np.int64) @ inst.c
    return (inbound + inst.g + inst.d.sum(axis=1)) / inst.p


def cost_benefit_index(inst: Instance) -> CostBenefitIndex:
    return CostBenefitIndex(plant_index=plant_index(inst), depot_index=depot_index(inst))


def ranking(index: np.ndarray) -> np.ndarray:
    """Facility ids from best to worst index; equal indices keep id order"""
    return np.argsort(index, kind='stable')


def _check_depot_mode(mode: str) -> None:
    if mode not in DEPOT_INDEX_MODES:
        raise ConfigError(
            f"Unknown depot index mode '{mode}'; choose from {DEPOT_INDEX_MODES}",
            key='depot_index',
        )


# ================================
# CBR
# ================================

def _open_while_not_exceeding(order: np.ndarray, caps: np.ndarray, demand: int) -> np.ndarray:
    state = np.zeros(len(caps), dtype=np.int8)
    capacity = 0
    for k in order:
        if capacity > demand:
            break
        state[k] = 1
        capacity += int(caps[k])
    return state


def cbr(inst: Instance) -> Individual:
    """
    Greedy opening by cost-benefit rank

    Plants are opened best-first while their total capacity does not exceed
    total demand, then depots likewise using the all-plant depot index.
    """
    index = cost_benefit_index(inst)
    demand = inst.total_demand
    y = _open_while_not_exceeding(ranking(index.plant_index), inst.b, demand)
    z = _open_while_not_exceeding(ranking(index.depot_index), inst.p, demand)
    ind = Individual(y, z, feasible=True)
    logger.debug(f"CBR opened {int(y.sum())} plants and {int(z.sum())} depots")
    return ind


# ================================
# MIH
# ================================

def _repair_stage(state: np.ndarray, caps: np.ndarray, index: np.ndarray, demand: int) -> np.ndarray:
    state = state.copy()
    capacity = int(caps @ state)
    order = ranking(index)

    # (a) open the best closed facilities until demand is covered
    for k in order:
        if capacity >= demand:
            break
        if not state[k]:
            state[k] = 1
            capacity += int(caps[k])

    # (b) close from the worst end; the first closure that breaks coverage is undone and ends the scan
    for k in order[::-1]:
        if capacity <= demand:
            break
        if state[k]:
            state[k] = 0
            capacity -= int(caps[k])
            if capacity < demand:
                state[k] = 1
                capacity += int(caps[k])
                break
    return state


def mih(inst: Instance, ind: Individual, depot_index_mode: str = 'restricted') -> Individual:
    """
    Repair any open/close mask into a feasible one

    The plant stage is repaired first; in 'restricted' mode the depot index
    then only counts inbound costs from the plants left open.

    Args:
        inst: Problem instance
        ind: Arbitrary binary mask
        depot_index_mode: 'restricted' or 'all'

    Returns:
        New feasible individual
    """
    _check_depot_mode(depot_index_mode)
    demand = inst.total_demand
    y = _repair_stage(ind.y, inst.b, plant_index(inst), demand)
    plants = y if depot_index_mode == 'restricted' else None
    z = _repair_stage(ind.z, inst.p, depot_index(inst, plants), demand)
    return Individual(y, z, feasible=True)


# ================================
# LP rounding
# ================================

def round_relaxation(inst: Instance, relaxation: Optional[LpRelaxation] = None) -> Individual:
    """Round the fractional LP openings at 0.5 without repairing"""
    relaxation = relaxation or lp_relaxation(inst)
    y = (relaxation.y >= ROUNDING_THRESHOLD).astype(np.int8)
    z = (relaxation.z >= ROUNDING_THRESHOLD).astype(np.int8)
    return Individual(y, z)


def rounding_heuristic(inst: Instance, relaxation: Optional[LpRelaxation] = None,
                       depot_index_mode: str = 'restricted') -> Individual:
    rounded = round_relaxation(inst, relaxation)
    repaired = mih(inst, rounded, depot_index_mode)
    logger.debug(f"Rounding heuristic: {rounded.bitstring()} -> {repaired.bitstring()}")
    return repaired
