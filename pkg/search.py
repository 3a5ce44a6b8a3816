"""
Search Operators
Adaptive CX crossover and swap mutation, inversion local search and the restart strategy
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from errors import ConfigError
from heuristics import mih
from instance import Individual, Instance, random_individual, round_half_up
from surrogate import ElmModel, elm_predict_batch

logger = logging.getLogger(__name__)

LS_COMPARE_MODES = ('surrogate', 'mixed')


@dataclass(frozen=True)
class OperatorConfig:
    pc_min: float = 0.5
    pc_max: float = 0.9
    pm_min: float = 0.01
    pm_max: float = 0.2

    def __post_init__(self):
        for low_key, high_key in (('pc_min', 'pc_max'), ('pm_min', 'pm_max')):
            low, high = getattr(self, low_key), getattr(self, high_key)
            if not 0.0 <= low <= high <= 1.0:
                raise ConfigError(
                    f"Need 0 <= {low_key} <= {high_key} <= 1, got {low} and {high}",
                    key=low_key,
                )


@dataclass
class Member:
    """Population entry; fitness is exact when `exact` is set, otherwise a surrogate estimate"""

    individual: Individual
    fitness: float
    exact: bool = False


def sort_members(members: Sequence[Member]) -> List[Member]:
    return sorted(members, key=lambda member: member.fitness)


# ================================
# Adaptive probabilities
# ================================

def _adaptive(f_best: float, f_bar: float, f: float, low: float, high: float) -> float:
    if f >= f_bar or f_best == f_bar:
        return high
    ratio = (f_best - f) / (f_best - f_bar)
    ratio = min(1.0, max(0.0, ratio))
    return low + ratio * (high - low)


def adaptive_pc(f_best: float, f_bar: float, f_prime: float, cfg: OperatorConfig) -> float:
    """
    Crossover probability for a parent pair

    Args:
        f_best: Best (smallest) population fitness
        f_bar: Mean population fitness
        f_prime: Better fitness of the two parents
        cfg: Probability bounds

    Returns:
        pc_max for average or worse pairs, shrinking towards pc_min for the best
    """
    return _adaptive(f_best, f_bar, f_prime, cfg.pc_min, cfg.pc_max)


def adaptive_pm(f_best: float, f_bar: float, f: float, cfg: OperatorConfig) -> float:
    return _adaptive(f_best, f_bar, f, cfg.pm_min, cfg.pm_max)


# ================================
# Crossover and mutation
# ================================

def cx_crossover(parent_a: Individual, parent_b: Individual, rng: np.random.Generator) -> Individual:
    """
    Position-wise recombination

    Agreeing positions are copied. Each disagreeing position, in order,
    takes parent_a's allele when a fresh uniform draw is below 0.5.
    """
    genes_a, genes_b = parent_a.genes, parent_b.genes
    if genes_a.shape != genes_b.shape or parent_a.n_plants != parent_b.n_plants:
        raise ValueError(
            f"Parents differ in shape: {parent_a.bitstring()} vs {parent_b.bitstring()}"
        )
    child = genes_a.copy()
    disagree = np.flatnonzero(genes_a != genes_b)
    if disagree.size:
        draws = rng.random(disagree.size)
        child[disagree] = np.where(draws < 0.5, genes_a[disagree], genes_b[disagree])
    return Individual.from_genes(child, parent_a.n_plants)


def _swap_segment(segment: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    segment = segment.copy()
    if len(segment) >= 2:
        i, j = rng.choice(len(segment), size=2, replace=False)
        segment[i], segment[j] = segment[j], segment[i]
    return segment


def swap_mutation(ind: Individual, rng: np.random.Generator) -> Individual:
    """Swap two distinct plant positions and, independently, two depot positions"""
    return Individual(_swap_segment(ind.y, rng), _swap_segment(ind.z, rng))


# ================================
# Local search
# ================================

def score_individuals(model: Any, individuals: Sequence[Individual]) -> np.ndarray:
    """Predict with a bare ElmModel or anything exposing predict_many"""
    if not individuals:
        return np.zeros(0)
    if isinstance(model, ElmModel):
        return elm_predict_batch(model, np.array([ind.genes for ind in individuals], dtype=float))
    return np.asarray(model.predict_many(list(individuals)), dtype=float)


def neighborhood(inst: Instance, X: Individual, depot_index_mode: str = 'restricted') -> List[Individual]:
    """Distinct repaired single-bit inversions of X that differ from X"""
    seen = {X.key()}
    candidates = []
    genes = X.genes
    for position in range(len(genes)):
        flipped = genes.copy()
        flipped[position] ^= 1
        candidate = mih(inst, Individual.from_genes(flipped, X.n_plants), depot_index_mode)
        key = candidate.key()
        if key not in seen:
            seen.add(key)
            candidates.append(candidate)
    return candidates


def local_search(inst: Instance, X: Individual, model: Any, x_fitness: Optional[float] = None,
                 compare: str = 'surrogate', depot_index_mode: str = 'restricted') -> Individual:
    """
    Inversion local search around X

    Args:
        inst: Problem instance
        X: Feasible incumbent
        model: Trained ElmModel or a scorer with predict_many
        x_fitness: Known fitness of X, used by compare='mixed'
        compare: 'surrogate' scores X with the model as well; 'mixed' uses x_fitness
        depot_index_mode: Passed to the MIH repair

    Returns:
        Best neighbour if it scores below X, else X itself
    """
    if compare not in LS_COMPARE_MODES:
        raise ConfigError(f"Unknown local search comparison '{compare}'", key='ls_compare')

    candidates = neighborhood(inst, X, depot_index_mode)
    if not candidates:
        return X

    scores = score_individuals(model, candidates)
    if compare == 'mixed' and x_fitness is not None:
        incumbent = float(x_fitness)
    else:
        incumbent = float(score_individuals(model, [X])[0])

    best = int(np.argmin(scores))
    if scores[best] < incumbent:
        logger.debug(f"Local search improved {X.bitstring()} -> {candidates[best].bitstring()}")
        return candidates[best]
    return X


# ================================
# Restart
# ================================

def agreement(a: Individual, b: Individual) -> int:
    return int(np.count_nonzero(a.genes == b.genes))


def restart_check(pop: Sequence[Member], threshold: float = 0.9) -> bool:
    """True when the best and worst members agree on at least threshold of all positions"""
    if len(pop) < 2:
        return False
    ordered = sort_members(pop)
    best, worst = ordered[0].individual, ordered[-1].individual
    return agreement(best, worst) >= Fraction(str(threshold)) * len(best.genes)


def replacement_count(n: int, fraction: float = 0.1) -> int:
    """round-half-up(fraction * n), at least one, always leaving the best member"""
    count = max(1, round_half_up(Fraction(str(fraction)) * n))
    return min(count, n - 1)


def restart(pop: Sequence[Member], inst: Instance, rng: np.random.Generator,
            score: Callable[[List[Individual]], List[Member]], fraction: float = 0.1,
            depot_index_mode: str = 'restricted') -> List[Member]:
    """
    Replace the worst members with repaired random individuals

    Args:
        pop: Current population
        inst: Problem instance
        rng: Restart stream
        score: Turns the new individuals into members, in order
        fraction: Share of the population to replace
        depot_index_mode: Passed to the MIH repair

    Returns:
        Population of the same size, sorted by fitness. New individuals never
        repeat a bit vector already present; fewer than the replacement count
        are swapped in when unseen ones run out
    """
    ordered = sort_members(pop)
    count = replacement_count(len(ordered), fraction)
    if count < 1:
        return ordered
    taken = {member.individual.key() for member in ordered}
    fresh: List[Individual] = []
    for _ in range(20 * count):
        if len(fresh) == count:
            break
        ind = mih(inst, random_individual(inst, rng), depot_index_mode)
        if ind.key() not in taken:
            taken.add(ind.key())
            fresh.append(ind)
    if len(fresh) < count:
        logger.info(f"Restart found only {len(fresh)} of {count} unseen individuals")
    replaced = ordered[:len(ordered) - len(fresh)] + list(score(fresh))
    logger.debug(f"Restart replaced {len(fresh)} of {len(ordered)} members")
    return sort_members(replaced)


def deduplicate(members: Sequence[Member]) -> List[Member]:
    """Keep one member per bit vector; an exact value beats an estimate, otherwise the first wins"""
    merged: Dict[bytes, Member] = {}
    for member in members:
        key = member.individual.key()
        kept = merged.get(key)
        if kept is None or (member.exact and not kept.exact):
            merged[key] = member
    return list(merged.values())
