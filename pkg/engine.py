"""
Hybrid Evolutionary Engine
HEA/FA main loop with ELM fitness approximation, and the plain GA baseline
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

from errors import ConfigError
from evaluator import ExactEvaluator, evaluate_exact, lp_relaxation
from heuristics import DEPOT_INDEX_MODES, cbr, mih, rounding_heuristic
from instance import Individual, Instance, random_individual, round_half_up
from search import (
    LS_COMPARE_MODES,
    Member,
    OperatorConfig,
    adaptive_pc,
    adaptive_pm,
    cx_crossover,
    deduplicate,
    local_search,
    replacement_count,
    restart,
    restart_check,
    sort_members,
    swap_mutation,
)
from surrogate import RANK_WARNING_LEVEL, ElmSurrogate, SurrogateConfig, held_out_rank_check, rank_correlation

logger = logging.getLogger(__name__)

MODES = ('hea_fa', 'baseline_ga')

# Independent generator per purpose so that e.g. retraining never shifts mutation draws
STREAMS = {'init': 0, 'selection': 1, 'crossover': 2, 'mutation': 3, 'restart': 4, 'surrogate': 5, 'held_out': 6}


@dataclass(frozen=True)
class EngineConfig:
    population_size: int = 60
    t_max: int = 200
    t_nip_max: int = 50
    elite_fraction: float = 0.10
    seed: int = 0
    mode: str = 'hea_fa'
    operators: OperatorConfig = field(default_factory=OperatorConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    local_search: bool = True
    ls_compare: str = 'surrogate'
    depot_index: str = 'restricted'
    restart_threshold: float = 0.9
    restart_fraction: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if self.population_size < 4:
            raise ConfigError(f"population must be at least 4, got {self.population_size}", key='population')
        if self.t_max < 1:
            raise ConfigError(f"t_max must be at least 1, got {self.t_max}", key='t_max')
        if self.t_nip_max < 1:
            raise ConfigError(f"t_nip_max must be at least 1, got {self.t_nip_max}", key='t_nip_max')
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ConfigError(f"elite_fraction must lie in (0, 1], got {self.elite_fraction}", key='elite_fraction')
        if self.mode not in MODES:
            raise ConfigError(f"Unknown mode '{self.mode}'; choose from {MODES}", key='mode')
        if self.ls_compare not in LS_COMPARE_MODES:
            raise ConfigError(f"Unknown ls_compare '{self.ls_compare}'", key='ls_compare')
        if self.depot_index not in DEPOT_INDEX_MODES:
            raise ConfigError(f"Unknown depot_index '{self.depot_index}'", key='depot_index')
        if not 0.0 < self.restart_threshold <= 1.0:
            raise ConfigError("restart_threshold must lie in (0, 1]", key='restart_threshold')
        if not 0.0 < self.restart_fraction < 1.0:
            raise ConfigError("restart_fraction must lie in (0, 1)", key='restart_fraction')
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}", key='workers')
        if self.n_elites < 1:
            raise ConfigError("elite count rounds to zero", key='elite_fraction')

    @property
    def n_elites(self) -> int:
        return max(1, round_half_up(Fraction(str(self.elite_fraction)) * self.population_size))


@dataclass
class RunReport:
    best_individual: Individual
    best_objective: float
    objective_trace: List[float]
    exact_eval_count: int
    surrogate_eval_count: int
    iterations_run: int
    wall_time_seconds: float
    seed: int
    mode: str = 'hea_fa'
    restarts: int = 0
    surrogate_error_trace: List[float] = field(default_factory=list)
    surrogate_rank_correlation: Optional[float] = None


class ExactScorer:
    """Scorer backed by exact evaluation; used by the baseline in place of the surrogate"""

    exact = True

    def __init__(self, evaluate_batch: Callable[[Sequence[Individual]], List[float]]):
        self._evaluate_batch = evaluate_batch

    def predict_many(self, individuals: Sequence[Individual]) -> np.ndarray:
        return np.asarray(self._evaluate_batch(individuals), dtype=float)

    def add(self, ind: Individual, value: float) -> None:
        pass

    def fit(self, seed) -> None:
        pass


class HybridEvolutionEngine:
    """
    One run of HEA/FA or the baseline GA on one instance

    Args:
        inst: Validated instance
        cfg: Engine configuration
        surrogate: Optional scorer replacing the ELM in hea_fa mode; needs
            predict_many(individuals), add(ind, value) and fit(seed)
    """

    def __init__(self, inst: Instance, cfg: EngineConfig, surrogate: Any = None):
        self.inst = inst
        self.cfg = cfg
        self.evaluator = ExactEvaluator(inst)
        self._executor: Optional[ThreadPoolExecutor] = None

        if cfg.mode == 'baseline_ga':
            self.scorer = ExactScorer(self.evaluate_batch)
            self.use_local_search = False
        else:
            self.scorer = surrogate if surrogate is not None else ElmSurrogate(inst.n_facilities, cfg.surrogate)
            self.use_local_search = cfg.local_search
        self.scorer_is_exact = bool(getattr(self.scorer, 'exact', False))

        root = np.random.SeedSequence(cfg.seed)
        self.rngs = {
            name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(root.entropy, spawn_key=(index,))))
            for name, index in STREAMS.items()
        }

        self.best: Optional[Individual] = None
        self.best_value = float('inf')
        self.restarts = 0
        self.trace: List[float] = []
        self.error_trace: List[float] = []
        self._elite_predictions: List[float] = []
        self._elite_exact: List[float] = []

    # ================================
    # Evaluation helpers
    # ================================

    def evaluate_batch(self, individuals: Sequence[Individual]) -> List[float]:
        """Exact objectives in candidate order, fanned out when workers > 1"""
        individuals = list(individuals)
        if self._executor is not None and len(individuals) > 1:
            return list(self._executor.map(self.evaluator, individuals))
        return [self.evaluator(ind) for ind in individuals]

    def _score(self, individuals: Sequence[Individual]) -> List[Member]:
        values = self.scorer.predict_many(list(individuals))
        return [
            Member(ind, float(value), self.scorer_is_exact)
            for ind, value in zip(individuals, values)
        ]

    def _exact_members(self, individuals: Sequence[Individual]) -> List[Member]:
        values = self.evaluate_batch(individuals)
        members = [Member(ind, value, True) for ind, value in zip(individuals, values)]
        for member in members:
            self.scorer.add(member.individual, member.fitness)
        return members

    def _retrain(self) -> None:
        self.scorer.fit(int(self.rngs['surrogate'].integers(2 ** 63)))

    def _consider(self, members: Sequence[Member]) -> bool:
        """Update the global best from exact members; True when it improved"""
        improved = False
        for member in members:
            if member.exact and member.fitness < self.best_value:
                self.best = member.individual
                self.best_value = member.fitness
                improved = True
        return improved

    def _refresh(self, population: List[Member]) -> List[Member]:
        stale = [member for member in population if not member.exact]
        if stale and not self.scorer_is_exact:
            values = self.scorer.predict_many([member.individual for member in stale])
            for member, value in zip(stale, values):
                member.fitness = float(value)
        return population

    # ================================
    # Algorithm steps
    # ================================

    def initial_population(self) -> List[Member]:
        """Pool of 2N_p repaired individuals, all exact; the best N_p survive"""
        inst, cfg = self.inst, self.cfg
        rng = self.rngs['init']
        pool = [
            mih(inst, cbr(inst), cfg.depot_index),
            rounding_heuristic(inst, lp_relaxation(inst), cfg.depot_index),
        ]
        while len(pool) < 2 * cfg.population_size:
            pool.append(mih(inst, random_individual(inst, rng), cfg.depot_index))

        unique = deduplicate([Member(ind, 0.0) for ind in pool])
        members = self._exact_members([member.individual for member in unique])
        self._retrain()
        self._consider(members)
        population = sort_members(members)[:cfg.population_size]
        logger.debug(
            f"Initial pool: {len(pool)} drawn, {len(unique)} distinct, best {self.best_value:.1f}"
        )
        return population

    def _offspring(self, population: List[Member], f_best: float, f_bar: float) -> List[Individual]:
        inst, cfg = self.inst, self.cfg
        select, cross = self.rngs['selection'], self.rngs['crossover']
        offspring: List[Individual] = []
        seen = set()
        for _ in range(cfg.population_size):
            a = population[int(select.integers(len(population)))]
            b = population[int(select.integers(len(population)))]
            pc = adaptive_pc(f_best, f_bar, min(a.fitness, b.fitness), cfg.operators)
            if cross.random() < pc:
                child = cx_crossover(a.individual, b.individual, cross)
            else:
                child = (a if a.fitness <= b.fitness else b).individual.copy()
            child = mih(inst, child, cfg.depot_index)
            if child.key() not in seen:
                seen.add(child.key())
                offspring.append(child)
        return offspring

    def _mutate(self, scored: List[Member], f_best: float, f_bar: float) -> List[Member]:
        inst, cfg = self.inst, self.cfg
        rng = self.rngs['mutation']
        keys = {member.individual.key() for member in scored}
        mutated_at = []
        for position, member in enumerate(scored):
            pm = adaptive_pm(f_best, f_bar, member.fitness, cfg.operators)
            if rng.random() >= pm:
                continue
            mutant = mih(inst, swap_mutation(member.individual, rng), cfg.depot_index)
            if mutant.key() in keys:
                continue
            keys.discard(member.individual.key())
            keys.add(mutant.key())
            scored[position] = Member(mutant, 0.0)
            mutated_at.append(position)

        if mutated_at:
            rescored = self._score([scored[position].individual for position in mutated_at])
            for position, member in zip(mutated_at, rescored):
                scored[position] = member
        return scored

    def _improve_best(self, scored: List[Member]) -> Optional[Individual]:
        """Local search around X'_best; the winner takes X'_best's place in P'"""
        at = min(range(len(scored)), key=lambda position: scored[position].fitness)
        incumbent = scored[at]
        winner = local_search(
            self.inst, incumbent.individual, self.scorer,
            x_fitness=incumbent.fitness, compare=self.cfg.ls_compare,
            depot_index_mode=self.cfg.depot_index,
        )
        if winner == incumbent.individual:
            return None
        if any(member.individual == winner for member in scored):
            return None
        scored[at] = self._score([winner])[0]
        return winner

    def _evaluate_elites(self, scored: List[Member], ls_winner: Optional[Individual]) -> List[Member]:
        ranked = sorted(range(len(scored)), key=lambda position: scored[position].fitness)
        chosen = ranked[:self.cfg.n_elites]
        if ls_winner is not None:
            winner_at = next(p for p, member in enumerate(scored) if member.individual == ls_winner)
            if winner_at not in chosen:
                chosen.append(winner_at)

        if self.scorer_is_exact:
            return [scored[position] for position in chosen]

        predicted = [scored[position].fitness for position in chosen]
        exact = self._exact_members([scored[position].individual for position in chosen])
        for position, member in zip(chosen, exact):
            scored[position] = member
        self._retrain()

        values = np.array([member.fitness for member in exact])
        errors = np.abs(np.array(predicted) - values) / np.maximum(np.abs(values), 1e-12)
        self.error_trace.append(float(errors.mean()))
        self._elite_predictions.extend(predicted)
        self._elite_exact.extend(values.tolist())
        return exact

    def _select(self, population: List[Member], offspring: List[Member]) -> List[Member]:
        return sort_members(deduplicate(population + offspring))[:self.cfg.population_size]

    # ================================
    # Main loop
    # ================================

    def run(self) -> RunReport:
        inst, cfg = self.inst, self.cfg
        started = time.perf_counter()
        logger.info(
            f"Starting {cfg.mode} run: {inst.n_plants}x{inst.n_depots}x{inst.n_customers}, "
            f"N_p={cfg.population_size}, N_e={cfg.n_elites}, seed={cfg.seed}"
        )

        if cfg.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=cfg.workers)
        try:
            iterations = self._loop()
        finally:
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None

        best_objective = evaluate_exact(inst, self.best).objective
        wall_time = time.perf_counter() - started
        report = RunReport(
            best_individual=self.best,
            best_objective=best_objective,
            objective_trace=self.trace,
            exact_eval_count=self.evaluator.count,
            surrogate_eval_count=int(getattr(self.scorer, 'prediction_count', 0)),
            iterations_run=iterations,
            wall_time_seconds=wall_time,
            seed=cfg.seed,
            mode=cfg.mode,
            restarts=self.restarts,
            surrogate_error_trace=self.error_trace,
            surrogate_rank_correlation=self._rank_check(),
        )
        logger.info(
            f"Finished {cfg.mode} run: Z={best_objective:.1f} after {iterations} iterations, "
            f"{report.exact_eval_count} exact evaluations, {self.restarts} restarts, {wall_time:.2f}s"
        )
        return report

    def _loop(self) -> int:
        cfg = self.cfg
        population = self.initial_population()
        t, t_nip = 1, 0
        while t <= cfg.t_max and t_nip < cfg.t_nip_max:
            population = self._refresh(population)
            fitness = np.array([member.fitness for member in population])
            f_best, f_bar = float(fitness.min()), float(fitness.mean())

            scored = self._score(self._offspring(population, f_best, f_bar))
            scored = self._mutate(scored, f_best, f_bar)
            ls_winner = self._improve_best(scored) if self.use_local_search else None

            if self._consider(self._evaluate_elites(scored, ls_winner)):
                t_nip = 0
            else:
                t_nip += 1

            population = self._select(population, scored)
            if restart_check(population, cfg.restart_threshold):
                population = restart(
                    population, self.inst, self.rngs['restart'], self._exact_members,
                    cfg.restart_fraction, cfg.depot_index,
                )
                self._consider(population)
                self.restarts += 1

            self.trace.append(self.best_value)
            logger.debug(
                f"Iteration {t}: best {self.best_value:.1f}, |P'|={len(scored)}, t_nip={t_nip}"
            )
            t += 1
        return t - 1

    def _rank_check(self) -> Optional[float]:
        predicted, exact = np.array(self._elite_predictions), np.array(self._elite_exact)
        if len(exact) < 3 or np.ptp(exact) == 0 or np.ptp(predicted) == 0:
            return None
        rho = rank_correlation(predicted, exact)
        if rho < RANK_WARNING_LEVEL:
            logger.warning(f"Surrogate rank correlation on elites is only {rho:.2f}")
        return rho

    def held_out_check(self, n_held_out: int = 50) -> Optional[float]:
        """
        Rank agreement of the current scorer on fresh feasible individuals

        Draws MIH-repaired random individuals that are not in the surrogate's
        training set and compares predicted against exact objectives. The
        exact evaluations made here are not added to the run's counters.

        Args:
            n_held_out: Number of distinct individuals to draw

        Returns:
            Spearman rho, or None when fewer than 3 individuals could be drawn
            or either side is constant
        """
        inst, cfg = self.inst, self.cfg
        rng = self.rngs['held_out']
        training = getattr(self.scorer, 'training_set', None)
        held_out: List[Individual] = []
        seen = set()
        attempts = 0
        while len(held_out) < n_held_out and attempts < 50 * n_held_out:
            attempts += 1
            ind = mih(inst, random_individual(inst, rng), cfg.depot_index)
            if ind.key() in seen or (training is not None and ind.genes in training):
                continue
            seen.add(ind.key())
            held_out.append(ind)
        if len(held_out) < 3:
            logger.info(f"Held-out check skipped: only {len(held_out)} unseen individuals found")
            return None
        predicted = self.scorer.predict_many(held_out)
        exact = [evaluate_exact(inst, ind).objective for ind in held_out]
        return held_out_rank_check(predicted, exact)


def hea_fa_run(inst: Instance, cfg: EngineConfig) -> RunReport:
    if cfg.mode != 'hea_fa':
        cfg = _with_mode(cfg, 'hea_fa')
    return HybridEvolutionEngine(inst, cfg).run()


def baseline_ga_run(inst: Instance, cfg: EngineConfig) -> RunReport:
    if cfg.mode != 'baseline_ga':
        cfg = _with_mode(cfg, 'baseline_ga')
    return HybridEvolutionEngine(inst, cfg).run()


def run(inst: Instance, cfg: EngineConfig) -> RunReport:
    """Dispatch on cfg.mode"""
    return HybridEvolutionEngine(inst, cfg).run()


def _with_mode(cfg: EngineConfig, mode: str) -> EngineConfig:
    return replace(cfg, mode=mode)


def exact_budget(cfg: EngineConfig, report: RunReport) -> int:
    """Upper bound on hea_fa exact evaluations for a finished run"""
    replaced = replacement_count(cfg.population_size, cfg.restart_fraction)
    return 2 * cfg.population_size + report.iterations_run * (cfg.n_elites + 1) + report.restarts * replaced
