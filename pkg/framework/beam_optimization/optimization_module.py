"""
Beam Optimization Module

Picks the probing-beam combination with the highest average sum rate over
its sampled and augmented samples, either by scanning every combination or
with a binary-coded genetic algorithm.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from probeopt_core.config.settings import GaSettings
from probeopt_core.errors import ConfigurationError, UndefinedFitnessError
from probeopt_core.seeding import rng_for

logger = logging.getLogger(__name__)

ROULETTE_OFFSET = 1e-9


@dataclass
class CombinationPool:
    """Sampled and augmented sum rates of every probing combination (1-based)."""
    n_combos: int
    sampled: Dict[int, np.ndarray] = field(default_factory=dict)
    augmented: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_combos < 1:
            raise ConfigurationError(f"a pool needs at least one combination, got {self.n_combos}")
        for name, rates in (("sampled", self.sampled), ("augmented", self.augmented)):
            for combo, values in rates.items():
                if not 1 <= combo <= self.n_combos:
                    raise ConfigurationError(f"{name} rates for combination {combo} outside 1..{self.n_combos}")
                values = np.asarray(values, dtype=float).ravel()
                if np.any(values < 0) or not np.all(np.isfinite(values)):
                    raise ConfigurationError(f"{name} rates of combination {combo} must be finite and >= 0")
                rates[combo] = values

    @classmethod
    def from_rates(
        cls,
        sampled: Mapping[int, Sequence[float]],
        augmented: Mapping[int, Sequence[float]],
        n_combos: int,
    ) -> "CombinationPool":
        return cls(n_combos, dict(sampled), dict(augmented))

    def counts(self, combo: int) -> tuple:
        """(sampled count, augmented count) of one combination."""
        return (
            int(self.sampled.get(combo, np.zeros(0)).size),
            int(self.augmented.get(combo, np.zeros(0)).size),
        )

    def empty_combos(self) -> List[int]:
        return [c for c in range(1, self.n_combos + 1) if sum(self.counts(c)) == 0]


def fitness(pool: CombinationPool, combo: int) -> float:
    """
    Average sum rate of a combination over its sampled and augmented samples.

    Raises:
        UndefinedFitnessError: If the combination has no samples
    """
    rates = np.concatenate([pool.sampled.get(combo, np.zeros(0)), pool.augmented.get(combo, np.zeros(0))])
    if rates.size == 0:
        raise UndefinedFitnessError(f"combination {combo} has no sampled or augmented rates", [combo])
    return float(rates.mean())


def _require_defined(pool: CombinationPool) -> None:
    empty = pool.empty_combos()
    if empty:
        raise UndefinedFitnessError(f"combinations without any rates: {empty}", empty)


def exhaustive_select(pool: CombinationPool) -> int:
    """Combination with the highest fitness; ties go to the lowest index."""
    _require_defined(pool)
    scores = [fitness(pool, combo) for combo in range(1, pool.n_combos + 1)]
    return int(np.argmax(scores)) + 1


@dataclass
class GaTraceRow:
    restart: int
    generation: int
    best: float
    mean: float


@dataclass
class GaResult:
    best_combo: int
    best_fitness: float
    trace: List[GaTraceRow] = field(default_factory=list)
    evaluations: int = 0


def code_width(n_combos: int) -> int:
    return max(1, math.ceil(math.log2(n_combos)))


def decode_code(code: int, n_combos: int) -> int:
    """Binary code -> 1-based combination; codes past the last combination wrap around."""
    return int(code) % n_combos + 1


def ga_optimize(
    pool: CombinationPool,
    ga: GaSettings,
    initial_population: Optional[Sequence[int]] = None,
) -> GaResult:
    """
    Genetic search over combination indices.

    Individuals are fixed-width binary codes of 0-based combination indices.
    Each of ``ga.n_iterations`` restarts evolves ``ga.n_evolutions``
    generations of roulette selection on shifted fitness, single-point
    crossover, single-bit mutation and elitism. The best individual seen in
    any restart is returned; ties go to the lowest combination.

    Args:
        pool: Combination pool; every combination needs at least one rate
        ga: GA settings
        initial_population: 1-based combinations seeding the first restart

    Returns:
        GaResult: Best combination, its fitness and the per-generation trace
    """
    _require_defined(pool)
    width = code_width(pool.n_combos)
    cache: Dict[int, float] = {}

    def score(codes: np.ndarray) -> np.ndarray:
        values = []
        for code in codes:
            combo = decode_code(code, pool.n_combos)
            if combo not in cache:
                cache[combo] = fitness(pool, combo)
            values.append(cache[combo])
        return np.asarray(values)

    best_combo, best_fitness = 0, -np.inf

    def consider(codes: np.ndarray, scores: np.ndarray) -> None:
        nonlocal best_combo, best_fitness
        for code, value in zip(codes, scores):
            combo = decode_code(code, pool.n_combos)
            if value > best_fitness or (value == best_fitness and combo < best_combo):
                best_combo, best_fitness = combo, float(value)

    trace: List[GaTraceRow] = []
    for restart in range(ga.n_iterations):
        rng = rng_for(ga.seed, restart)
        if restart == 0 and initial_population is not None:
            population = np.asarray([int(c) - 1 for c in initial_population], dtype=int)
        else:
            population = rng.integers(0, 2**width, size=ga.population)
        size = population.size

        for generation in range(ga.n_evolutions):
            scores = score(population)
            consider(population, scores)
            trace.append(GaTraceRow(restart, generation, float(scores.max()), float(scores.mean())))

            shifted = scores - scores.min() + ROULETTE_OFFSET
            parents = population[rng.choice(size, size=size, p=shifted / shifted.sum())]
            children = parents.copy()
            for i in range(0, size - 1, 2):
                if width > 1 and rng.random() < ga.crossover:
                    point = int(rng.integers(1, width))
                    low = (1 << point) - 1
                    a, b = children[i], children[i + 1]
                    children[i], children[i + 1] = (a & ~low) | (b & low), (b & ~low) | (a & low)
            for i in range(size):
                if rng.random() < ga.mutation:
                    children[i] ^= 1 << int(rng.integers(0, width))

            elite = min(ga.elitism, size)
            if elite:
                ranked = sorted(range(size), key=lambda j: (-scores[j], decode_code(population[j], pool.n_combos)))
                children[:elite] = population[ranked[:elite]]
            population = children

        scores = score(population)
        consider(population, scores)
        trace.append(GaTraceRow(restart, ga.n_evolutions, float(scores.max()), float(scores.mean())))

    logger.info(
        "GA finished",
        extra={"fields": {"best_combo": best_combo, "best_fitness": best_fitness, "evaluations": len(cache)}},
    )
    return GaResult(best_combo=best_combo, best_fitness=best_fitness, trace=trace, evaluations=len(cache))
