"""Tests for fitness, exhaustive selection and the genetic search."""

import numpy as np
import pytest

from framework.beam_optimization.optimization_module import (
    CombinationPool,
    code_width,
    decode_code,
    exhaustive_select,
    fitness,
    ga_optimize,
)
from probeopt_core.config.settings import GaSettings
from probeopt_core.errors import ConfigurationError, UndefinedFitnessError


def pool_of(means) -> CombinationPool:
    """One sampled rate per combination."""
    return CombinationPool.from_rates({i + 1: [m] for i, m in enumerate(means)}, {}, len(means))


def test_fitness_is_the_pooled_mean():
    """Sampled and augmented rates count equally."""
    assert fitness(CombinationPool.from_rates({1: [2.0, 4.0]}, {}, 1), 1) == 3.0
    assert fitness(CombinationPool.from_rates({}, {1: [5.0]}, 1), 1) == 5.0
    assert fitness(CombinationPool.from_rates({1: [1.0]}, {1: [2.0, 3.0, 6.0]}, 1), 1) == 3.0


def test_fitness_of_empty_combination_is_undefined():
    """No samples, no fitness."""
    pool = CombinationPool.from_rates({1: [1.0]}, {}, 3)
    with pytest.raises(UndefinedFitnessError) as info:
        fitness(pool, 2)
    assert info.value.offenders == [2]
    with pytest.raises(UndefinedFitnessError) as info:
        exhaustive_select(pool)
    assert info.value.offenders == [2, 3]


def test_pool_rejects_negative_rates():
    """Sum rates are nonnegative."""
    with pytest.raises(ConfigurationError):
        CombinationPool.from_rates({1: [-1.0]}, {}, 1)
    with pytest.raises(ConfigurationError):
        CombinationPool.from_rates({4: [1.0]}, {}, 3)


def test_exhaustive_selection():
    """The best mean wins; ties go to the lowest index."""
    assert exhaustive_select(pool_of([1.0])) == 1
    assert exhaustive_select(pool_of([1.0, 3.0, 2.0])) == 2
    assert exhaustive_select(pool_of([2.0, 5.0, 5.0, 1.0])) == 2


def test_exhaustive_selection_is_affine_invariant():
    """Scaling and shifting rates keeps the winner."""
    rng = np.random.default_rng(0)
    means = rng.uniform(1, 10, size=8)
    assert exhaustive_select(pool_of(means)) == exhaustive_select(pool_of(3.0 * means + 2.0))


def test_binary_coding():
    """Codes past the last combination wrap around."""
    assert code_width(1) == 1
    assert code_width(8) == 3
    assert code_width(5) == 3
    assert decode_code(0, 5) == 1
    assert decode_code(6, 5) == 2


def test_single_combination():
    """With L = 1 the only combination is returned."""
    result = ga_optimize(pool_of([4.0]), GaSettings())
    assert result.best_combo == 1
    assert result.best_fitness == 4.0


def test_covering_initial_population_matches_exhaustive():
    """A population holding every combination finds the exhaustive winner."""
    means = [3.0, 1.0, 7.5, 2.0, 7.5, 0.5, 6.0, 4.0]
    pool = pool_of(means)
    ga = GaSettings(population=8, n_iterations=1, n_evolutions=1)
    result = ga_optimize(pool, ga, initial_population=range(1, 9))
    assert result.best_combo == exhaustive_select(pool) == 3


def test_elitism_keeps_generation_best_monotone():
    """Within a restart the generation best never drops."""
    rng = np.random.default_rng(2)
    pool = pool_of(rng.uniform(0, 10, size=16))
    result = ga_optimize(pool, GaSettings(population=4, n_iterations=2, n_evolutions=6, elitism=1, seed=3))
    for restart in range(2):
        bests = [row.best for row in result.trace if row.restart == restart]
        assert all(later >= earlier for earlier, later in zip(bests, bests[1:]))


def test_trace_shape_and_determinism():
    """One row per generation plus the final population, reproducible per seed."""
    pool = pool_of(np.linspace(1, 2, 8))
    ga = GaSettings(n_iterations=3, n_evolutions=5, seed=11)
    first, second = ga_optimize(pool, ga), ga_optimize(pool, ga)
    assert len(first.trace) == 3 * 6
    assert first.best_combo == second.best_combo
    assert [r.mean for r in first.trace] == [r.mean for r in second.trace]
    assert 1 <= first.evaluations <= 8


def test_ga_result_is_never_worse_than_initial_population():
    """The returned fitness is at least the best seeded individual."""
    means = [5.0, 1.0, 2.0, 9.0, 3.0]
    result = ga_optimize(pool_of(means), GaSettings(population=2, seed=4), initial_population=[1, 4])
    assert result.best_fitness >= 9.0


@pytest.mark.slow
def test_ga_agrees_with_exhaustive_on_random_pools():
    """Default settings find the exhaustive winner in at least 95 of 100 trials."""
    agree = 0
    for trial in range(100):
        rng = np.random.default_rng(trial)
        sampled = {c: rng.uniform(0, 20, size=10) for c in range(1, 9)}
        pool = CombinationPool.from_rates(sampled, {}, 8)
        agree += ga_optimize(pool, GaSettings(seed=trial)).best_combo == exhaustive_select(pool)
    assert agree >= 95
