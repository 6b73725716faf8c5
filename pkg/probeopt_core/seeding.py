"""Independent, reproducible random streams derived from one base seed."""

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """
    Derive a child seed from a base seed and integer keys.

    Args:
        base: Base seed of the run
        *keys: Stream identifiers (stage, location set, combination, ...)

    Returns:
        int: 32-bit seed, identical for identical (base, keys)
    """
    sequence = np.random.SeedSequence(int(base), spawn_key=tuple(int(k) for k in keys))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def rng_for(base: int, *keys: int) -> np.random.Generator:
    """Generator seeded with ``derive_seed(base, *keys)``."""
    return np.random.default_rng(derive_seed(base, *keys))
