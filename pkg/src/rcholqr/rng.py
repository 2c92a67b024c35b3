"""
Seeded random streams.

Every random draw in the package comes from numpy's Philox4x64-10 counter-based
bit generator. Its key is derived from (seed, *stream) through a SeedSequence, so
independent streams (sketch redraws, RSVD iterations, Monte-Carlo trials) never
share state and a run is reproduced exactly from its seeds.
"""
import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def derive_seed(seed: int, *stream: int) -> int:
    """A 63-bit child seed, for configs that carry a plain integer seed."""
    state = np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
