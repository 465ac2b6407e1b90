"""Small helpers shared across the package."""

import numpy as np

# Stream identifiers mixed into derived seeds, so that e.g. surrogate #3 and trial #3
# never share a random stream.
SEED_STREAM_SPLIT = 1
SEED_STREAM_SUBSETS = 2
SEED_STREAM_SURROGATE = 3
SEED_STREAM_BINARY = 4
SEED_STREAM_VICTIM = 5
SEED_STREAM_TASK = 6
SEED_STREAM_TRIAL = 7
SEED_STREAM_REPETITION = 8


def seed_sequence(master_seed: int, *keys: int) -> np.random.SeedSequence:
    """Return the SeedSequence derived from `master_seed` and the (integer) `keys`.

    Derivation only depends on the keys, not on call order: the stream of trial #12 is the same
    whether trials run serially or in any parallel schedule.
    """
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(master_seed: int, *keys: int) -> int:
    """Return an unsigned 32 bits seed derived from `master_seed` and `keys` (see :func:`seed_sequence`)."""
    return int(seed_sequence(master_seed, *keys).generate_state(1, dtype=np.uint32)[0])


def derived_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Return a numpy Generator seeded from `master_seed` and `keys`."""
    return np.random.default_rng(seed_sequence(master_seed, *keys))


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves going up (Python's round() goes to even)."""
    return int(np.floor(x + 0.5))
