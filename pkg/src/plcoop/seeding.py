"""Deterministic seed derivation.

Every random decision in the toolkit flows from one user-facing integer seed.
Sub-seeds for independent roles (network init, batch shuffling, fold splits,
corruption, ...) are derived through ``numpy.random.SeedSequence`` so that
nearby base seeds still yield statistically independent streams and the same
(seed, role) pair always maps to the same sub-seed on every platform.
"""

from __future__ import annotations

import numpy as np

# Role codes. Values are arbitrary but frozen: changing them changes every
# derived stream and therefore every reproducible result.
ROLE_NET_ALPHA = 1
ROLE_NET_BETA = 2
ROLE_BATCHES = 3
ROLE_FOLDS = 4
ROLE_FOLD_TRAIN = 5
ROLE_CORRUPT = 6
ROLE_KNN_SELECT = 7
ROLE_EARLY_STOP_SPLIT = 8


def derive_seed(seed: int, *role: int) -> int:
    """Map (seed, role...) to a stable 64-bit sub-seed."""
    state = np.random.SeedSequence([int(seed), *[int(r) for r in role]]).generate_state(2)
    return int(state[0]) | (int(state[1]) << 32)


def rng_for(seed: int, *role: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *role))
