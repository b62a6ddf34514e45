"""Deterministic RNG derivation.

Every random decision in the pipeline draws from a numpy Generator keyed
by (seed, context tags), so results never depend on call order or thread
schedule. Tags keep unrelated streams (noise vs. partition vs. split)
decorrelated even when the user passes the same seed everywhere.
"""

import numpy as np

# Stream tags. Values are arbitrary but frozen: changing them changes
# every generated dataset.
TAG_MIXING = 11
TAG_CATEGORY = 12
TAG_EXEMPLAR = 13
TAG_SUBJECT_GAIN = 14
TAG_TRIAL = 15
TAG_PARTITION = 21
TAG_SPLIT = 22
TAG_MODEL_INIT = 31
TAG_SHUFFLE = 32


def rng_for(seed, *tags) -> np.random.Generator:
    """Generator keyed by a seed plus integer context tags."""
    return np.random.default_rng([int(seed), *[int(t) for t in tags]])


def derive_seed(seed, *tags) -> int:
    """Collapse (seed, tags) into a single reproducible integer seed."""
    ss = np.random.SeedSequence([int(seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1)[0])
