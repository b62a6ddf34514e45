import numpy as np
import pytest

from erpvis import SynthConfig, generate_synthetic_dataset


# Small but structurally faithful: 2 subjects, 6 categories x 2 exemplars,
# 12 trials per image so n=2 averaging gives 6 sequences per image.
SMALL_CFG = SynthConfig(
    n_subjects=2,
    n_categories=6,
    n_exemplars_per_category=2,
    trials_per_image=12,
    channels=8,
    samples_per_trial=20,
    single_trial_snr_db=-10.0,
    seed=7,
)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(SMALL_CFG)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
