"""Partitioning, averaging, ERP space construction, and splitting."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erpvis import (
    EEGTrial,
    SynthConfig,
    TrialSubset,
    average_trials,
    build_erp_space,
    generate_synthetic_dataset,
    partition_trials,
    split_erp_space,
    synth_noise_sigma,
    synth_template,
)
from erpvis.errors import DomainError, PartitionError, SplitError

from conftest import SMALL_CFG


def make_trials(count, channels=2, samples=4, subject=1, exemplar=0, seed=0):
    rng = np.random.default_rng(seed)
    return [
        EEGTrial(data=rng.normal(size=(channels, samples)).astype(np.float32),
                 subject_id=subject, exemplar_id=exemplar, category_id=0)
        for _ in range(count)
    ]


class TestPartition:
    def test_72_trials_into_6_sets_of_12(self):
        trials = make_trials(72)
        subsets = partition_trials(trials, 12, seed=0)
        assert len(subsets) == 6
        assert all(s.size == 12 for s in subsets)
        # disjoint and covering: every trial object appears exactly once
        seen = [t for s in subsets for t in s.trials]
        assert len(seen) == 72
        assert {id(t) for t in seen} == {id(t) for t in trials}

    def test_n_equals_total_single_subset(self):
        trials = make_trials(8)
        subsets = partition_trials(trials, 8, seed=0)
        assert len(subsets) == 1
        assert subsets[0].size == 8

    def test_indivisible_count_is_an_error(self):
        with pytest.raises(PartitionError, match="not divisible"):
            partition_trials(make_trials(5), 2, seed=0)

    def test_deterministic_per_seed(self):
        trials = make_trials(24)
        a = partition_trials(trials, 6, seed=42)
        b = partition_trials(trials, 6, seed=42)
        for sa, sb in zip(a, b):
            assert [id(t) for t in sa.trials] == [id(t) for t in sb.trials]
        c = partition_trials(trials, 6, seed=43)
        assert any(
            [id(t) for t in sa.trials] != [id(t) for t in sc.trials]
            for sa, sc in zip(a, c)
        )

    def test_mixed_stimuli_rejected(self):
        trials = make_trials(4, exemplar=0) + make_trials(4, exemplar=1)
        with pytest.raises(PartitionError, match="multiple stimuli"):
            partition_trials(trials, 2, seed=0)


class TestAverage:
    def test_identical_trials_average_to_themselves(self):
        base = make_trials(1)[0]
        subset = TrialSubset(trials=tuple([base] * 12), subset_index=0)
        erp = average_trials(subset)
        assert np.array_equal(erp.data, base.data)
        assert erp.n_averaged == 12

    def test_two_trial_mean(self):
        t1 = EEGTrial(data=np.array([[1.0, 3.0]], dtype=np.float32),
                      subject_id=1, exemplar_id=0, category_id=0)
        t2 = EEGTrial(data=np.array([[3.0, 5.0]], dtype=np.float32),
                      subject_id=1, exemplar_id=0, category_id=0)
        erp = average_trials(TrialSubset(trials=(t1, t2), subset_index=0))
        np.testing.assert_array_equal(erp.data, np.array([[2.0, 4.0]], dtype=np.float32))

    def test_empty_subset_rejected(self):
        with pytest.raises(DomainError):
            TrialSubset(trials=(), subset_index=0)

    @given(order=st.permutations(list(range(6))))
    @settings(max_examples=20, deadline=None)
    def test_permutation_invariant(self, order):
        trials = make_trials(6, seed=3)
        ref = average_trials(TrialSubset(trials=tuple(trials), subset_index=0))
        shuffled = average_trials(TrialSubset(trials=tuple(trials[i] for i in order), subset_index=0))
        np.testing.assert_allclose(ref.data, shuffled.data, rtol=1e-6, atol=1e-7)

    def test_channel_permutation_equivariant(self):
        trials = make_trials(4, channels=5, seed=9)
        perm = np.array([3, 0, 4, 1, 2])
        permuted = [
            EEGTrial(data=t.data[perm], subject_id=t.subject_id,
                     exemplar_id=t.exemplar_id, category_id=t.category_id)
            for t in trials
        ]
        ref = average_trials(TrialSubset(trials=tuple(trials), subset_index=0))
        out = average_trials(TrialSubset(trials=tuple(permuted), subset_index=0))
        np.testing.assert_array_equal(out.data, ref.data[perm])

    def test_mean_of_subset_means_is_grand_mean(self):
        # Values are dyadic rationals and subset sizes powers of two, so
        # float32 storage of the subset means is exact and the property
        # can be checked at full tightness.
        rng = np.random.default_rng(5)
        trials = [
            EEGTrial(
                data=(rng.integers(-1024, 1024, size=(2, 4)) * 2.0**-10).astype(np.float32),
                subject_id=1, exemplar_id=0, category_id=0,
            )
            for _ in range(16)
        ]
        subsets = partition_trials(trials, 4, seed=1)
        sub_means = np.stack([average_trials(s).data.astype(np.float64) for s in subsets])
        grand = np.stack([t.data for t in trials]).astype(np.float64).mean(axis=0)
        np.testing.assert_allclose(sub_means.mean(axis=0), grand, rtol=1e-9, atol=0)

    def test_mean_of_subset_means_random_data(self):
        # With arbitrary float32 inputs the agreement is limited by the
        # float32 storage of each subset mean.
        trials = make_trials(24, seed=5)
        subsets = partition_trials(trials, 6, seed=1)
        sub_means = np.stack([average_trials(s).data.astype(np.float64) for s in subsets])
        grand = np.stack([t.data for t in trials]).astype(np.float64).mean(axis=0)
        np.testing.assert_allclose(sub_means.mean(axis=0), grand, rtol=0, atol=1e-6)

    def test_residual_variance_shrinks_by_subset_size(self):
        # Monte-Carlo oracle: with known per-trial noise variance, the ERP
        # residual variance must be sigma^2 / n.
        cfg = SynthConfig(n_subjects=1, n_categories=2, n_exemplars_per_category=2,
                          trials_per_image=48, channels=8, samples_per_trial=24,
                          single_trial_snr_db=-10.0, latency_jitter_samples=0, seed=21)
        ds = generate_synthetic_dataset(cfg)
        n = 12
        ratios = []
        for ex in range(cfg.n_exemplars):
            trials = [t for t in ds.trials if t.exemplar_id == ex]
            template = synth_template(cfg, 1, ex)
            sigma2 = synth_noise_sigma(cfg, 1, ex) ** 2
            for subset in partition_trials(trials, n, seed=2):
                erp = average_trials(subset)
                resid = erp.data.astype(np.float64) - template
                ratios.append(resid.var() / (sigma2 / n))
        assert abs(np.mean(ratios) - 1.0) < 0.10


class TestBuildSpace:
    def test_cardinality(self, small_dataset):
        space = build_erp_space(small_dataset, 4, seed=1)
        cfg = SMALL_CFG
        assert len(space) == cfg.n_subjects * cfg.n_exemplars * (cfg.trials_per_image // 4)
        for (subj, ex), members in space.groups().items():
            assert len(members) == cfg.trials_per_image // 4

    def test_n_one_is_identity(self, small_dataset):
        space = build_erp_space(small_dataset, 1, seed=1)
        assert len(space) == small_dataset.n_trials
        by_stim = {}
        for t in small_dataset.trials:
            by_stim.setdefault((t.subject_id, t.exemplar_id), []).append(t.data)
        for (subj, ex), members in space.groups().items():
            raws = by_stim[(subj, ex)]
            erps = sorted([m.data.tobytes() for m in members])
            assert erps == sorted([r.tobytes() for r in raws])

    def test_single_subject_count(self, small_dataset):
        sub = small_dataset.for_subject(1)
        space = build_erp_space(sub, 4, seed=1)
        assert len(space) == SMALL_CFG.n_exemplars * (SMALL_CFG.trials_per_image // 4)

    def test_indivisible_propagates_with_stimulus(self, small_dataset):
        with pytest.raises(PartitionError, match="subject"):
            build_erp_space(small_dataset, 5, seed=1)


class TestSplit:
    def _space(self, small_dataset, n=2):
        # 12 trials per image, n=2 -> 6 sequences per image
        return build_erp_space(small_dataset, n, seed=3)

    def test_five_one_split(self, small_dataset):
        space = self._space(small_dataset)
        train, test = split_erp_space(space, 5, seed=0)
        for members in train.groups().values():
            assert len(members) == 5
        for members in test.groups().values():
            assert len(members) == 1
        assert len(train) + len(test) == len(space)

    def test_disjoint_and_covering(self, small_dataset):
        space = self._space(small_dataset)
        train, test = split_erp_space(space, 5, seed=8)
        key = lambda s: (s.subject_id, s.exemplar_id, s.subset_index)
        train_ids = {key(s) for s in train.sequences}
        test_ids = {key(s) for s in test.sequences}
        assert not (train_ids & test_ids)
        assert train_ids | test_ids == {key(s) for s in space.sequences}

    def test_zero_train_rejected(self, small_dataset):
        space = self._space(small_dataset)
        with pytest.raises(SplitError):
            split_erp_space(space, 0, seed=0)

    def test_too_small_group_names_group(self, small_dataset):
        space = self._space(small_dataset)
        with pytest.raises(SplitError, match="subject"):
            split_erp_space(space, 6, seed=0)

    def test_seed_determinism_and_variation(self, small_dataset):
        space = self._space(small_dataset)
        key = lambda s: (s.subject_id, s.exemplar_id, s.subset_index)
        base_train, _ = split_erp_space(space, 5, seed=0)
        again_train, _ = split_erp_space(space, 5, seed=0)
        assert {key(s) for s in base_train.sequences} == {key(s) for s in again_train.sequences}
        differing = 0
        for seed in range(1, 101):
            other_train, _ = split_erp_space(space, 5, seed=seed)
            if {key(s) for s in other_train.sequences} != {key(s) for s in base_train.sequences}:
                differing += 1
        assert differing > 90
