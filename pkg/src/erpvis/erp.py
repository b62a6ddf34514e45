"""Trial averaging: partition repeated trials and fuse each subset.

Averaging same-stimulus trials attenuates activity that varies across
presentations while keeping the stimulus-locked response, trading trial
count for signal-to-noise. The result is an ERP space: one averaged
sequence per (subject, exemplar, subset), splittable into train/test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, EEGTrial
from .errors import DomainError, PartitionError, SplitError
from .seeding import TAG_PARTITION, TAG_SPLIT, rng_for


@dataclass(frozen=True, eq=False)
class TrialSubset:
    """Same-stimulus trials destined to be averaged into one sequence."""

    trials: tuple
    subset_index: int

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple(self.trials))
        if not self.trials:
            raise DomainError("trial subset must be non-empty")
        labels = {(t.subject_id, t.exemplar_id) for t in self.trials}
        if len(labels) > 1:
            raise DomainError(f"subset mixes stimuli: {sorted(labels)}")
        shapes = {t.data.shape for t in self.trials}
        if len(shapes) > 1:
            raise DomainError(f"subset mixes trial shapes: {sorted(shapes)}")

    @property
    def subject_id(self) -> int:
        return self.trials[0].subject_id

    @property
    def exemplar_id(self) -> int:
        return self.trials[0].exemplar_id

    @property
    def size(self) -> int:
        return len(self.trials)


@dataclass(frozen=True, eq=False)
class ERPSequence:
    """An averaged trial subset; same shape as its constituents."""

    data: np.ndarray
    subject_id: int
    exemplar_id: int
    category_id: int
    n_averaged: int
    subset_index: int = 0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2:
            raise DomainError(f"sequence data must be 2-d, got shape {arr.shape}")
        if self.n_averaged < 1:
            raise DomainError(f"n_averaged must be >= 1, got {self.n_averaged}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class ERPSpace:
    """The full collection of labelled ERP sequences."""

    sequences: tuple
    sampling_rate_hz: float
    exemplar_to_category: tuple
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sequences", tuple(self.sequences))
        object.__setattr__(self, "exemplar_to_category", tuple(int(c) for c in self.exemplar_to_category))

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def channels(self) -> int:
        return self.sequences[0].channels if self.sequences else 0

    @property
    def samples(self) -> int:
        return self.sequences[0].samples if self.sequences else 0

    @property
    def subjects(self) -> tuple:
        return tuple(sorted({s.subject_id for s in self.sequences}))

    def groups(self) -> dict:
        """Sequences keyed by (subject_id, exemplar_id), in stored order."""
        out: dict[tuple[int, int], list] = {}
        for seq in self.sequences:
            out.setdefault((seq.subject_id, seq.exemplar_id), []).append(seq)
        return out

    def __eq__(self, other):
        if not isinstance(other, ERPSpace):
            return NotImplemented
        if (
            self.sampling_rate_hz != other.sampling_rate_hz
            or self.exemplar_to_category != other.exemplar_to_category
            or len(self.sequences) != len(other.sequences)
        ):
            return False
        for a, b in zip(self.sequences, other.sequences):
            if (a.subject_id, a.exemplar_id, a.category_id, a.n_averaged) != (
                b.subject_id, b.exemplar_id, b.category_id, b.n_averaged,
            ):
                return False
            if not np.array_equal(a.data, b.data):
                return False
        return True


def partition_trials(trials, n: int, seed: int) -> list:
    """Partition one stimulus's trials into disjoint subsets of size n.

    A seeded random permutation is chunked into consecutive blocks, so
    subsets are disjoint, cover the input exactly, and are reproducible
    per (seed, subject, exemplar). Refuses to drop a remainder.
    """
    trials = list(trials)
    if n < 1:
        raise PartitionError(f"subset size must be >= 1, got {n}")
    if not trials:
        raise PartitionError("cannot partition an empty trial list")
    labels = {(t.subject_id, t.exemplar_id) for t in trials}
    if len(labels) > 1:
        raise PartitionError(f"trials span multiple stimuli: {sorted(labels)}")
    total = len(trials)
    if total % n != 0:
        subj, ex = next(iter(labels))
        raise PartitionError(
            f"stimulus (subject {subj}, exemplar {ex}): {total} trials not divisible by n={n}"
        )
    subj, ex = next(iter(labels))
    perm = rng_for(seed, TAG_PARTITION, subj, ex).permutation(total)
    return [
        TrialSubset(trials=tuple(trials[j] for j in perm[i * n:(i + 1) * n]), subset_index=i)
        for i in range(total // n)
    ]


def average_trials(subset: TrialSubset) -> ERPSequence:
    """Element-wise mean of a subset, accumulated in 64-bit."""
    first = subset.trials[0]
    if subset.size == 1:
        # Mean of one trial is the trial; skip the copy.
        data = first.data
    else:
        stack = np.stack([t.data for t in subset.trials]).astype(np.float64)
        data = stack.mean(axis=0).astype(np.float32)
    return ERPSequence(
        data=data,
        subject_id=first.subject_id,
        exemplar_id=first.exemplar_id,
        category_id=first.category_id,
        n_averaged=subset.size,
        subset_index=subset.subset_index,
    )


def build_erp_space(ds: Dataset, n: int, seed: int) -> ERPSpace:
    """Partition and average every (subject, exemplar) group of a dataset."""
    groups: dict[tuple[int, int], list[EEGTrial]] = {}
    for t in ds.trials:
        groups.setdefault((t.subject_id, t.exemplar_id), []).append(t)
    sequences = []
    for key in sorted(groups):
        for subset in partition_trials(groups[key], n, seed):
            sequences.append(average_trials(subset))
    return ERPSpace(
        sequences=tuple(sequences),
        sampling_rate_hz=ds.sampling_rate_hz,
        exemplar_to_category=ds.exemplar_to_category,
        provenance={
            "source": ds.metadata.get("dataset_id", "unknown"),
            "n": n,
            "partition_seed": int(seed),
        },
    )


def split_erp_space(space: ERPSpace, train_per_image: int, seed: int):
    """Stratified per-stimulus split into (train, test) spaces.

    Each (subject, exemplar) group is shuffled with its own seeded stream;
    the first train_per_image sequences go to train, the rest to test.
    """
    if train_per_image < 1:
        raise SplitError(f"train_per_image must be >= 1, got {train_per_image}")
    groups = space.groups()
    train_seqs, test_seqs = [], []
    for key in sorted(groups):
        members = groups[key]
        if len(members) < train_per_image + 1:
            raise SplitError(
                f"group (subject {key[0]}, exemplar {key[1]}) has {len(members)} sequences, "
                f"needs at least {train_per_image + 1}"
            )
        perm = rng_for(seed, TAG_SPLIT, key[0], key[1]).permutation(len(members))
        chosen = set(perm[:train_per_image].tolist())
        for i, seq in enumerate(members):
            (train_seqs if i in chosen else test_seqs).append(seq)
    _assert_no_leakage(space, train_seqs, test_seqs)
    make = lambda seqs: ERPSpace(
        sequences=tuple(seqs),
        sampling_rate_hz=space.sampling_rate_hz,
        exemplar_to_category=space.exemplar_to_category,
        provenance=dict(space.provenance),
    )
    return make(train_seqs), make(test_seqs)


def _assert_no_leakage(space: ERPSpace, train_seqs, test_seqs):
    """Structural guarantee: train and test partition the space exactly."""
    key = lambda s: (s.subject_id, s.exemplar_id, s.subset_index)
    train_ids = {key(s) for s in train_seqs}
    test_ids = {key(s) for s in test_seqs}
    if train_ids & test_ids:
        raise SplitError(f"train/test leak: {sorted(train_ids & test_ids)[:3]}")
    all_ids = {key(s) for s in space.sequences}
    if (train_ids | test_ids) != all_ids:
        raise SplitError("split does not cover the ERP space")
