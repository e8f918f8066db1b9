"""Domain model shared by every pipeline stage: labels, epochs, datasets, splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class EmptyDataset(PipelineError):
    pass


class ClassTooSmall(PipelineError):
    pass


class ClassLabel(IntEnum):
    """Trial classes. The integer codes are fixed and used on disk and in
    confusion matrices, so they must never be renumbered."""

    LEFT = 0
    RIGHT = 1
    REST = 2


N_CLASSES = len(ClassLabel)


class Provenance(str, Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


def _as_readonly_f64(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Epoch:
    """One fixed-length multichannel trial.

    ``data`` is a read-only [channels x samples] float64 matrix in microvolts.
    Construction rejects ragged or non-finite input, so downstream stages can
    assume clean matrices.
    """

    subject_id: int
    label: ClassLabel
    data: np.ndarray
    sample_rate_hz: float
    channel_names: tuple[str, ...]

    def __post_init__(self):
        if self.subject_id < 1:
            raise ValueError(f"subject_id must be >= 1, got {self.subject_id}")
        object.__setattr__(self, "label", ClassLabel(self.label))
        data = _as_readonly_f64(self.data)
        if data.ndim != 2:
            raise ValueError(f"epoch data must be 2-D, got shape {data.shape}")
        if data.shape[1] == 0:
            raise ValueError("epoch has zero samples")
        if not np.isfinite(data).all():
            raise ValueError("epoch contains NaN or Inf samples")
        object.__setattr__(self, "data", data)
        names = tuple(str(n) for n in self.channel_names)
        if len(names) != data.shape[0]:
            raise ValueError(
                f"{len(names)} channel names for {data.shape[0]} data rows"
            )
        object.__setattr__(self, "channel_names", names)
        if not (self.sample_rate_hz > 0 and math.isfinite(self.sample_rate_hz)):
            raise ValueError(f"bad sample rate {self.sample_rate_hz}")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> "Epoch":
        """Copy of this epoch with new samples (same label and metadata)."""
        return Epoch(self.subject_id, self.label, data,
                     self.sample_rate_hz, self.channel_names)


@dataclass(frozen=True)
class SubjectDataset:
    """All retained epochs of one subject, shape-uniform by construction."""

    subject_id: int
    epochs: tuple[Epoch, ...]
    provenance: Provenance = Provenance.REAL

    def __post_init__(self):
        epochs = tuple(self.epochs)
        if not epochs:
            raise EmptyDataset(f"subject {self.subject_id}: no epochs")
        first = epochs[0]
        for e in epochs:
            if e.subject_id != self.subject_id:
                raise ValueError(
                    f"epoch subject {e.subject_id} != dataset subject {self.subject_id}"
                )
            if e.channel_names != first.channel_names:
                raise ValueError("epochs disagree on channel names")
            if e.n_samples != first.n_samples:
                raise ValueError("epochs disagree on sample count")
            if e.sample_rate_hz != first.sample_rate_hz:
                raise ValueError("epochs disagree on sample rate")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    @property
    def n_channels(self) -> int:
        return self.epochs[0].n_channels

    @property
    def n_samples(self) -> int:
        return self.epochs[0].n_samples

    @property
    def sample_rate_hz(self) -> float:
        return self.epochs[0].sample_rate_hz

    @property
    def channel_names(self) -> tuple[str, ...]:
        return self.epochs[0].channel_names

    def labels(self) -> np.ndarray:
        return np.array([int(e.label) for e in self.epochs], dtype=np.int64)

    def class_counts(self) -> dict[ClassLabel, int]:
        labels = self.labels()
        return {c: int(np.sum(labels == int(c))) for c in ClassLabel}

    def with_epochs(self, epochs) -> "SubjectDataset":
        return SubjectDataset(self.subject_id, tuple(epochs), self.provenance)


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/test index lists over a dataset's epochs."""

    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise ValueError("train and test indices overlap")


def _per_class_train_counts(counts: list[int], train_fraction: float) -> list[int]:
    """Largest-remainder allocation of train slots across classes.

    Overall train size is train_fraction of the total rounded toward train;
    each class keeps at least one epoch on both sides of the split.
    """
    total = sum(counts)
    target = math.ceil(train_fraction * total - 1e-9)
    base = []
    rem = []
    for n_c in counts:
        ideal = train_fraction * n_c
        b = min(max(int(math.floor(ideal)), 1), n_c - 1)
        base.append(b)
        rem.append(ideal - b)
    target = min(max(target, len(counts)), total - len(counts))
    # hand out (or claw back) one epoch at a time, largest remainder first
    while sum(base) < target:
        order = sorted(range(len(counts)), key=lambda i: (-rem[i], i))
        for i in order:
            if base[i] < counts[i] - 1:
                base[i] += 1
                rem[i] -= 1.0
                break
        else:
            break
    while sum(base) > target:
        order = sorted(range(len(counts)), key=lambda i: (rem[i], i))
        for i in order:
            if base[i] > 1:
                base[i] -= 1
                rem[i] += 1.0
                break
        else:
            break
    return base


def stratified_split(dataset: SubjectDataset, train_fraction: float,
                     seed: int) -> SplitIndices:
    """Per-class random split into train/test index lists.

    Every class contributes train_fraction of its epochs (within one epoch)
    so no class can vanish from either side. Deterministic for a fixed seed.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if dataset.n_epochs == 0:
        raise EmptyDataset(f"subject {dataset.subject_id}: no epochs")
    labels = dataset.labels()
    counts = dataset.class_counts()
    small = [c for c in ClassLabel if counts[c] < 2]
    if small:
        raise ClassTooSmall(
            f"subject {dataset.subject_id}: classes with fewer than 2 epochs: "
            + ", ".join(c.name for c in small)
        )
    rng = np.random.default_rng(seed)
    n_train = _per_class_train_counts([counts[c] for c in ClassLabel],
                                      train_fraction)
    train: list[int] = []
    test: list[int] = []
    for c, n_t in zip(ClassLabel, n_train):
        idx = np.flatnonzero(labels == int(c))
        perm = rng.permutation(len(idx))
        shuffled = idx[perm]
        train.extend(int(i) for i in shuffled[:n_t])
        test.extend(int(i) for i in shuffled[n_t:])
    return SplitIndices(tuple(sorted(train)), tuple(sorted(test)), seed)
