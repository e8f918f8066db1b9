"""Synthetic subject generator: a desk-scale stand-in for the real recordings.

Each motor-imagery epoch carries a band-limited oscillation (10 Hz and 22 Hz
components) on the hemisphere contralateral to the imagined hand, on top of
white Gaussian noise; rest epochs are noise only. Class separation therefore
scales with ``lateralization_strength`` and vanishes at zero.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .io import DEFAULT_MOTOR_CHANNELS
from .model import ClassLabel, Epoch, Provenance, SubjectDataset

_TRAILING_DIGITS = re.compile(r"(\d+)$")


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 1
    n_epochs_per_subject: int = 100
    n_channels: int = 10
    n_samples: int = 1536
    sample_rate_hz: float = 512.0
    lateralization_strength: float = 4.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_epochs_per_subject < 1:
            raise ValueError("subject and epoch counts must be positive")
        if self.n_channels < 1 or self.n_samples < 1:
            raise ValueError("channel and sample counts must be positive")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        if self.lateralization_strength < 0:
            raise ValueError("lateralization_strength must be >= 0")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be > 0")


def hemisphere_indices(names) -> tuple[list[int], list[int]]:
    """Split channel names into (left, right) hemisphere index lists.

    Follows the 10-10 convention: odd trailing number = left hemisphere,
    even = right, no number (midline z) = neither. Falls back to a
    first-half/second-half split when the names carry no numbers at all.
    """
    left, right = [], []
    for i, name in enumerate(names):
        m = _TRAILING_DIGITS.search(str(name))
        if m is None:
            continue
        if int(m.group(1)) % 2 == 1:
            left.append(i)
        else:
            right.append(i)
    if not left or not right:
        half = len(names) // 2
        left = list(range(half))
        right = list(range(half, len(names)))
    return left, right


def _channel_names(n_channels: int) -> tuple[str, ...]:
    if n_channels == len(DEFAULT_MOTOR_CHANNELS):
        return DEFAULT_MOTOR_CHANNELS
    return tuple(f"SYN{i + 1}" for i in range(n_channels))


def _label_sequence(n_epochs: int, rng: np.random.Generator) -> np.ndarray:
    """Balanced labels over the three classes, order shuffled."""
    per = n_epochs // 3
    extra = n_epochs % 3
    counts = [per + (1 if i < extra else 0) for i in range(3)]
    labels = np.repeat(np.arange(3), counts)
    rng.shuffle(labels)
    return labels


def generate_subject(spec: SyntheticSpec, subject_index: int) -> SubjectDataset:
    """Deterministically generate one subject (seed = spec.seed + index)."""
    rng = np.random.default_rng(spec.seed + subject_index)
    names = _channel_names(spec.n_channels)
    left, right = hemisphere_indices(names)
    t = np.arange(spec.n_samples) / spec.sample_rate_hz
    labels = _label_sequence(spec.n_epochs_per_subject, rng)
    epochs = []
    for label in labels:
        data = rng.normal(0.0, spec.noise_std,
                          (spec.n_channels, spec.n_samples))
        if label == ClassLabel.LEFT:
            target = right          # contralateral convention
        elif label == ClassLabel.RIGHT:
            target = left
        else:
            target = []
        for ch in target:
            phases = rng.uniform(0.0, 2.0 * np.pi, 2)
            data[ch] += spec.lateralization_strength * (
                np.sin(2.0 * np.pi * 10.0 * t + phases[0])
                + 0.5 * np.sin(2.0 * np.pi * 22.0 * t + phases[1]))
        epochs.append(Epoch(subject_index + 1, ClassLabel(int(label)), data,
                            spec.sample_rate_hz, names))
    return SubjectDataset(subject_index + 1, tuple(epochs),
                          Provenance.SYNTHETIC)


def generate_synthetic(spec: SyntheticSpec) -> list[SubjectDataset]:
    return [generate_subject(spec, i) for i in range(spec.n_subjects)]
