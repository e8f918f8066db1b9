"""Per-channel energy and instantaneous spectral entropy features.

Each epoch becomes one fixed-length vector laid out as
[energy(ch 0..N-1), mean ISE(ch 0..N-1), std ISE(ch 0..N-1)], so a
10-channel epoch yields 30 features. Entropy is Shannon entropy in bits
(base-2 log) of the normalized one-sided power spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ClassLabel, Epoch, PipelineError

DEFAULT_WINDOW = 256
DEFAULT_HOP = 128


class EmptySignal(PipelineError):
    pass


class AllZeroSpectrum(PipelineError):
    pass


class ZeroPowerFrame(PipelineError):
    pass


class WindowTooLong(PipelineError):
    pass


@dataclass(frozen=True)
class Spectrogram:
    """One-sided power per frame: power[t, f], frames x (window//2 + 1) bins."""

    power: np.ndarray
    times_s: np.ndarray
    freqs_hz: np.ndarray
    window: int
    hop: int

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]

    @property
    def n_bins(self) -> int:
        return self.power.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: ClassLabel
    subject_id: int

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise PipelineError("non-finite feature values")


def energy(signal: np.ndarray) -> float:
    """Sum of squared samples."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("energy of an empty signal is undefined")
    return float(np.sum(x * x))


def power_spectrum(signal: np.ndarray) -> np.ndarray:
    """One-sided squared-magnitude DFT, |X(k)|^2 for k = 0 .. len//2.

    Interior bins are not doubled; to recover the time-domain energy sum,
    double every bin except DC (and Nyquist for even lengths) and divide by
    the signal length.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("spectrum of an empty signal is undefined")
    spec = np.abs(np.fft.rfft(x))
    return spec * spec


def spectral_entropy(spectrum: np.ndarray) -> float:
    """Shannon entropy in bits of the spectrum normalized to a distribution.

    Zero bins contribute nothing (0 * log 0 := 0). Result lies in
    [0, log2(M)] for M bins.
    """
    s = np.asarray(spectrum, dtype=np.float64)
    total = s.sum()
    if total <= 0.0:
        raise AllZeroSpectrum("spectrum has no power to normalize")
    p = s / total
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log2(nz)))


def spectrogram(signal: np.ndarray, window: int = DEFAULT_WINDOW,
                hop: int = DEFAULT_HOP,
                sample_rate_hz: float = 512.0) -> Spectrogram:
    """Hamming-windowed one-sided power frames.

    Frame t covers samples [t*hop, t*hop + window); frame count is
    floor((len - window)/hop) + 1 and times are frame centers.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot frame an empty signal")
    if window > x.size:
        raise WindowTooLong(f"window {window} exceeds signal length {x.size}")
    if hop < 1:
        raise ValueError(f"hop must be >= 1, got {hop}")

    n_frames = (x.size - window) // hop + 1
    taper = np.hamming(window)
    starts = np.arange(n_frames) * hop
    frames = np.stack([x[s:s + window] * taper for s in starts])
    spec = np.abs(np.fft.rfft(frames, axis=1))
    power = spec * spec
    times = (starts + window / 2.0) / sample_rate_hz
    freqs = np.fft.rfftfreq(window, d=1.0 / sample_rate_hz)
    return Spectrogram(power, times, freqs, window, hop)


def instantaneous_spectral_entropy(spec: Spectrogram) -> np.ndarray:
    """Per-frame spectral entropy H(t), each frame normalized on its own."""
    totals = spec.power.sum(axis=1)
    bad = np.flatnonzero(totals <= 0.0)
    if bad.size:
        raise ZeroPowerFrame(f"frame {int(bad[0])} has no power")
    p = spec.power / totals[:, None]
    terms = np.where(p > 0.0, p * np.log2(p, where=p > 0.0), 0.0)
    return -terms.sum(axis=1)


def extract_features(epoch: Epoch, window: int = DEFAULT_WINDOW,
                     hop: int = DEFAULT_HOP) -> FeatureVector:
    """Assemble the per-epoch feature vector from a preprocessed epoch.

    A channel that is identically zero has no spectral distribution, so
    AllZeroSpectrum is raised rather than producing NaN features.
    """
    n = epoch.n_channels
    energies = np.empty(n)
    ise_mean = np.empty(n)
    ise_std = np.empty(n)
    for ch in range(n):
        x = epoch.data[ch]
        energies[ch] = energy(x)
        if not np.any(x):
            raise AllZeroSpectrum(
                f"channel {epoch.channel_names[ch]} is identically zero")
        h = instantaneous_spectral_entropy(
            spectrogram(x, window, hop, epoch.sample_rate_hz))
        ise_mean[ch] = h.mean()
        ise_std[ch] = h.std()
    values = np.concatenate([energies, ise_mean, ise_std])
    return FeatureVector(values, epoch.label, epoch.subject_id)


def extract_dataset(dataset, window: int = DEFAULT_WINDOW,
                    hop: int = DEFAULT_HOP) -> list[FeatureVector]:
    return [extract_features(e, window, hop) for e in dataset.epochs]


def zscore_train_test(train: list[FeatureVector],
                      test: list[FeatureVector],
                      ) -> tuple[list[FeatureVector], list[FeatureVector]]:
    """Standardize both sets using train-set statistics. Off by default in
    the pipeline; provided behind a configuration flag only.
    """
    tr = np.stack([f.values for f in train])
    mu = tr.mean(axis=0)
    sd = tr.std(axis=0)
    sd[sd == 0.0] = 1.0

    def _apply(fs):
        return [FeatureVector((f.values - mu) / sd, f.label, f.subject_id)
                for f in fs]

    return _apply(train), _apply(test)


def write_features_csv(path, vectors: list[FeatureVector]) -> None:
    """CSV export with header subject,label,f0..f(3N-1)."""
    if not vectors:
        raise EmptySignal("no feature vectors to write")
    width = vectors[0].values.size
    lines = ["subject,label," + ",".join(f"f{i}" for i in range(width))]
    for v in vectors:
        cells = ",".join(repr(float(x)) for x in v.values)
        lines.append(f"{v.subject_id},{int(v.label)},{cells}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
