"""Statistical outlier rejection and common average referencing.

Stage order for the full chain is: channel selection, outlier rejection,
bandpass filtering, CAR. Outliers are judged on raw (unfiltered) epoch means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import BiquadCascade, apply_filter
from .model import Epoch, PipelineError, SubjectDataset


class TooFewEpochs(PipelineError):
    pass


class SingleChannel(PipelineError):
    pass


@dataclass(frozen=True)
class OutlierReport:
    """Outcome of the 3-sigma rule on per-epoch means.

    ``epoch_means`` are the statistics the decision was made on; ``mean`` and
    ``std`` are computed once over all of them (single pass, no re-estimation
    after removal).
    """

    epoch_means: tuple[float, ...]
    mean: float
    std: float
    kept: tuple[int, ...]
    removed: tuple[int, ...]

    @property
    def lower(self) -> float:
        return self.mean - 3.0 * self.std

    @property
    def upper(self) -> float:
        return self.mean + 3.0 * self.std


def reject_outliers(dataset: SubjectDataset,
                    mode: str = "epoch") -> tuple[SubjectDataset, OutlierReport]:
    """Drop epochs whose mean amplitude leaves the 3-sigma band.

    mode "epoch" scores each epoch by one scalar, the mean over all channels
    and samples. mode "channel" scores each epoch by its per-channel means
    and removes the epoch if any channel's mean is outside that channel's
    band. Bounds are inclusive, so a degenerate std of 0 keeps everything.
    """
    n = len(dataset.epochs)
    if n < 2:
        raise TooFewEpochs(f"need at least 2 epochs, got {n}")
    if mode not in ("epoch", "channel"):
        raise ValueError(f"unknown outlier mode {mode!r}")

    if mode == "epoch":
        means = np.array([float(np.mean(e.data)) for e in dataset.epochs])
        mu = float(np.mean(means))
        sigma = float(np.std(means))
        inside = np.abs(means - mu) <= 3.0 * sigma
        report_means = means
    else:
        # [epochs x channels] per-channel means, banded per channel
        per_ch = np.array([np.mean(e.data, axis=1) for e in dataset.epochs])
        mu_ch = per_ch.mean(axis=0)
        sigma_ch = per_ch.std(axis=0)
        inside = (np.abs(per_ch - mu_ch) <= 3.0 * sigma_ch).all(axis=1)
        report_means = per_ch.mean(axis=1)
        mu = float(np.mean(report_means))
        sigma = float(np.std(report_means))

    kept = tuple(int(i) for i in np.flatnonzero(inside))
    removed = tuple(int(i) for i in np.flatnonzero(~inside))
    report = OutlierReport(tuple(float(m) for m in report_means),
                           mu, sigma, kept, removed)
    survivors = [dataset.epochs[i] for i in kept]
    return dataset.with_epochs(survivors), report


def apply_car(epoch: Epoch) -> Epoch:
    """Subtract the instantaneous mean across channels from every channel."""
    if epoch.n_channels < 2:
        raise SingleChannel("CAR needs at least 2 channels")
    return epoch.with_data(epoch.data - epoch.data.mean(axis=0, keepdims=True))


def preprocess_dataset(dataset: SubjectDataset, cascade: BiquadCascade,
                       reject: bool = True,
                       outlier_mode: str = "epoch",
                       ) -> tuple[SubjectDataset, OutlierReport | None]:
    """Outlier rejection, then bandpass, then CAR, labels untouched."""
    report = None
    if reject:
        dataset, report = reject_outliers(dataset, mode=outlier_mode)
    epochs = [apply_car(apply_filter(cascade, e)) for e in dataset.epochs]
    return dataset.with_epochs(epochs), report
