"""Shared constructors for tests: small epochs and datasets built by hand."""

import numpy as np

from smrpipe import ClassLabel, Epoch, SubjectDataset
from smrpipe.model import Provenance


def names_for(n_channels):
    return tuple(f"CH{i + 1}" for i in range(n_channels))


def make_epoch(data, label=ClassLabel.LEFT, subject_id=1, rate=512.0,
               names=None):
    data = np.asarray(data, dtype=np.float64)
    if names is None:
        names = names_for(data.shape[0])
    return Epoch(subject_id, label, data, rate, names)


def make_dataset(matrices, labels, subject_id=1, rate=512.0, names=None,
                 provenance=Provenance.SYNTHETIC):
    epochs = tuple(
        make_epoch(m, ClassLabel(int(c)), subject_id, rate, names)
        for m, c in zip(matrices, labels))
    return SubjectDataset(subject_id, epochs, provenance)


def random_dataset(rng, n_epochs=12, n_channels=3, n_samples=64,
                   subject_id=1, rate=512.0):
    """Noise dataset with balanced labels, for plumbing tests."""
    labels = np.arange(n_epochs) % 3
    mats = rng.standard_normal((n_epochs, n_channels, n_samples))
    return make_dataset(mats, labels, subject_id, rate)


def knn_oracle(points, labels, k, metric, x):
    """Reference nearest-neighbor vote, written without lexsort/bincount.

    Sorts by (distance, index), tallies votes in a dict, and breaks vote
    ties by the smaller summed distance, then the lowest class code. The
    distance expressions match the library's float for float so agreement
    is expected to be exact.
    """
    points = np.asarray(points, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if metric == "euclidean":
        diff = points - x
        dists = np.sqrt(np.sum(diff * diff, axis=1))
    else:
        sims = (points @ x) / (np.linalg.norm(points, axis=1)
                               * np.linalg.norm(x))
        dists = 1.0 - sims
    order = sorted(range(len(dists)), key=lambda i: (dists[i], i))[:k]
    votes = {}
    for i in order:
        votes.setdefault(int(labels[i]), []).append(i)
    top = max(len(v) for v in votes.values())
    tied = sorted(c for c, v in votes.items() if len(v) == top)
    if len(tied) == 1:
        return tied[0]
    sums = {c: np.sum(dists[votes[c]]) for c in tied}
    best = min(sums.values())
    return min(c for c in tied if sums[c] == best)


def qda_posterior_oracle(model, x):
    """Reference posterior via dense inverse and determinant.

    Evaluates each class density directly from the model's regularized
    covariances, so it checks the log-space Cholesky path, not the fit.
    """
    x = np.asarray(x, dtype=np.float64)
    d = model.dim
    dens = np.empty(len(model.classes))
    for i in range(len(model.classes)):
        cov = model.covariances[i]
        diff = x - model.means[i]
        maha = diff @ np.linalg.inv(cov) @ diff
        norm = (2.0 * np.pi) ** (-d / 2.0) / np.sqrt(np.linalg.det(cov))
        dens[i] = model.priors[i] * norm * np.exp(-0.5 * maha)
    return dens / dens.sum()
