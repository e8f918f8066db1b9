"""Within-subject 80/20 evaluation runs and metric computation.

Metrics follow the one-vs-rest convention: per class, the confusion matrix
collapses to TP/TN/FP/FN and accuracy, recall, specificity and F1 come out
of those counts. Macro values average the per-class numbers; accuracy is
reported globally as trace over total. A 0/0 ratio evaluates to 0, the
class is flagged, and the flagged value is left out of the macro mean.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classifiers import NnConfig, fit_model, predict_label, serialize_model
from .features import extract_dataset, zscore_train_test
from .filters import FilterSpec, design_bandpass
from .io import ChannelSelection, select_channels
from .model import (N_CLASSES, PipelineError, SubjectDataset,
                    stratified_split)
from .preprocess import preprocess_dataset

DEFAULT_TRAIN_FRACTION = 0.8


class LengthMismatch(PipelineError):
    pass


class Empty(PipelineError):
    pass


class AllSubjectsFailed(PipelineError):
    pass


class SubjectRunError(PipelineError):
    """A stage failure annotated with the subject and stage it came from."""

    def __init__(self, subject_id: int, stage: str, message: str):
        super().__init__(f"subject {subject_id}, stage {stage}: {message}")
        self.subject_id = subject_id
        self.stage = stage


def confusion(true_labels, predicted_labels,
              n_classes: int = N_CLASSES) -> np.ndarray:
    """Count matrix with rows = true class, columns = predicted class."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.size != p.size:
        raise LengthMismatch(f"{t.size} true vs {p.size} predicted labels")
    if t.size == 0:
        raise Empty("cannot build a confusion matrix from zero epochs")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    recall: float
    specificity: float
    f1: float
    per_class_recall: tuple[float, ...]
    per_class_specificity: tuple[float, ...]
    per_class_f1: tuple[float, ...]
    flagged: tuple[int, ...]

    def __post_init__(self):
        for v in (self.accuracy, self.recall, self.specificity, self.f1):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {v} outside [0, 1]")


def _safe_ratio(num: float, den: float) -> tuple[float, bool]:
    if den == 0.0:
        return 0.0, False
    return num / den, True


def metrics_from_confusion(cm: np.ndarray) -> MetricSet:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise Empty("confusion matrix has no counts")
    k = cm.shape[0]

    recalls, speci, f1s = [], [], []
    defined = {"recall": [], "specificity": [], "f1": []}
    flagged = set()
    for i in range(k):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = total - tp - fn - fp
        r, r_ok = _safe_ratio(tp, tp + fn)
        s, s_ok = _safe_ratio(tn, tn + fp)
        f, f_ok = _safe_ratio(tp, tp + 0.5 * (fp + fn))
        recalls.append(r)
        speci.append(s)
        f1s.append(f)
        defined["recall"].append(r_ok)
        defined["specificity"].append(s_ok)
        defined["f1"].append(f_ok)
        if not (r_ok and s_ok and f_ok):
            flagged.add(i)

    def _macro(values, mask):
        kept = [v for v, ok in zip(values, mask) if ok]
        return float(np.mean(kept)) if kept else 0.0

    return MetricSet(
        accuracy=float(np.trace(cm) / total),
        recall=_macro(recalls, defined["recall"]),
        specificity=_macro(speci, defined["specificity"]),
        f1=_macro(f1s, defined["f1"]),
        per_class_recall=tuple(recalls),
        per_class_specificity=tuple(speci),
        per_class_f1=tuple(f1s),
        flagged=tuple(sorted(flagged)),
    )


# ------------------------------------------------------------ pipeline runs

@dataclass(frozen=True)
class PipelineConfig:
    """Everything a per-subject run depends on, fixed up front."""

    model_kind: str = "fine-knn"
    channels: tuple[str, ...] | None = None   # None keeps the file's channels
    reject_outliers: bool = True
    outlier_mode: str = "epoch"
    low_hz: float = 8.0
    high_hz: float = 30.0
    filter_order: int = 30
    order_convention: str = "prototype"
    window: int = 256
    hop: int = 128
    zscore: bool = False
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    seed: int = 0
    qda_regularization: float = 1e-6
    fine_k: int = 1
    cosine_k: int = 10
    nn_hidden: int = 10
    nn_learning_rate: float = 0.05
    nn_max_epochs: int = 200
    nn_batch_size: int = 16
    validation_folds: int = 0   # 0 skips validation accuracy


@dataclass(frozen=True)
class SubjectResult:
    subject_id: int
    model_kind: str
    n_train: int
    n_test: int
    n_outliers_removed: int
    confusion: np.ndarray
    metrics: MetricSet
    fit_seconds: float
    model_bytes: int
    validation_accuracy: float | None = None
    model_blob: bytes = field(default=b"", repr=False)


def _stage(subject_id: int, name: str, fn):
    try:
        return fn()
    except PipelineError as e:
        raise SubjectRunError(subject_id, name, str(e)) from e


def _nn_config(config: PipelineConfig) -> NnConfig:
    return NnConfig(hidden=config.nn_hidden,
                    learning_rate=config.nn_learning_rate,
                    max_epochs=config.nn_max_epochs,
                    batch_size=config.nn_batch_size,
                    seed=config.seed)


def _fit(config: PipelineConfig, features):
    return fit_model(config.model_kind, features,
                     seed=config.seed,
                     qda_regularization=config.qda_regularization,
                     fine_k=config.fine_k,
                     cosine_k=config.cosine_k,
                     nn_config=_nn_config(config))


def _cross_val_accuracy(features, config: PipelineConfig) -> float:
    """Deterministic stratified k-fold accuracy on the training portion."""
    folds = config.validation_folds
    rng = np.random.default_rng((config.seed, 0xF01D))
    assignment = np.empty(len(features), dtype=np.int64)
    labels = np.array([int(f.label) for f in features])
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        assignment[idx] = np.arange(idx.size) % folds
    correct = 0
    for fold in range(folds):
        train = [f for f, a in zip(features, assignment) if a != fold]
        held = [f for f, a in zip(features, assignment) if a == fold]
        if not held:
            continue
        model = _fit(config, train)
        correct += sum(int(predict_label(model, f.values) == int(f.label))
                       for f in held)
    return correct / len(features)


def run_subject(dataset: SubjectDataset, config: PipelineConfig
                ) -> SubjectResult:
    """Preprocess, featurize, split, fit, and score one subject."""
    sid = dataset.subject_id

    if config.channels is not None:
        dataset = _stage(sid, "channel-selection", lambda: select_channels(
            dataset, ChannelSelection(tuple(config.channels))))

    cascade = _stage(sid, "filter-design", lambda: design_bandpass(FilterSpec(
        low_hz=config.low_hz, high_hz=config.high_hz,
        order=config.filter_order, sample_rate_hz=dataset.sample_rate_hz,
        order_convention=config.order_convention)))

    n_before = dataset.n_epochs
    dataset, _report = _stage(sid, "preprocess", lambda: preprocess_dataset(
        dataset, cascade, reject=config.reject_outliers,
        outlier_mode=config.outlier_mode))
    n_removed = n_before - dataset.n_epochs

    features = _stage(sid, "features", lambda: extract_dataset(
        dataset, config.window, config.hop))

    split = _stage(sid, "split", lambda: stratified_split(
        dataset, config.train_fraction, config.seed))
    train = [features[i] for i in split.train]
    test = [features[i] for i in split.test]
    if config.zscore:
        train, test = zscore_train_test(train, test)

    t0 = time.perf_counter()
    model = _stage(sid, "fit", lambda: _fit(config, train))
    fit_seconds = time.perf_counter() - t0
    blob = serialize_model(model)

    preds = _stage(sid, "predict", lambda: [
        predict_label(model, f.values) for f in test])
    cm = confusion([int(f.label) for f in test], preds)
    metrics = metrics_from_confusion(cm)

    validation = None
    if config.validation_folds > 1:
        validation = _stage(sid, "validation",
                            lambda: _cross_val_accuracy(train, config))

    return SubjectResult(sid, config.model_kind, len(train), len(test),
                         n_removed, cm, metrics, fit_seconds, len(blob),
                         validation, blob)


# ------------------------------------------------------------ corpus sweeps

@dataclass(frozen=True)
class CorpusFailure:
    name: str
    stage: str
    message: str


@dataclass(frozen=True)
class CorpusSummary:
    n_subjects: int
    accuracy_mean: float
    accuracy_std: float
    recall_mean: float
    recall_std: float
    specificity_mean: float
    specificity_std: float
    f1_mean: float
    f1_std: float


@dataclass(frozen=True)
class CorpusResult:
    results: tuple[SubjectResult, ...]
    failures: tuple[CorpusFailure, ...]
    summary: CorpusSummary


def summarize(results) -> CorpusSummary:
    def _stats(pick):
        vals = np.array([pick(r.metrics) for r in results])
        return float(vals.mean()), float(vals.std())

    acc = _stats(lambda m: m.accuracy)
    rec = _stats(lambda m: m.recall)
    spe = _stats(lambda m: m.specificity)
    f1 = _stats(lambda m: m.f1)
    return CorpusSummary(len(results), acc[0], acc[1], rec[0], rec[1],
                         spe[0], spe[1], f1[0], f1[1])


def _normalize_sources(sources):
    jobs = []
    for i, src in enumerate(sources):
        if isinstance(src, SubjectDataset):
            jobs.append((f"s{src.subject_id:02d}", (lambda d=src: d)))
        elif isinstance(src, tuple) and len(src) == 2 and callable(src[1]):
            jobs.append((str(src[0]), src[1]))
        elif callable(src):
            jobs.append((f"source-{i}", src))
        else:
            raise TypeError(f"unsupported corpus source {type(src)!r}")
    return jobs


def run_corpus(sources, config: PipelineConfig, jobs: int = 1) -> CorpusResult:
    """Run every subject, isolating per-subject failures.

    sources may hold SubjectDataset objects, zero-argument loader callables
    (so files can stream in one at a time), or (name, loader) pairs for
    failure labeling. Results keep the input order regardless of jobs.
    """
    tasks = _normalize_sources(sources)
    if not tasks:
        raise Empty("no corpus sources given")

    def _one(task):
        name, load = task
        try:
            dataset = load()
            return run_subject(dataset, config), None
        except (PipelineError, OSError, ValueError) as e:
            stage = getattr(e, "stage", "load")
            return None, CorpusFailure(name, stage, str(e))

    if jobs <= 1:
        outcomes = [_one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_one, tasks))

    results = tuple(r for r, _ in outcomes if r is not None)
    failures = tuple(f for _, f in outcomes if f is not None)
    if not results:
        raise AllSubjectsFailed(
            f"all {len(tasks)} subjects failed; first: {failures[0].message}")
    return CorpusResult(results, failures, summarize(results))


# ------------------------------------------------------------ baselines

@dataclass(frozen=True)
class BaselineRow:
    label: str
    accuracy: float
    recall: float | None = None
    specificity: float | None = None
    f1: float | None = None


@dataclass(frozen=True)
class BaselineTable:
    rows: tuple[BaselineRow, ...]


# published accuracies on the same public 52-subject recordings
PUBLISHED_BASELINES = BaselineTable((
    BaselineRow("Cho et al.", 0.6746),
    BaselineRow("Kumar et al.", 0.6724),
    BaselineRow("Sadiq et al. (2021)", 0.8502),
    BaselineRow("Sadiq et al. (2022)", 0.8769, 0.8762, 0.8775, 0.8770),
    BaselineRow("Reference pipeline (reported)", 0.995, 0.9986, 0.9983,
                0.9984),
))
