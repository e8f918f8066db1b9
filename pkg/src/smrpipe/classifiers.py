"""QDA, k-nearest-neighbor (Euclidean and cosine), and a small softmax
network behind one fit/predict contract.

All tie-breaks are deterministic and documented: equal posteriors or vote
counts resolve to the lowest class code, equal distances to the lowest
training index. Models serialize to a versioned binary blob (magic "MDL1")
and a round-tripped model predicts identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .io import BadMagic, TruncatedPayload, _Cursor
from .model import EmptyDataset, N_CLASSES, PipelineError
from .features import FeatureVector

MODEL_MAGIC = b"MDL1"
MODEL_VERSION = 1

KIND_QDA = "qda"
KIND_FINE_KNN = "fine-knn"
KIND_COS_KNN = "cos-knn"
KIND_WIDE_NN = "wide-nn"
MODEL_KINDS = (KIND_QDA, KIND_FINE_KNN, KIND_COS_KNN, KIND_WIDE_NN)

_KIND_CODES = {KIND_QDA: 0, KIND_FINE_KNN: 1, KIND_COS_KNN: 2, KIND_WIDE_NN: 3}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class DimensionMismatch(PipelineError):
    pass


class ClassAbsent(PipelineError):
    pass


class SingularCovariance(PipelineError):
    pass


class KTooLarge(PipelineError):
    pass


class ZeroNormVector(PipelineError):
    pass


class ZeroNormQuery(PipelineError):
    pass


class DivergenceDetected(PipelineError):
    pass


class UnknownModelKind(PipelineError):
    pass


def _stack_features(features: list[FeatureVector]) -> tuple[np.ndarray, np.ndarray]:
    if not features:
        raise EmptyDataset("no feature vectors to fit on")
    x = np.stack([np.asarray(f.values, dtype=np.float64) for f in features])
    y = np.array([int(f.label) for f in features], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------- QDA

@dataclass(frozen=True)
class QdaModel:
    classes: tuple[int, ...]          # ascending class codes
    priors: np.ndarray                # (K,)
    means: np.ndarray                 # (K, d)
    covariances: np.ndarray           # (K, d, d), regularized
    cost: np.ndarray                  # (K, K), cost[true, predicted]
    # cached factorization, derived from covariances
    choleskys: np.ndarray = field(repr=False, default=None)
    log_dets: np.ndarray = field(repr=False, default=None)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def _factorize(covariances: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    chols = np.empty_like(covariances)
    log_dets = np.empty(covariances.shape[0])
    for i, cov in enumerate(covariances):
        try:
            chols[i] = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise SingularCovariance(
                f"class covariance {i} is not positive definite") from None
        log_dets[i] = 2.0 * np.sum(np.log(np.diag(chols[i])))
    return chols, log_dets


def qda_fit(features: list[FeatureVector], regularization: float = 1e-6,
            cost: np.ndarray | None = None) -> QdaModel:
    """Per-class Gaussian fit: empirical priors, class means, maximum
    likelihood covariances plus a trace-scaled ridge.

    regularization 0 disables the ridge; a rank-deficient class covariance
    then raises SingularCovariance.
    """
    x, y = _stack_features(features)
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise ClassAbsent(f"need at least 2 classes, got {classes}")
    n, d = x.shape

    priors = np.empty(len(classes))
    means = np.empty((len(classes), d))
    covs = np.empty((len(classes), d, d))
    for i, c in enumerate(classes):
        xc = x[y == c]
        priors[i] = xc.shape[0] / n
        means[i] = xc.mean(axis=0)
        centered = xc - means[i]
        cov = centered.T @ centered / xc.shape[0]
        if regularization > 0.0:
            scale = np.trace(cov) / d
            if scale <= 0.0:
                scale = 1.0  # all-zero covariance still gets a usable ridge
            cov = cov + regularization * scale * np.eye(d)
        covs[i] = cov

    if cost is None:
        cost = 1.0 - np.eye(len(classes))
    cost = np.asarray(cost, dtype=np.float64)
    if cost.shape != (len(classes), len(classes)):
        raise DimensionMismatch(
            f"cost matrix must be {len(classes)}x{len(classes)}")

    chols, log_dets = _factorize(covs)
    return QdaModel(classes, priors, means, covs, cost, chols, log_dets)


def qda_predict(model: QdaModel, x: np.ndarray) -> tuple[int, np.ndarray]:
    """Posterior over fitted classes and the expected-cost-minimizing label.

    Densities are evaluated in log space through the cached Cholesky
    factors; with the default 0/1 cost the decision is argmax posterior.
    Ties resolve to the lowest class code.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatch(f"expected dim {model.dim}, got {x.shape}")

    k = len(model.classes)
    log_joint = np.empty(k)
    for i in range(k):
        diff = x - model.means[i]
        # forward substitution through the cholesky factor: L w = diff
        w = solve_triangular(model.choleskys[i], diff, lower=True)
        maha = float(w @ w)
        log_joint[i] = (np.log(model.priors[i])
                        - 0.5 * (model.dim * np.log(2.0 * np.pi)
                                 + model.log_dets[i] + maha))
    shifted = log_joint - log_joint.max()
    post = np.exp(shifted)
    post /= post.sum()
    expected_cost = post @ model.cost
    label = model.classes[int(np.argmin(expected_cost))]
    return label, post


# ---------------------------------------------------------------- KNN

@dataclass(frozen=True)
class KnnModel:
    points: np.ndarray                # (n, d)
    labels: np.ndarray                # (n,)
    k: int
    metric: str                       # "euclidean" | "cosine"


def knn_fit(features: list[FeatureVector], k: int, metric: str) -> KnnModel:
    x, y = _stack_features(features)
    if metric not in ("euclidean", "cosine"):
        raise ValueError(f"unknown metric {metric!r}")
    if not 1 <= k <= x.shape[0]:
        raise KTooLarge(f"k={k} with only {x.shape[0]} training points")
    if metric == "cosine":
        norms = np.linalg.norm(x, axis=1)
        if np.any(norms == 0.0):
            raise ZeroNormVector(
                "cosine metric is undefined for zero training vectors")
    return KnnModel(x, y, k, metric)


def _knn_distances(model: KnnModel, x: np.ndarray) -> np.ndarray:
    if model.metric == "euclidean":
        diff = model.points - x
        return np.sqrt(np.sum(diff * diff, axis=1))
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise ZeroNormQuery("cosine distance undefined for a zero query")
    sims = (model.points @ x) / (np.linalg.norm(model.points, axis=1) * norm)
    return 1.0 - sims


def knn_predict(model: KnnModel, x: np.ndarray) -> int:
    """Majority vote of the k nearest training points.

    Distance ties resolve to the lower training index; vote ties to the
    class with the smaller summed distance, then the lowest class code.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.points.shape[1],):
        raise DimensionMismatch(
            f"expected dim {model.points.shape[1]}, got {x.shape}")
    dists = _knn_distances(model, x)
    order = np.lexsort((np.arange(dists.size), dists))[:model.k]
    votes = model.labels[order]
    counts = np.bincount(votes, minlength=N_CLASSES)
    top = counts.max()
    tied = np.flatnonzero(counts == top)
    if tied.size == 1:
        return int(tied[0])
    sums = np.array([dists[order[votes == c]].sum() for c in tied])
    best = tied[sums == sums.min()]
    return int(best.min())


def knn_scores(model: KnnModel, x: np.ndarray) -> np.ndarray:
    """Vote shares among the k nearest neighbors, indexed by class code."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.points.shape[1],):
        raise DimensionMismatch(
            f"expected dim {model.points.shape[1]}, got {x.shape}")
    dists = _knn_distances(model, x)
    order = np.lexsort((np.arange(dists.size), dists))[:model.k]
    counts = np.bincount(model.labels[order], minlength=N_CLASSES)
    return counts / model.k


# ---------------------------------------------------------------- wide NN

@dataclass(frozen=True)
class NnConfig:
    """Training hyperparameters. ``standardize`` makes input scaling part
    of the fitted model (means and scales learned from the training set and
    stored for predict time); features themselves are left untouched."""

    hidden: int = 10
    learning_rate: float = 0.05
    max_epochs: int = 200
    batch_size: int = 16
    seed: int = 0
    min_learning_rate: float = 1e-12
    standardize: bool = True


@dataclass(frozen=True)
class WideNnModel:
    classes: tuple[int, ...]
    w1: np.ndarray                    # (d, h)
    b1: np.ndarray                    # (h,)
    w2: np.ndarray                    # (h, K)
    b2: np.ndarray                    # (K,)
    config: NnConfig
    loss_history: tuple[float, ...] = ()
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.input_mean is None:
            return x
        return (x - self.input_mean) / self.input_scale


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(w1, b1, w2, b2, x: np.ndarray) -> np.ndarray:
    hidden = np.maximum(x @ w1 + b1, 0.0)
    return hidden @ w2 + b2


def _mean_cross_entropy(w1, b1, w2, b2, x, targets) -> float:
    logits = _forward(w1, b1, w2, b2, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted[np.arange(x.shape[0]), targets] - log_norm
    return float(-log_probs.mean())


def nn_gradients(w1, b1, w2, b2, x: np.ndarray, targets: np.ndarray):
    """Backpropagated gradients of mean cross-entropy over the batch."""
    b = x.shape[0]
    z1 = x @ w1 + b1
    hidden = np.maximum(z1, 0.0)
    probs = _softmax(hidden @ w2 + b2)
    dlogits = probs
    dlogits[np.arange(b), targets] -= 1.0
    dlogits /= b
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ w2.T) * (z1 > 0.0)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return gw1, gb1, gw2, gb2


def nn_fit(features: list[FeatureVector], config: NnConfig = NnConfig()
           ) -> WideNnModel:
    """Mini-batch gradient descent on cross-entropy, deterministic per seed.

    After each epoch the full-set loss is evaluated; an epoch that raised it
    is reverted and retried with a halved learning rate, so the accepted
    loss history is non-increasing. Training stops when the rate underflows
    config.min_learning_rate or max_epochs is reached.
    """
    x, y = _stack_features(features)
    classes = tuple(int(c) for c in np.unique(y))
    if len(classes) < 2:
        raise ClassAbsent(f"need at least 2 classes, got {classes}")
    n, d = x.shape
    k = len(classes)
    targets = np.searchsorted(np.asarray(classes), y)

    mean = scale = None
    if config.standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale == 0.0] = 1.0
        x = (x - mean) / scale

    rng = np.random.default_rng(config.seed)
    w1 = rng.standard_normal((d, config.hidden)) / np.sqrt(d)
    b1 = np.zeros(config.hidden)
    w2 = rng.standard_normal((config.hidden, k)) / np.sqrt(config.hidden)
    b2 = np.zeros(k)

    loss = _mean_cross_entropy(w1, b1, w2, b2, x, targets)
    if not np.isfinite(loss):
        raise DivergenceDetected(f"initial loss is {loss}")
    history = [loss]
    lr = config.learning_rate

    for epoch in range(config.max_epochs):
        accepted = False
        for attempt in range(128):
            if lr < config.min_learning_rate:
                break
            order = np.random.default_rng(
                (config.seed, epoch, attempt)).permutation(n)
            cw1, cb1, cw2, cb2 = w1.copy(), b1.copy(), w2.copy(), b2.copy()
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                gw1, gb1, gw2, gb2 = nn_gradients(
                    cw1, cb1, cw2, cb2, x[idx], targets[idx])
                cw1 -= lr * gw1
                cb1 -= lr * gb1
                cw2 -= lr * gw2
                cb2 -= lr * gb2
            new_loss = _mean_cross_entropy(cw1, cb1, cw2, cb2, x, targets)
            if np.isfinite(new_loss) and new_loss <= loss:
                w1, b1, w2, b2 = cw1, cb1, cw2, cb2
                loss = new_loss
                accepted = True
                break
            lr *= 0.5  # revert by simply not adopting the candidate
        if not accepted:
            break
        history.append(loss)

    return WideNnModel(classes, w1, b1, w2, b2, config, tuple(history),
                       mean, scale)


def nn_predict(model: WideNnModel, x: np.ndarray) -> tuple[int, np.ndarray]:
    """Softmax scores (max-subtracted, overflow safe) and the argmax label;
    score ties resolve to the lowest class code."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise DimensionMismatch(f"expected dim {model.dim}, got {x.shape}")
    scores = _softmax(_forward(model.w1, model.b1, model.w2, model.b2,
                               model.transform(x)))
    return model.classes[int(np.argmax(scores))], scores


# ------------------------------------------------- shared fit/predict

def fit_model(kind: str, features: list[FeatureVector], *,
              seed: int = 0,
              qda_regularization: float = 1e-6,
              fine_k: int = 1,
              cosine_k: int = 10,
              nn_config: NnConfig | None = None):
    """One entry point over the four model kinds."""
    if kind == KIND_QDA:
        return qda_fit(features, regularization=qda_regularization)
    if kind == KIND_FINE_KNN:
        return knn_fit(features, k=fine_k, metric="euclidean")
    if kind == KIND_COS_KNN:
        return knn_fit(features, k=cosine_k, metric="cosine")
    if kind == KIND_WIDE_NN:
        cfg = nn_config if nn_config is not None else NnConfig(seed=seed)
        return nn_fit(features, cfg)
    raise UnknownModelKind(f"unknown model kind {kind!r}")


def model_kind(model) -> str:
    if isinstance(model, QdaModel):
        return KIND_QDA
    if isinstance(model, KnnModel):
        return KIND_FINE_KNN if model.metric == "euclidean" else KIND_COS_KNN
    if isinstance(model, WideNnModel):
        return KIND_WIDE_NN
    raise UnknownModelKind(f"unrecognized model object {type(model)!r}")


def predict_scores(model, x: np.ndarray) -> np.ndarray:
    """Score vector indexed by global class code (absent classes score 0)."""
    out = np.zeros(N_CLASSES)
    if isinstance(model, QdaModel):
        _, post = qda_predict(model, x)
        out[list(model.classes)] = post
    elif isinstance(model, KnnModel):
        out = knn_scores(model, x)
    elif isinstance(model, WideNnModel):
        _, scores = nn_predict(model, x)
        out[list(model.classes)] = scores
    else:
        raise UnknownModelKind(f"unrecognized model object {type(model)!r}")
    return out


def predict_label(model, x: np.ndarray) -> int:
    if isinstance(model, QdaModel):
        return qda_predict(model, x)[0]
    if isinstance(model, KnnModel):
        return knn_predict(model, x)
    if isinstance(model, WideNnModel):
        return nn_predict(model, x)[0]
    raise UnknownModelKind(f"unrecognized model object {type(model)!r}")


# ---------------------------------------------------- serialization

def _pack_array(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    return struct.pack("<I", a.size) + a.tobytes()


def _read_array(cur: _Cursor, shape) -> np.ndarray:
    (size,) = cur.unpack("I")
    expect = int(np.prod(shape)) if shape else size
    if size != expect:
        raise TruncatedPayload(f"array of {size} values, expected {expect}")
    a = np.frombuffer(cur.take(8 * size), dtype="<f8").astype(np.float64)
    return a.reshape(shape)


def serialize_model(model) -> bytes:
    kind = model_kind(model)
    head = MODEL_MAGIC + struct.pack("<HB", MODEL_VERSION, _KIND_CODES[kind])
    parts = [head]
    if isinstance(model, QdaModel):
        k, d = len(model.classes), model.dim
        parts.append(struct.pack("<II", k, d))
        parts.append(bytes(model.classes))
        parts.append(_pack_array(model.priors))
        parts.append(_pack_array(model.means))
        parts.append(_pack_array(model.covariances))
        parts.append(_pack_array(model.cost))
    elif isinstance(model, KnnModel):
        n, d = model.points.shape
        parts.append(struct.pack("<III", n, d, model.k))
        parts.append(model.labels.astype(np.uint8).tobytes())
        parts.append(_pack_array(model.points))
    else:
        d, h = model.w1.shape
        k = model.w2.shape[1]
        scaled = model.input_mean is not None
        parts.append(struct.pack("<IIIIB", d, h, k, model.config.seed, scaled))
        parts.append(bytes(model.classes))
        for a in (model.w1, model.b1, model.w2, model.b2):
            parts.append(_pack_array(a))
        if scaled:
            parts.append(_pack_array(model.input_mean))
            parts.append(_pack_array(model.input_scale))
    return b"".join(parts)


def deserialize_model(blob: bytes):
    cur = _Cursor(blob, "model blob")
    if cur.take(4) != MODEL_MAGIC:
        raise BadMagic("not a model file (magic mismatch)")
    version, code = cur.unpack("HB")
    if version != MODEL_VERSION:
        raise BadMagic(f"unsupported model version {version}")
    if code not in _CODE_KINDS:
        raise BadMagic(f"unknown model kind code {code}")
    kind = _CODE_KINDS[code]

    if kind == KIND_QDA:
        k, d = cur.unpack("II")
        classes = tuple(cur.take(k))
        priors = _read_array(cur, (k,))
        means = _read_array(cur, (k, d))
        covs = _read_array(cur, (k, d, d))
        cost = _read_array(cur, (k, k))
        chols, log_dets = _factorize(covs)
        model = QdaModel(classes, priors, means, covs, cost, chols, log_dets)
    elif kind in (KIND_FINE_KNN, KIND_COS_KNN):
        n, d, k = cur.unpack("III")
        labels = np.frombuffer(cur.take(n), dtype=np.uint8).astype(np.int64)
        points = _read_array(cur, (n, d))
        metric = "euclidean" if kind == KIND_FINE_KNN else "cosine"
        model = KnnModel(points, labels, k, metric)
    else:
        d, h, k, seed, scaled = cur.unpack("IIIIB")
        classes = tuple(cur.take(k))
        w1 = _read_array(cur, (d, h))
        b1 = _read_array(cur, (h,))
        w2 = _read_array(cur, (h, k))
        b2 = _read_array(cur, (k,))
        mean = scale = None
        if scaled:
            mean = _read_array(cur, (d,))
            scale = _read_array(cur, (d,))
        model = WideNnModel(classes, w1, b1, w2, b2,
                            NnConfig(hidden=h, seed=seed,
                                     standardize=bool(scaled)),
                            input_mean=mean, input_scale=scale)
    if cur.remaining():
        raise TruncatedPayload(f"{cur.remaining()} trailing bytes")
    return model


def save_model(model, path) -> int:
    """Write the MDL1 blob; returns its size in bytes."""
    blob = serialize_model(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())


def write_predictions_csv(path, model, features: list[FeatureVector]) -> None:
    """Per-epoch prediction dump: index, true and predicted labels, scores."""
    header = "epoch_index,true_label,predicted_label," + ",".join(
        f"score_{c}" for c in range(N_CLASSES))
    lines = [header]
    for i, f in enumerate(features):
        scores = predict_scores(model, f.values)
        pred = predict_label(model, f.values)
        cells = ",".join(repr(float(s)) for s in scores)
        lines.append(f"{i},{int(f.label)},{pred},{cells}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
