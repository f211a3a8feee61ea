"""Cross-entropy loss, Adam, and the epoch loop with early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DatasetError, NumericError, ParameterError
from .model import ModelSpec, ParamStore, backward, forward, init_params, predict_proba
from .preprocess import AugmentConfig, DatasetStats, augment, compute_stats, zscore
from .rng import Xoshiro256pp, derive_seed

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def _label_indices(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels.argmax(axis=1)
    labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ParameterError(f"labels must lie in [0, {num_classes}), got range "
                             f"[{labels.min()}, {labels.max()}]")
    return labels


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean of -log(max(p_correct, 1e-12)). ``labels`` are indices or one-hot rows."""
    y = _label_indices(labels, probs.shape[1])
    picked = probs[np.arange(len(y)), y]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


def cross_entropy_grad(probs: np.ndarray, labels) -> np.ndarray:
    """Gradient of the mean loss w.r.t. the logits: (probs - onehot) / N."""
    y = _label_indices(labels, probs.shape[1])
    g = probs.copy()
    g[np.arange(len(y)), y] -= 1.0
    return g / len(y)


# -- Adam -------------------------------------------------------------------

@dataclass
class OptimState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.t < 0:
            raise ParameterError("timestep must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError(f"betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if self.lr < 0 or self.eps <= 0:
            raise ParameterError("lr must be >= 0 and eps > 0")

    @classmethod
    def for_params(cls, store: ParamStore, lr: float = 0.001, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "OptimState":
        return cls({k: np.zeros_like(p) for k, p in store.params.items()},
                   {k: np.zeros_like(p) for k, p in store.params.items()}, 0, lr, beta1, beta2, eps)


def adam_step(store: ParamStore, state: OptimState) -> None:
    """One Adam update of every parameter in place, using ``store.grads``."""
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, theta in store.params.items():
        g = store.grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# -- training loop ----------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 40
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    early_stop_patience: int = 8
    min_delta: float = 1e-4
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ParameterError("batch_size and epochs must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.early_stop_patience < 1:
            raise ParameterError("early_stop_patience must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    val_acc: float
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    params: ParamStore
    history: list[EpochRecord]
    state: OptimState
    spec: ModelSpec  # carries the normalization stats fitted on the training split
    train_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    val_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def stratified_split(labels: np.ndarray, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per class, move round(fraction * n) shuffled samples (at least one, never all) to the second part."""
    rng = Xoshiro256pp(seed)
    first, second = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        perm = idx[rng.permutation(len(idx))]
        k = int(round(fraction * len(idx)))
        k = min(max(k, 1), len(idx) - 1) if len(idx) > 1 else 0
        second.extend(perm[:k].tolist())
        first.extend(perm[k:].tolist())
    return np.array(sorted(first), dtype=np.int64), np.array(sorted(second), dtype=np.int64)


def evaluate(spec: ModelSpec, store: ParamStore, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 64) -> tuple[float, float]:
    """(loss, accuracy) on already-normalized images."""
    probs = predict_proba(spec, store, images, batch_size)
    return cross_entropy(probs, labels), float(np.mean(probs.argmax(axis=1) == labels))


def _check_finite(loss: float, where: str) -> None:
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss during {where}")


def train(spec: ModelSpec, config: TrainConfig, images: np.ndarray, labels,
          augment_cfg: AugmentConfig | None = None) -> TrainResult:
    """Fit ``spec`` on ``images`` (N x C x H x W, values in [0, 1]) and integer ``labels``.

    A stratified validation split is carved off with ``config.val_fraction``.
    Normalization statistics come from the remaining training images and are
    stored in the returned spec. Augmentation, when given, is applied to the
    [0, 1] images before normalization, seeded by (epoch, sample).
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise DatasetError("train: empty dataset")
    if len(images) != len(labels):
        raise DatasetError(f"train: {len(images)} images but {len(labels)} labels")
    counts = np.bincount(labels, minlength=spec.num_classes)
    if len(counts) > spec.num_classes:
        raise DatasetError(f"train: label {len(counts) - 1} out of range for {spec.num_classes} classes")
    if np.any(counts == 0):
        raise DatasetError(f"train: class {int(np.flatnonzero(counts == 0)[0])} has no samples")

    train_idx, val_idx = stratified_split(labels, config.val_fraction, derive_seed(config.seed, 1))
    if len(val_idx) == 0:
        raise DatasetError("train: validation split is empty (need >= 2 samples per class)")
    stats = compute_stats(list(images[train_idx]))
    spec = replace(spec, norm_mean=tuple(stats.mean.tolist()), norm_std=tuple(stats.std.tolist()))
    x_val = zscore(images[val_idx], stats)
    y_val = labels[val_idx]
    y_train = labels[train_idx]
    x_train_plain = zscore(images[train_idx], stats) if augment_cfg is None else None

    store = init_params(spec, derive_seed(config.seed, 2))
    state = OptimState.for_params(store, config.learning_rate, config.beta1, config.beta2, config.eps)
    history: list[EpochRecord] = []
    best_val = math.inf
    stale = 0
    n = len(train_idx)
    for epoch in range(config.epochs):
        order = Xoshiro256pp(derive_seed(config.seed, 3, epoch)).permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            pos = order[start:start + config.batch_size]
            if augment_cfg is None:
                xb = x_train_plain[pos]
            else:
                raw = [augment(images[train_idx[i]], augment_cfg, epoch * n + i) for i in pos]
                xb = zscore(np.stack(raw), stats)
            yb = y_train[pos]
            probs, cache = forward(spec, store, xb)
            loss = cross_entropy(probs, yb)
            _check_finite(loss, f"epoch {epoch + 1}")
            loss_sum += loss * len(pos)
            correct += int(np.sum(probs.argmax(axis=1) == yb))
            backward(spec, store, cache, cross_entropy_grad(probs, yb))
            adam_step(store, state)
        val_loss, val_acc = evaluate(spec, store, x_val, y_val)
        _check_finite(val_loss, "validation")
        rec = EpochRecord(epoch + 1, correct / n, val_acc, loss_sum / n, val_loss)
        history.append(rec)
        log.info("epoch %d: train loss %.4f acc %.4f | val loss %.4f acc %.4f",
                 rec.epoch, rec.train_loss, rec.train_acc, rec.val_loss, rec.val_acc)
        if val_loss < best_val - config.min_delta:
            best_val = val_loss
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                log.info("early stop after epoch %d", rec.epoch)
                break
    return TrainResult(store, history, state, spec, train_idx, val_idx)


def normalize_for(spec: ModelSpec, images: np.ndarray) -> np.ndarray:
    """Apply the spec's stored input normalization to [0, 1] images."""
    if spec.norm_mean is None or spec.norm_std is None:
        return np.asarray(images, dtype=np.float64)
    return zscore(images, DatasetStats(np.array(spec.norm_mean), np.array(spec.norm_std)))
