"""Loss, optimizer, the training loop, and last-layer personalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BadLabel, EmptyDataset, InsufficientExamples
from ..signal import Window
from .model import (
    HEAD_KEYS,
    PARAM_KEYS,
    CnnModel,
    backward_batch,
    forward_batch,
    replace_head,
    windows_to_array,
)

PROB_CLAMP = 1e-7
EVAL_BATCH = 512


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 7
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    shuffle: bool = True
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class TrainHistory:
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)


def _labels_to_ids(model: CnnModel, windows: list[Window]) -> np.ndarray:
    index = {c: i for i, c in enumerate(model.class_map)}
    ids = np.empty(len(windows), dtype=np.int64)
    for i, w in enumerate(windows):
        if w.label not in index:
            raise BadLabel(f"label {w.label!r} not in class map")
        ids[i] = index[w.label]
    return ids


def loss_and_grads(
    model: CnnModel, x: np.ndarray, labels: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean softmax cross-entropy and its gradients for a batch.

    Frozen parameters get exact zero gradients. The loss readout clamps
    probabilities at PROB_CLAMP so a perfect prediction reports ~0 rather
    than -log(1).
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyDataset("empty batch")
    if labels.min() < 0 or labels.max() >= model.n_classes:
        raise BadLabel(f"class ids must be in [0, {model.n_classes})")

    probs, cache = forward_batch(model, x, want_cache=True)
    picked = np.clip(probs[np.arange(labels.size), labels], PROB_CLAMP, 1.0)
    loss = float(-np.log(picked).mean())

    grads = backward_batch(model, cache, labels)
    for key in PARAM_KEYS:
        if not model.trainable.get(key, True):
            grads[key] = np.zeros_like(grads[key])
    return loss, grads


def flatten_grads(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([grads[k].ravel() for k in PARAM_KEYS])


class _Adam:
    """Adaptive-moment SGD over the trainable subset of parameters."""

    def __init__(self, model: CnnModel, cfg: TrainConfig):
        self.cfg = cfg
        self.keys = [k for k in PARAM_KEYS if model.trainable.get(k, True)]
        self.m = {k: np.zeros_like(model.params[k]) for k in self.keys}
        self.v = {k: np.zeros_like(model.params[k]) for k in self.keys}
        self.t = 0

    def step(self, model: CnnModel, grads: dict[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for k in self.keys:
            g = grads[k]
            self.m[k] = cfg.beta1 * self.m[k] + (1.0 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1.0 - cfg.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            model.params[k] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def _batch_accuracy(model: CnnModel, x: np.ndarray, labels: np.ndarray) -> float:
    correct = 0
    for lo in range(0, x.shape[0], EVAL_BATCH):
        probs = forward_batch(model, x[lo : lo + EVAL_BATCH])
        correct += int((probs.argmax(axis=1) == labels[lo : lo + EVAL_BATCH]).sum())
    return correct / x.shape[0]


def train(
    model: CnnModel, windows: list[Window], config: TrainConfig = TrainConfig()
) -> tuple[CnnModel, TrainHistory]:
    """Mini-batch training; deterministic given (model, data, config).

    With val_fraction > 0 a seeded tail split is held out and the epoch
    with the best validation accuracy wins; otherwise the final epoch's
    parameters are returned.
    """
    if not windows:
        raise EmptyDataset("no training windows")
    model = model.copy()
    x = windows_to_array(windows)
    y = _labels_to_ids(model, windows)

    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    if config.val_fraction > 0.0:
        perm = rng.permutation(n)
        n_val = max(1, int(round(n * config.val_fraction)))
        val_idx, train_idx = perm[:n_val], perm[n_val:]
        if train_idx.size == 0:
            raise EmptyDataset("val_fraction leaves no training data")
        x_val, y_val = x[val_idx], y[val_idx]
        x, y = x[train_idx], y[train_idx]
        n = x.shape[0]
    else:
        x_val = y_val = None

    opt = _Adam(model, config)
    history = TrainHistory()
    best_val = -1.0
    best_params = None

    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            loss, grads = loss_and_grads(model, x[idx], y[idx])
            opt.step(model, grads)
            epoch_loss += loss * idx.size
        history.loss.append(epoch_loss / n)
        history.accuracy.append(_batch_accuracy(model, x, y))
        if x_val is not None:
            val_acc = _batch_accuracy(model, x_val, y_val)
            history.val_accuracy.append(val_acc)
            if val_acc > best_val:
                best_val = val_acc
                best_params = {k: v.copy() for k, v in model.params.items()}

    if best_params is not None:
        model.params = best_params
    return model, history


def sample_per_class(
    windows: list[Window], per_class: int, seed: int
) -> tuple[list[Window], list[Window]]:
    """Seeded stratified sample without replacement; remainder returned too."""
    by_class: dict[str, list[int]] = {}
    for i, w in enumerate(windows):
        by_class.setdefault(w.label, []).append(i)
    rng = np.random.default_rng(seed)
    chosen: set[int] = set()
    for cname in sorted(by_class):
        idxs = by_class[cname]
        if len(idxs) < per_class:
            raise InsufficientExamples(cname, len(idxs), per_class)
        chosen.update(rng.choice(idxs, size=per_class, replace=False).tolist())
    sample = [windows[i] for i in sorted(chosen)]
    rest = [windows[i] for i in range(len(windows)) if i not in chosen]
    return sample, rest


def personalize(
    pretrained: CnnModel,
    user_windows: list[Window],
    examples_per_class: int = 15,
    config: TrainConfig = TrainConfig(epochs=50),
) -> CnnModel:
    """Fine-tune only the head on a small stratified sample of user data.

    The target class map is the sorted label set of user_windows; when it
    differs from the pretrained map the head is re-initialized for the new
    classes. Every non-head tensor stays bit-identical to the input model.
    """
    if not user_windows:
        raise EmptyDataset("no user windows")
    if any(w.label is None for w in user_windows):
        raise BadLabel("personalization windows must be labeled")
    target_map = tuple(sorted({w.label for w in user_windows}))

    sample, _ = sample_per_class(user_windows, examples_per_class, config.seed)

    model = pretrained.copy()
    if target_map != pretrained.class_map:
        model = replace_head(model, target_map, seed=config.seed)
    model.trainable = {k: k in HEAD_KEYS for k in PARAM_KEYS}

    tuned, _ = train(model, sample, config)
    return tuned


def evaluate(
    model: CnnModel, windows: list[Window]
) -> tuple[float, np.ndarray]:
    """Accuracy and a CxC confusion matrix (rows = true class)."""
    if not windows:
        raise EmptyDataset("nothing to evaluate")
    x = windows_to_array(windows)
    y = _labels_to_ids(model, windows)
    c = model.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    for lo in range(0, x.shape[0], EVAL_BATCH):
        probs = forward_batch(model, x[lo : lo + EVAL_BATCH])
        pred = probs.argmax(axis=1)
        np.add.at(confusion, (y[lo : lo + EVAL_BATCH], pred), 1)
    accuracy = float(np.trace(confusion) / len(windows))
    return accuracy, confusion
