"""Model definition, initialization, and the forward/backward passes.

Parameters live in a plain dict of float64 arrays keyed by PARAM_KEYS;
shapes derive from an ArchSpec so tests can run tiny networks while the
production spec stays fixed. All math is double precision - gradients are
checked against finite differences, which needs the headroom.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import BadClassCount, BadInput
from ..signal import Window

PARAM_KEYS = (
    "conv1_w", "conv1_b",
    "conv2_w", "conv2_b",
    "dense_w", "dense_b",
    "head_w", "head_b",
)
HEAD_KEYS = ("head_w", "head_b")


@dataclass(frozen=True)
class ArchSpec:
    """Layer dimensions; the defaults are the deployed network."""

    input_len: int = 60
    in_channels: int = 6
    kernel: int = 5
    conv1_out: int = 8
    conv2_out: int = 16
    pool: int = 2
    dense_units: int = 32

    @property
    def conv1_len(self) -> int:
        return self.input_len - self.kernel + 1

    @property
    def pool1_len(self) -> int:
        return self.conv1_len // self.pool

    @property
    def conv2_len(self) -> int:
        return self.pool1_len - self.kernel + 1

    @property
    def pool2_len(self) -> int:
        return self.conv2_len // self.pool

    @property
    def flat_units(self) -> int:
        return self.pool2_len * self.conv2_out

    def validate(self) -> None:
        if self.conv1_len < self.pool or self.conv2_len < self.pool:
            raise ValueError(f"input too short for this architecture: {self}")

    def shapes(self, n_classes: int) -> dict[str, tuple[int, ...]]:
        return {
            "conv1_w": (self.kernel, self.in_channels, self.conv1_out),
            "conv1_b": (self.conv1_out,),
            "conv2_w": (self.kernel, self.conv1_out, self.conv2_out),
            "conv2_b": (self.conv2_out,),
            "dense_w": (self.flat_units, self.dense_units),
            "dense_b": (self.dense_units,),
            "head_w": (self.dense_units, n_classes),
            "head_b": (n_classes,),
        }


@dataclass
class CnnModel:
    params: dict[str, np.ndarray]
    class_map: tuple[str, ...]
    arch: ArchSpec = field(default_factory=ArchSpec)
    trainable: dict[str, bool] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.trainable:
            self.trainable = {k: True for k in PARAM_KEYS}

    @property
    def n_classes(self) -> int:
        return len(self.class_map)

    def copy(self) -> "CnnModel":
        return CnnModel(
            params={k: v.copy() for k, v in self.params.items()},
            class_map=tuple(self.class_map),
            arch=self.arch,
            trainable=dict(self.trainable),
            rng_seed=self.rng_seed,
        )


def param_count(arch: ArchSpec, n_classes: int) -> int:
    return sum(int(np.prod(s)) for s in arch.shapes(n_classes).values())


def init_model(
    class_map,
    seed: int,
    arch: ArchSpec = ArchSpec(),
) -> CnnModel:
    """Fan-in-scaled uniform weights, zero biases; deterministic in seed."""
    class_map = tuple(class_map)
    if len(class_map) < 2:
        raise BadClassCount(f"need >= 2 classes, got {len(class_map)}")
    if len(set(class_map)) != len(class_map):
        raise BadClassCount("class map contains duplicates")
    arch.validate()

    rng = np.random.default_rng(seed)
    shapes = arch.shapes(len(class_map))
    params: dict[str, np.ndarray] = {}
    for key in PARAM_KEYS:
        shape = shapes[key]
        if key.endswith("_b"):
            params[key] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            params[key] = rng.uniform(-limit, limit, size=shape)
    return CnnModel(params=params, class_map=class_map, arch=arch, rng_seed=seed)


def init_head(arch: ArchSpec, n_classes: int, seed: int) -> dict[str, np.ndarray]:
    """Fresh head parameters for a replaced class map."""
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / arch.dense_units)
    return {
        "head_w": rng.uniform(-limit, limit, size=(arch.dense_units, n_classes)),
        "head_b": np.zeros(n_classes, dtype=np.float64),
    }


def windows_to_array(windows: list[Window]) -> np.ndarray:
    return np.stack([w.data for w in windows]).astype(np.float64)


# --- forward ---

def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    """(B, L, C) -> (B, L-k+1, k*C), kernel position major."""
    view = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=1)
    # view: (B, L-k+1, C, k) -> (B, L-k+1, k, C)
    b, lout, c, k = view.shape
    return np.ascontiguousarray(view.transpose(0, 1, 3, 2)).reshape(b, lout, k * c)


def _conv1d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k, cin, cout = w.shape
    cols = _im2col(x, k)
    return cols @ w.reshape(k * cin, cout) + b, cols


def _maxpool2(x: np.ndarray, pool: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Truncating max-pool along time; returns (pooled, argmax, pooled_len)."""
    b, l, c = x.shape
    lp = l // pool
    xr = x[:, : lp * pool].reshape(b, lp, pool, c)
    idx = xr.argmax(axis=2)
    return np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0, :], idx, lp


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(model: CnnModel, x: np.ndarray, want_cache: bool = False):
    """Probabilities for a (B, L, C) batch; optionally the backprop cache."""
    arch = model.arch
    if x.ndim != 3 or x.shape[1:] != (arch.input_len, arch.in_channels):
        raise BadInput(
            f"expected (B, {arch.input_len}, {arch.in_channels}), got {x.shape}"
        )
    p = model.params

    z1, cols1 = _conv1d(x, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    p1, idx1, _ = _maxpool2(a1, arch.pool)

    z2, cols2 = _conv1d(p1, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    p2, idx2, _ = _maxpool2(a2, arch.pool)

    flat = p2.reshape(x.shape[0], arch.flat_units)
    z3 = flat @ p["dense_w"] + p["dense_b"]
    a3 = np.maximum(z3, 0.0)
    logits = a3 @ p["head_w"] + p["head_b"]
    probs = _softmax(logits)

    if not want_cache:
        return probs
    cache = {
        "x": x, "cols1": cols1, "z1": z1, "a1": a1, "idx1": idx1, "p1": p1,
        "cols2": cols2, "z2": z2, "a2": a2, "idx2": idx2,
        "flat": flat, "z3": z3, "a3": a3, "logits": logits, "probs": probs,
    }
    return probs, cache


def forward(model: CnnModel, window) -> np.ndarray:
    """Class probabilities for one normalized window."""
    data = window.data if isinstance(window, Window) else np.asarray(window, np.float64)
    if data.shape != (model.arch.input_len, model.arch.in_channels):
        raise BadInput(
            f"expected {model.arch.input_len}x{model.arch.in_channels}, got {data.shape}"
        )
    return forward_batch(model, data[None])[0]


# --- backward ---

def _conv1d_backward(
    d_out: np.ndarray, cols: np.ndarray, w: np.ndarray, in_len: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    k, cin, cout = w.shape
    b, lout, _ = d_out.shape
    d_flat = d_out.reshape(b * lout, cout)
    dw = (cols.reshape(b * lout, k * cin).T @ d_flat).reshape(k, cin, cout)
    db = d_flat.sum(axis=0)
    d_cols = (d_flat @ w.reshape(k * cin, cout).T).reshape(b, lout, k, cin)
    dx = np.zeros((b, in_len, cin), dtype=np.float64)
    for i in range(k):
        dx[:, i : i + lout] += d_cols[:, :, i]
    return dw, db, dx


def _maxpool2_backward(
    d_pool: np.ndarray, idx: np.ndarray, in_len: int, pool: int
) -> np.ndarray:
    b, lp, c = d_pool.shape
    d4 = np.zeros((b, lp, pool, c), dtype=np.float64)
    np.put_along_axis(d4, idx[:, :, None, :], d_pool[:, :, None, :], axis=2)
    dx = np.zeros((b, in_len, c), dtype=np.float64)
    dx[:, : lp * pool] = d4.reshape(b, lp * pool, c)
    return dx


def backward_batch(
    model: CnnModel, cache: dict, labels: np.ndarray
) -> dict[str, np.ndarray]:
    """Mean cross-entropy gradients for every parameter (frozen included)."""
    arch = model.arch
    p = model.params
    b = labels.shape[0]

    d_logits = cache["probs"].copy()
    d_logits[np.arange(b), labels] -= 1.0
    d_logits /= b

    grads: dict[str, np.ndarray] = {}
    grads["head_w"] = cache["a3"].T @ d_logits
    grads["head_b"] = d_logits.sum(axis=0)
    d_a3 = d_logits @ p["head_w"].T
    d_z3 = d_a3 * (cache["z3"] > 0.0)
    grads["dense_w"] = cache["flat"].T @ d_z3
    grads["dense_b"] = d_z3.sum(axis=0)
    d_flat = d_z3 @ p["dense_w"].T

    d_p2 = d_flat.reshape(b, arch.pool2_len, arch.conv2_out)
    d_a2 = _maxpool2_backward(d_p2, cache["idx2"], arch.conv2_len, arch.pool)
    d_z2 = d_a2 * (cache["z2"] > 0.0)
    grads["conv2_w"], grads["conv2_b"], d_p1 = _conv1d_backward(
        d_z2, cache["cols2"], p["conv2_w"], arch.pool1_len
    )

    d_a1 = _maxpool2_backward(d_p1, cache["idx1"], arch.conv1_len, arch.pool)
    d_z1 = d_a1 * (cache["z1"] > 0.0)
    grads["conv1_w"], grads["conv1_b"], _ = _conv1d_backward(
        d_z1, cache["cols1"], p["conv1_w"], arch.input_len
    )
    return grads


def replace_head(model: CnnModel, class_map, seed: int) -> CnnModel:
    """New class map, freshly initialized head, all other tensors shared."""
    class_map = tuple(class_map)
    if len(class_map) < 2:
        raise BadClassCount(f"need >= 2 classes, got {len(class_map)}")
    out = model.copy()
    out.params.update(init_head(model.arch, len(class_map), seed))
    return replace_class_map(out, class_map)


def replace_class_map(model: CnnModel, class_map) -> CnnModel:
    model.class_map = tuple(class_map)
    return model
