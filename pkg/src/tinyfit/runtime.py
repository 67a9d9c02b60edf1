"""Integer-only inference engine standing in for the wristband firmware.

Executes a TBND bundle with i32 accumulators, fixed-point requantization,
and saturating i8 activations inside a fixed-size arena. The arena models
the MCU memory budget: resident model tensors (i8 weights, i32 biases)
plus preallocated per-inference scratch, with a high-water mark. Only the
final softmax runs in float, on logits dequantized from the last layer's
accumulators; the class decision is already fixed by the integer path.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .bundle import TYPE_CONV, ModelBundle, deserialize
from .errors import ArenaOverflow, NoModel
from .quant import ACT_QMAX, ACT_QMIN, apply_requant, round_half_away
from .signal import WINDOW_LEN

DEFAULT_ARENA_BYTES = 65536
MAX_ARENA_BYTES = 320 * 1024  # target MCU SRAM
POOL = 2


class Arena:
    """Byte budget with a high-water mark; all engine storage is charged here."""

    def __init__(self, capacity: int = DEFAULT_ARENA_BYTES):
        if not 0 < capacity <= MAX_ARENA_BYTES:
            raise ValueError(f"capacity must be in (0, {MAX_ARENA_BYTES}]")
        self.capacity = capacity
        self.used = 0
        self.high_water = 0

    def allocate(self, n_bytes: int) -> None:
        if self.used + n_bytes > self.capacity:
            raise ArenaOverflow(self.used + n_bytes, self.capacity)
        self.used += n_bytes
        self.high_water = max(self.high_water, self.used)

    def release_all(self) -> None:
        self.used = 0


@dataclass(frozen=True)
class InferenceResult:
    class_id: int
    class_name: str
    confidence: float
    latency_us: int
    model_version: int


class _Layer:
    """One executable layer: wire tensors reshaped, zero-point fold applied."""

    def __init__(self, spec, out_zero_point: int):
        self.is_conv = spec.type_code == TYPE_CONV
        self.in_dim = spec.in_dim
        self.out_dim = spec.out_dim
        self.kernel = spec.kernel
        self.input_scale = spec.input_scale
        self.input_zp = spec.input_zero_point
        self.weight_scale = spec.weight_scale
        self.mantissa = spec.requant_multiplier
        self.shift = spec.requant_shift
        self.out_zp = out_zero_point

        if self.is_conv:
            w = spec.weights.reshape(self.kernel, self.in_dim, self.out_dim)
            self.w_mat = w.reshape(self.kernel * self.in_dim, self.out_dim).astype(np.int64)
        else:
            self.w_mat = spec.weights.reshape(self.in_dim, self.out_dim).astype(np.int64)
        # fold the input zero-point into the bias: acc uses raw q values
        col_sums = self.w_mat.sum(axis=0)
        self.bias = (spec.bias.astype(np.int64) - self.input_zp * col_sums)

        self.model_bytes = spec.weights.size + 4 * spec.bias.size
        self.seq_len = 1   # filled in by LoadedModel once lengths are traced
        self.macs = 0


class LoadedModel:
    """A bundle resident in the arena, with preallocated scratch."""

    def __init__(self, bundle: ModelBundle, arena: Arena):
        self.version = bundle.version
        self.class_map = bundle.class_map
        self.mean = bundle.channel_stats.mean
        self.std = bundle.channel_stats.std
        if len(bundle.layers) < 2:
            raise ValueError("bundle must contain at least two layers")

        self.layers: list[_Layer] = []
        for i, spec in enumerate(bundle.layers):
            nxt = bundle.layers[i + 1] if i + 1 < len(bundle.layers) else None
            self.layers.append(_Layer(spec, nxt.input_zero_point if nxt else 0))

        first = self.layers[0]
        if not first.is_conv:
            raise ValueError("first layer must be a convolution")
        self.input_len = WINDOW_LEN
        self.in_channels = first.in_dim

        # trace shapes through the net; charge scratch for each buffer
        self.mac_count = 0
        scratch = self.input_len * self.in_channels  # quantized input (i8)
        length = self.input_len
        for layer in self.layers:
            if layer.is_conv:
                lout = length - layer.kernel + 1
                layer.seq_len = lout
                layer.macs = lout * layer.kernel * layer.in_dim * layer.out_dim
                scratch += lout * layer.kernel * layer.in_dim        # im2col i8
                scratch += 4 * lout * layer.out_dim                  # acc i32
                scratch += (lout // POOL) * layer.out_dim            # pooled i8
                length = lout // POOL
            else:
                layer.seq_len = 1
                layer.macs = layer.in_dim * layer.out_dim
                scratch += 4 * layer.out_dim                         # acc i32
                scratch += layer.out_dim                             # activated i8
            self.mac_count += layer.macs

        self.model_bytes = sum(l.model_bytes for l in self.layers)
        self.scratch_bytes = scratch
        arena.allocate(self.model_bytes)
        arena.allocate(self.scratch_bytes)


class MicroEngine:
    """One engine per device: load a bundle, then run inferences against it."""

    def __init__(self, arena_capacity: int = DEFAULT_ARENA_BYTES):
        self.arena = Arena(arena_capacity)
        self.model: LoadedModel | None = None

    def load(self, bundle_bytes: bytes) -> LoadedModel:
        """Verify, stage, and atomically swap in a bundle.

        The previous model keeps serving until the new one is fully staged;
        a failed load (bad CRC, arena overflow) leaves it untouched.
        """
        bundle = deserialize(bundle_bytes)
        staged = LoadedModel(bundle, Arena(self.arena.capacity))
        self.arena.release_all()
        self.arena.allocate(staged.model_bytes)
        self.arena.allocate(staged.scratch_bytes)
        self.model = staged
        return staged

    def infer(self, raw_window: np.ndarray) -> InferenceResult:
        """Normalize, quantize, and run the integer path on one raw window."""
        if self.model is None:
            raise NoModel("no bundle loaded")
        m = self.model
        t0 = time.perf_counter_ns()

        x = np.asarray(raw_window, dtype=np.float64)
        if x.shape != (m.input_len, m.in_channels):
            raise ValueError(f"expected {(m.input_len, m.in_channels)}, got {x.shape}")
        x = (x - m.mean) / m.std

        first = m.layers[0]
        q = round_half_away(x / first.input_scale) + first.input_zp
        act = np.clip(q, ACT_QMIN, ACT_QMAX).astype(np.int64)

        logits_acc = None
        logit_scale = 1.0
        for i, layer in enumerate(m.layers):
            last = i == len(m.layers) - 1
            if layer.is_conv:
                acc = self._conv_acc(act, layer)
            else:
                acc = act.reshape(-1) @ layer.w_mat + layer.bias
            if last:
                logits_acc = acc
                logit_scale = layer.input_scale * layer.weight_scale
                break
            out = apply_requant(acc, layer.mantissa, layer.shift) + layer.out_zp
            out = np.clip(out, ACT_QMIN, ACT_QMAX)
            if layer.is_conv:
                lp = layer.seq_len // POOL
                out = out[: lp * POOL].reshape(lp, POOL, layer.out_dim).max(axis=1)
            act = out

        logits = logits_acc.astype(np.float64) * logit_scale
        z = logits - logits.max()
        e = np.exp(z)
        probs = e / e.sum()
        class_id = int(logits_acc.argmax())

        latency_us = max(1, (time.perf_counter_ns() - t0) // 1000)
        return InferenceResult(
            class_id=class_id,
            class_name=m.class_map[class_id],
            confidence=float(probs[class_id]),
            latency_us=int(latency_us),
            model_version=m.version,
        )

    @staticmethod
    def _conv_acc(act: np.ndarray, layer: _Layer) -> np.ndarray:
        view = np.lib.stride_tricks.sliding_window_view(act, layer.kernel, axis=0)
        cols = view.transpose(0, 2, 1).reshape(layer.seq_len, layer.kernel * layer.in_dim)
        return cols @ layer.w_mat + layer.bias

    def arena_report(self) -> tuple[int, int, int]:
        """(model_bytes, scratch_bytes, high_water) for the loaded model."""
        if self.model is None:
            raise NoModel("no bundle loaded")
        return self.model.model_bytes, self.model.scratch_bytes, self.arena.high_water

    @property
    def mac_count(self) -> int:
        if self.model is None:
            raise NoModel("no bundle loaded")
        return self.model.mac_count
