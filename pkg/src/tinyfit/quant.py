"""Float model -> deployable int8 bundle: pruning, calibration, quantization.

Weights are quantized per tensor, symmetric (zero-point 0, scale
max|w|/127); activations per site, asymmetric, from calibration min/max
widened to include zero. Biases become 32-bit integers at scale
input_scale x weight_scale. Each layer carries a fixed-point requantization
multiplier (31-bit mantissa, right shift) mapping its accumulator onto the
next layer's input quantization. Rounding is half-away-from-zero
everywhere so device and host agree bit for bit.
"""

from __future__ import annotations

import numpy as np

from .bundle import LayerQuant, ModelBundle
from .errors import BadSparsity, EmptyCalibration
from .nn.model import CnnModel, forward_batch, windows_to_array
from .signal import ChannelStats, Window

WEIGHT_QMAX = 127
ACT_QMIN, ACT_QMAX = -128, 127
MANTISSA_BITS = 31
DEFAULT_CALIBRATION_SIZE = 256
DEFAULT_SPARSITY = 0.3

# (param prefix, wire type code) in execution order; the head is last.
_LAYER_ORDER = (("conv1", 1), ("conv2", 1), ("dense", 2), ("head", 2))


def round_half_away(x: np.ndarray) -> np.ndarray:
    """round() with .5 going away from zero, not to even."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x)


def prune_magnitude(model: CnnModel, sparsity: float) -> CnnModel:
    """Zero the smallest-|w| fraction of the 192x32 dense layer's weights.

    Ties break by flat index order; every other tensor is untouched.
    """
    if not 0.0 <= sparsity < 1.0:
        raise BadSparsity(f"sparsity must be in [0, 1), got {sparsity}")
    out = model.copy()
    if sparsity == 0.0:
        return out
    w = out.params["dense_w"]
    flat = np.abs(w).ravel()
    n_zero = int(round(sparsity * flat.size))
    if n_zero:
        order = np.argsort(flat, kind="stable")
        mask = np.ones(flat.size, dtype=bool)
        mask[order[:n_zero]] = False
        out.params["dense_w"] = (w.ravel() * mask).reshape(w.shape)
    return out


def quantize_weights(w: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric per-tensor int8; all-zero tensors get scale 1 by convention.

    The scale is rounded to f32 (its wire precision) before quantizing so
    host and device derive from identical numbers.
    """
    peak = float(np.max(np.abs(w)))
    scale = float(np.float32(peak / WEIGHT_QMAX)) if peak > 0.0 else 1.0
    q = np.clip(round_half_away(w / scale), -WEIGHT_QMAX, WEIGHT_QMAX)
    return q.astype(np.int8), scale


def activation_qparams(lo: float, hi: float) -> tuple[float, int]:
    """Asymmetric int8 scale/zero-point for an observed [lo, hi] range."""
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    if hi == lo:
        return 1.0, 0
    scale = float(np.float32((hi - lo) / (ACT_QMAX - ACT_QMIN)))
    zp = int(ACT_QMIN - round_half_away(np.asarray(lo / scale)))
    return scale, int(np.clip(zp, ACT_QMIN, ACT_QMAX))


def requant_params(real_multiplier: float) -> tuple[int, int]:
    """Fixed-point (mantissa, right-shift) for a positive real multiplier.

    mantissa is a 31-bit integer in [2^30, 2^31); the represented value is
    mantissa * 2^-(31+shift). Multipliers >= 1 saturate at the maximum.
    """
    if real_multiplier <= 0.0:
        raise ValueError("requant multiplier must be positive")
    if real_multiplier >= 1.0:
        return (1 << MANTISSA_BITS) - 1, 0
    shift = 0
    m = real_multiplier
    while m < 0.5:
        m *= 2.0
        shift += 1
    mantissa = int(round_half_away(np.asarray(m * (1 << MANTISSA_BITS))))
    if mantissa == (1 << MANTISSA_BITS):
        mantissa >>= 1
        if shift > 0:
            shift -= 1
        else:
            mantissa = (1 << MANTISSA_BITS) - 1
    return mantissa, shift


def apply_requant(acc: np.ndarray, mantissa: int, shift: int) -> np.ndarray:
    """acc * mantissa * 2^-(31+shift), rounded half away from zero (exact)."""
    prod = acc.astype(np.int64) * np.int64(mantissa)
    total = MANTISSA_BITS + shift
    half = np.int64(1) << np.int64(total - 1)
    mag = np.abs(prod)
    res = (mag + half) >> np.int64(total)
    return np.where(prod < 0, -res, res)


def _site_ranges(model: CnnModel, x: np.ndarray) -> list[tuple[float, float]]:
    """Observed float min/max at each layer's input site over a batch."""
    _, cache = forward_batch(model, x, want_cache=True)
    sites = [x, cache["p1"], cache["flat"], cache["a3"]]
    return [(float(s.min()), float(s.max())) for s in sites]


def calibrate_and_quantize(
    model: CnnModel, calibration_windows: list[Window]
) -> list[LayerQuant]:
    """Quantize all four layers against calibration activation ranges."""
    if not calibration_windows:
        raise EmptyCalibration("need at least one calibration window")
    x = windows_to_array(calibration_windows)
    ranges = _site_ranges(model, x)
    site_params = [activation_qparams(lo, hi) for lo, hi in ranges]

    arch = model.arch
    dims = {
        "conv1": (arch.in_channels, arch.conv1_out, arch.kernel),
        "conv2": (arch.conv1_out, arch.conv2_out, arch.kernel),
        "dense": (arch.flat_units, arch.dense_units, 0),
        "head": (arch.dense_units, model.n_classes, 0),
    }

    layers = []
    for i, (prefix, type_code) in enumerate(_LAYER_ORDER):
        w = model.params[f"{prefix}_w"]
        b = model.params[f"{prefix}_b"]
        qw, w_scale = quantize_weights(w)
        in_scale, in_zp = site_params[i]
        bias_scale = in_scale * w_scale
        qb = round_half_away(b / bias_scale)
        qb = np.clip(qb, np.iinfo(np.int32).min, np.iinfo(np.int32).max).astype(np.int32)

        last = i == len(_LAYER_ORDER) - 1
        if last:
            mantissa, shift = 0, 0  # logits stay in i32; dequantized downstream
        else:
            out_scale = site_params[i + 1][0]
            mantissa, shift = requant_params(bias_scale / out_scale)

        layers.append(
            LayerQuant(
                type_code=type_code,
                in_dim=dims[prefix][0],
                out_dim=dims[prefix][1],
                kernel=dims[prefix][2],
                weight_scale=w_scale,
                input_scale=in_scale,
                input_zero_point=in_zp,
                requant_multiplier=mantissa,
                requant_shift=shift,
                weights=qw,
                bias=qb,
            )
        )
    return layers


def sample_calibration(
    windows: list[Window],
    size: int = DEFAULT_CALIBRATION_SIZE,
    seed: int = 0,
) -> list[Window]:
    """Seeded sample of calibration windows (all of them when fewer)."""
    if not windows:
        raise EmptyCalibration("no windows to sample from")
    if len(windows) <= size:
        return list(windows)
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(windows), size=size, replace=False)
    return [windows[i] for i in sorted(idx)]


def make_bundle(
    model: CnnModel,
    stats: ChannelStats,
    calibration_windows: list[Window],
    version: int,
    sparsity: float = DEFAULT_SPARSITY,
) -> ModelBundle:
    """Full compression pipeline: prune, calibrate, quantize, assemble."""
    pruned = prune_magnitude(model, sparsity)
    layers = calibrate_and_quantize(pruned, calibration_windows)
    return ModelBundle(
        version=version,
        class_map=tuple(model.class_map),
        channel_stats=stats,
        layers=tuple(layers),
    )
