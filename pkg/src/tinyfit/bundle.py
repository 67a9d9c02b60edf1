"""TBND bundle: the bit-exact wire format shipped to devices.

Little-endian throughout:

    magic "TBND"
    u16  format version (= 1)
    u32  bundle version (monotone per device)
    u8   class count C
    class-name table: C x (u8 length, UTF-8 bytes)
    12 x f32 channel stats (6 means, 6 stds)
    u8   layer count
    per layer:
        u8  type code (1 conv, 2 dense)
        u16 in, u16 out, u16 kernel
        f32 weight scale, f32 input scale
        i32 input zero-point
        i32 requant multiplier (0 on the final layer: raw logits)
        u8  requant shift
        weight bytes (i8; conv: kernel x in x out, dense: in x out, C-order)
        bias bytes (out x i32)
    u32  CRC32 (IEEE) over all preceding bytes

Serialization is byte-deterministic; deserialize(serialize(b)) == b.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadFormatVersion, BadMagic, CrcMismatch, Truncated
from .signal import ChannelStats

MAGIC = b"TBND"
FORMAT_VERSION = 1
TYPE_CONV = 1
TYPE_DENSE = 2
MAX_BUNDLE_BYTES = 15360  # the device-side budget

_LAYER_HEAD = struct.Struct("<BHHHffiiB")


@dataclass(frozen=True)
class LayerQuant:
    """One quantized layer: tensors plus everything needed to run it."""

    type_code: int
    in_dim: int
    out_dim: int
    kernel: int
    weight_scale: float
    input_scale: float
    input_zero_point: int
    requant_multiplier: int
    requant_shift: int
    weights: np.ndarray  # int8
    bias: np.ndarray     # int32

    def __post_init__(self):
        # canonical wire precision: scales are f32, tensors flat
        object.__setattr__(self, "weight_scale", float(np.float32(self.weight_scale)))
        object.__setattr__(self, "input_scale", float(np.float32(self.input_scale)))
        object.__setattr__(self, "weights", np.asarray(self.weights, np.int8).ravel())
        object.__setattr__(self, "bias", np.asarray(self.bias, np.int32).ravel())

    @property
    def weight_count(self) -> int:
        k = self.kernel if self.type_code == TYPE_CONV else 1
        return k * self.in_dim * self.out_dim

    def __eq__(self, other) -> bool:
        if not isinstance(other, LayerQuant):
            return NotImplemented
        return (
            self.type_code == other.type_code
            and self.in_dim == other.in_dim
            and self.out_dim == other.out_dim
            and self.kernel == other.kernel
            and self.weight_scale == other.weight_scale
            and self.input_scale == other.input_scale
            and self.input_zero_point == other.input_zero_point
            and self.requant_multiplier == other.requant_multiplier
            and self.requant_shift == other.requant_shift
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


@dataclass(frozen=True)
class ModelBundle:
    version: int
    class_map: tuple[str, ...]
    channel_stats: ChannelStats
    layers: tuple[LayerQuant, ...]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.version == other.version
            and self.class_map == other.class_map
            and np.array_equal(
                np.asarray(self.channel_stats.to_list(), dtype=np.float32),
                np.asarray(other.channel_stats.to_list(), dtype=np.float32),
            )
            and self.layers == other.layers
        )

    @property
    def payload_bytes(self) -> int:
        """Tensor storage only: what the device keeps resident."""
        return sum(l.weights.size + 4 * l.bias.size for l in self.layers)


def serialize(bundle: ModelBundle) -> bytes:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HI", FORMAT_VERSION, bundle.version)
    buf += struct.pack("<B", len(bundle.class_map))
    for name in bundle.class_map:
        raw = name.encode("utf-8")
        if len(raw) > 0xFF:
            raise ValueError(f"class name too long: {name!r}")
        buf += struct.pack("<B", len(raw)) + raw
    buf += np.asarray(bundle.channel_stats.to_list(), dtype="<f4").tobytes()
    buf += struct.pack("<B", len(bundle.layers))
    for layer in bundle.layers:
        if layer.weights.size != layer.weight_count:
            raise ValueError("layer weight count does not match dims")
        buf += _LAYER_HEAD.pack(
            layer.type_code,
            layer.in_dim,
            layer.out_dim,
            layer.kernel,
            layer.weight_scale,
            layer.input_scale,
            layer.input_zero_point,
            layer.requant_multiplier,
            layer.requant_shift,
        )
        buf += layer.weights.astype(np.int8).tobytes(order="C")
        buf += layer.bias.astype("<i4").tobytes(order="C")
    buf += struct.pack("<I", zlib.crc32(bytes(buf)) & 0xFFFFFFFF)
    return bytes(buf)


def deserialize(raw: bytes) -> ModelBundle:
    if len(raw) < 16:
        raise Truncated(f"bundle too short: {len(raw)} bytes")
    if raw[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {raw[:4]!r}")
    fmt_version, bundle_version = struct.unpack_from("<HI", raw, 4)
    if fmt_version != FORMAT_VERSION:
        raise BadFormatVersion(f"unsupported format version {fmt_version}")
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    actual_crc = zlib.crc32(raw[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CrcMismatch(f"crc {actual_crc:08x} != stored {stored_crc:08x}")

    off = 10
    body_end = len(raw) - 4

    def need(n: int) -> None:
        if off + n > body_end:
            raise Truncated("bundle body incomplete")

    need(1)
    n_classes = raw[off]
    off += 1
    names = []
    for _ in range(n_classes):
        need(1)
        ln = raw[off]
        off += 1
        need(ln)
        names.append(raw[off : off + ln].decode("utf-8"))
        off += ln

    need(48)
    stats = ChannelStats.from_list(
        np.frombuffer(raw, dtype="<f4", count=12, offset=off).astype(np.float64)
    )
    off += 48

    need(1)
    n_layers = raw[off]
    off += 1
    layers = []
    for _ in range(n_layers):
        need(_LAYER_HEAD.size)
        (
            type_code, in_dim, out_dim, kernel,
            w_scale, in_scale, in_zp, mantissa, shift,
        ) = _LAYER_HEAD.unpack_from(raw, off)
        off += _LAYER_HEAD.size
        if type_code not in (TYPE_CONV, TYPE_DENSE):
            raise Truncated(f"unknown layer type code {type_code}")
        k = kernel if type_code == TYPE_CONV else 1
        n_w = k * in_dim * out_dim
        need(n_w)
        weights = np.frombuffer(raw, dtype=np.int8, count=n_w, offset=off).copy()
        off += n_w
        need(4 * out_dim)
        bias = np.frombuffer(raw, dtype="<i4", count=out_dim, offset=off).copy()
        off += 4 * out_dim
        layers.append(
            LayerQuant(
                type_code=type_code,
                in_dim=in_dim,
                out_dim=out_dim,
                kernel=kernel,
                weight_scale=w_scale,
                input_scale=in_scale,
                input_zero_point=in_zp,
                requant_multiplier=mantissa,
                requant_shift=shift,
                weights=weights,
                bias=bias.astype(np.int32),
            )
        )
    if off != body_end:
        raise Truncated(f"{body_end - off} unparsed bytes in body")
    return ModelBundle(
        version=bundle_version,
        class_map=tuple(names),
        channel_stats=stats,
        layers=tuple(layers),
    )
