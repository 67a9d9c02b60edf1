"""Float checkpoint file ("TFLT"): the hand-off between training and packaging.

Little-endian: magic "TFLT", u16 format version, u8 class count, class-name
table (u8 length-prefixed UTF-8), then all parameters as f32 in fixed layer
order (conv1 w/b, conv2 w/b, dense w/b, head w/b, C-order). Only the
production architecture is serializable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import BadFormatVersion, BadMagic, Truncated
from .model import PARAM_KEYS, ArchSpec, CnnModel

MAGIC = b"TFLT"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, model: CnnModel) -> None:
    if model.arch != ArchSpec():
        raise ValueError("checkpoints are defined for the production architecture only")
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<HB", FORMAT_VERSION, len(model.class_map))
    for name in model.class_map:
        raw = name.encode("utf-8")
        if len(raw) > 0xFF:
            raise ValueError(f"class name too long: {name!r}")
        buf += struct.pack("<B", len(raw)) + raw
    for key in PARAM_KEYS:
        buf += model.params[key].astype("<f4").tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def load_checkpoint(path: str | Path) -> CnnModel:
    raw = Path(path).read_bytes()
    if len(raw) < 7:
        raise Truncated("checkpoint header incomplete")
    if raw[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {raw[:4]!r}")
    version, n_classes = struct.unpack_from("<HB", raw, 4)
    if version != FORMAT_VERSION:
        raise BadFormatVersion(f"unsupported checkpoint version {version}")
    off = 7
    names = []
    for _ in range(n_classes):
        if off >= len(raw):
            raise Truncated("class table incomplete")
        ln = raw[off]
        off += 1
        if off + ln > len(raw):
            raise Truncated("class table incomplete")
        names.append(raw[off : off + ln].decode("utf-8"))
        off += ln

    arch = ArchSpec()
    params = {}
    for key, shape in arch.shapes(n_classes).items():
        count = int(np.prod(shape))
        if off + 4 * count > len(raw):
            raise Truncated(f"parameters incomplete at {key}")
        params[key] = (
            np.frombuffer(raw, dtype="<f4", count=count, offset=off)
            .astype(np.float64)
            .reshape(shape)
        )
        off += 4 * count
    if off != len(raw):
        raise Truncated(f"{len(raw) - off} trailing bytes")
    return CnnModel(params=params, class_map=tuple(names), arch=arch)
