"""TWIN windowed-dataset file: the on-disk product of ingestion.

Little-endian layout:

    magic "TWIN"
    u32   window count
    u16   class count
    class-name table (u8 length-prefixed UTF-8, one entry per class)
    per window: u16 class id, u16 subject index, 360 f32 (time-major)

Subject identity survives only as the u16 index, assigned by sorting the
ingested subject ids; readers expose it as the decimal string of the index.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, EmptyDataset, Truncated
from .signal import N_CHANNELS, WINDOW_LEN, Window

MAGIC = b"TWIN"
VALUES_PER_WINDOW = WINDOW_LEN * N_CHANNELS


def write_twin(path: str | Path, windows: list[Window]) -> None:
    """Serialize labeled windows; fails on unlabeled input."""
    if not windows:
        raise EmptyDataset("refusing to write an empty TWIN file")
    classes = sorted({w.label for w in windows if w.label is not None})
    if len(classes) != len({w.label for w in windows}):
        raise ValueError("all windows must carry a label")
    if len(classes) > 0xFFFF:
        raise ValueError("too many classes for u16")
    class_ids = {c: i for i, c in enumerate(classes)}
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) > 0xFFFF:
        raise ValueError("too many subjects for u16")
    subject_ids = {s: i for i, s in enumerate(subjects)}

    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<IH", len(windows), len(classes))
    for c in classes:
        raw = c.encode("utf-8")
        if len(raw) > 0xFF:
            raise ValueError(f"class name too long: {c!r}")
        buf += struct.pack("<B", len(raw)) + raw
    for w in windows:
        buf += struct.pack("<HH", class_ids[w.label], subject_ids[w.subject_id])
        buf += w.data.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(bytes(buf))


def read_twin(path: str | Path) -> tuple[list[Window], list[str]]:
    """Read a TWIN file back into windows plus the class-name table.

    Returned subject ids are the stored u16 indices rendered as strings.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 10:
        raise Truncated("TWIN header incomplete")
    if raw[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {raw[:4]!r}")
    count, n_classes = struct.unpack_from("<IH", raw, 4)
    off = 10
    classes = []
    for _ in range(n_classes):
        if off + 1 > len(raw):
            raise Truncated("class table incomplete")
        (ln,) = struct.unpack_from("<B", raw, off)
        off += 1
        if off + ln > len(raw):
            raise Truncated("class table incomplete")
        classes.append(raw[off : off + ln].decode("utf-8"))
        off += ln

    rec_size = 4 + VALUES_PER_WINDOW * 4
    if off + count * rec_size > len(raw):
        raise Truncated(
            f"expected {count} windows ({count * rec_size} bytes), "
            f"only {len(raw) - off} bytes remain"
        )
    windows = []
    for _ in range(count):
        class_id, subject_idx = struct.unpack_from("<HH", raw, off)
        off += 4
        if class_id >= n_classes:
            raise Truncated(f"class id {class_id} out of range")
        data = np.frombuffer(raw, dtype="<f4", count=VALUES_PER_WINDOW, offset=off)
        off += VALUES_PER_WINDOW * 4
        windows.append(
            Window(
                data=data.reshape(WINDOW_LEN, N_CHANNELS).astype(np.float64),
                subject_id=str(subject_idx),
                label=classes[class_id],
            )
        )
    return windows, classes
