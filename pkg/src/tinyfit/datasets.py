"""Loaders for the published WISDM and PAMAP2 raw layouts.

Both produce 6-channel (accel xyz + gyro xyz) single-activity recordings
at the dataset's native rate; resampling to the common 20 Hz grid happens
downstream. Malformed rows are counted, skipped, and logged.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .errors import DatasetNotFound
from .signal import Recording

logger = logging.getLogger(__name__)

# WISDM activity codes, from the dataset's activity_key.txt ("N" is unused).
WISDM_ACTIVITIES = {
    "A": "walking",
    "B": "jogging",
    "C": "stairs",
    "D": "sitting",
    "E": "standing",
    "F": "typing",
    "G": "brushing_teeth",
    "H": "eating_soup",
    "I": "eating_chips",
    "J": "eating_pasta",
    "K": "drinking",
    "L": "eating_sandwich",
    "M": "kicking",
    "O": "catching",
    "P": "dribbling",
    "Q": "writing",
    "R": "clapping",
    "S": "folding_clothes",
}

WISDM_RATE_HZ = 20.0
PAMAP2_RATE_HZ = 100.0

# PAMAP2 protocol activity ids retained (id 0 is the transient class).
PAMAP2_ACTIVITIES = {
    1: "lying",
    2: "sitting",
    3: "standing",
    4: "walking",
    5: "running",
    6: "cycling",
    7: "nordic_walking",
    12: "ascending_stairs",
    13: "descending_stairs",
    16: "vacuum_cleaning",
    17: "ironing",
    24: "rope_jumping",
}

# PAMAP2 column indices (0-based): hand-IMU +-16g accel and gyro triplets.
_PAMAP2_ACC_COLS = (4, 5, 6)
_PAMAP2_GYRO_COLS = (10, 11, 12)
_PAMAP2_N_COLS = 54


def load_wisdm(path: str | Path) -> list[Recording]:
    """Load smartwatch accel+gyro streams joined per (subject, activity).

    Expects the published layout: ``<root>/raw/watch/accel/data_<s>_accel_watch.txt``
    and the matching gyro files. Gyro channels are interpolated onto the
    accel timeline over their overlapping span; long gaps split a stream
    into separate recordings.
    """
    root = _find_wisdm_root(Path(path))
    accel_dir = root / "raw" / "watch" / "accel"
    gyro_dir = root / "raw" / "watch" / "gyro"

    recordings: list[Recording] = []
    skipped = 0
    for accel_file in sorted(accel_dir.glob("data_*_accel_watch.txt")):
        subject = accel_file.name.split("_")[1]
        gyro_file = gyro_dir / f"data_{subject}_gyro_watch.txt"
        if not gyro_file.exists():
            logger.warning("subject %s: no gyro file, skipping", subject)
            continue
        accel, bad_a = _parse_wisdm_file(accel_file)
        gyro, bad_g = _parse_wisdm_file(gyro_file)
        skipped += bad_a + bad_g
        for code in sorted(set(accel) & set(gyro)):
            recordings.extend(
                _join_streams(
                    subject, WISDM_ACTIVITIES[code], accel[code], gyro[code],
                    rate_hz=WISDM_RATE_HZ,
                )
            )
    if not recordings:
        raise DatasetNotFound(f"no WISDM recordings under {path}")
    if skipped:
        logger.info("WISDM: skipped %d malformed rows", skipped)
    return recordings


def _find_wisdm_root(path: Path) -> Path:
    for candidate in (path, path / "wisdm-dataset"):
        if (candidate / "raw" / "watch" / "accel").is_dir():
            return candidate
    for raw_dir in path.rglob("raw"):
        if (raw_dir / "watch" / "accel").is_dir():
            return raw_dir.parent
    raise DatasetNotFound(f"WISDM layout not found under {path}")


def _parse_wisdm_file(path: Path) -> tuple[dict[str, np.ndarray], int]:
    """Parse one sensor file into {activity_code: (n, 4) [t_ns, x, y, z]}."""
    rows: dict[str, list[list[float]]] = {}
    skipped = 0
    with path.open() as fh:
        for line in fh:
            line = line.strip().rstrip(";")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                skipped += 1
                continue
            code = parts[1].strip().upper()
            if code not in WISDM_ACTIVITIES:
                skipped += 1
                continue
            try:
                vals = [float(parts[2]), float(parts[3]), float(parts[4]), float(parts[5])]
            except ValueError:
                skipped += 1
                continue
            if not all(np.isfinite(v) for v in vals):
                skipped += 1
                continue
            rows.setdefault(code, []).append(vals)

    out = {}
    for code, items in rows.items():
        arr = np.asarray(items, dtype=np.float64)
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        # collapse duplicate timestamps so interpolation stays well defined
        keep = np.concatenate(([True], np.diff(arr[:, 0]) > 0))
        out[code] = arr[keep]
    return out, skipped


def _join_streams(
    subject: str,
    label: str,
    accel: np.ndarray,
    gyro: np.ndarray,
    rate_hz: float,
    max_gap_s: float = 10.0,
) -> list[Recording]:
    """Interpolate gyro onto the accel timeline over the overlapping span."""
    t0 = max(accel[0, 0], gyro[0, 0])
    t1 = min(accel[-1, 0], gyro[-1, 0])
    if t1 <= t0:
        return []
    acc = accel[(accel[:, 0] >= t0) & (accel[:, 0] <= t1)]
    if acc.shape[0] < 2 or gyro.shape[0] < 2:
        return []

    t_s = (acc[:, 0] - acc[0, 0]) / 1e9
    gyro_t = (gyro[:, 0] - acc[0, 0]) / 1e9
    samples = np.empty((acc.shape[0], 7), dtype=np.float64)
    samples[:, 0] = t_s
    samples[:, 1:4] = acc[:, 1:4]
    for i in range(3):
        samples[:, 4 + i] = np.interp(t_s, gyro_t, gyro[:, 1 + i])

    recs = []
    for lo, hi in _split_on_gaps(t_s, max_gap_s):
        if hi - lo < 2:
            continue
        seg = samples[lo:hi].copy()
        seg[:, 0] -= seg[0, 0]
        recs.append(
            Recording(subject_id=subject, class_label=label, rate_hz=rate_hz, samples=seg)
        )
    return recs


def _split_on_gaps(times: np.ndarray, max_gap_s: float) -> list[tuple[int, int]]:
    if times.shape[0] == 0:
        return []
    breaks = np.flatnonzero(np.diff(times) > max_gap_s) + 1
    bounds = [0, *breaks.tolist(), times.shape[0]]
    return list(zip(bounds[:-1], bounds[1:]))


def load_pamap2(path: str | Path) -> list[Recording]:
    """Load the wrist ("hand") IMU accel+gyro columns of PAMAP2.

    Expects ``<root>/Protocol/subject10*.dat``. Rows with the transient
    activity id 0 and rows with missing channel values are dropped; each
    contiguous run of one activity becomes its own recording.
    """
    proto = _find_pamap2_protocol(Path(path))
    files = sorted(proto.glob("subject*.dat"))
    if not files:
        raise DatasetNotFound(f"no subject*.dat under {proto}")

    recordings: list[Recording] = []
    skipped = 0
    for f in files:
        subject = f.stem.replace("subject", "")
        per_activity, bad = _parse_pamap2_file(f)
        skipped += bad
        for act_id in sorted(per_activity):
            arr = per_activity[act_id]
            for lo, hi in _split_on_gaps(arr[:, 0], max_gap_s=0.5):
                if hi - lo < 2:
                    continue
                seg = arr[lo:hi].copy()
                seg[:, 0] -= seg[0, 0]
                recordings.append(
                    Recording(
                        subject_id=subject,
                        class_label=PAMAP2_ACTIVITIES[act_id],
                        rate_hz=PAMAP2_RATE_HZ,
                        samples=seg,
                    )
                )
    if not recordings:
        raise DatasetNotFound(f"no PAMAP2 recordings under {path}")
    if skipped:
        logger.info("PAMAP2: skipped %d rows (transient, malformed, or missing)", skipped)
    return recordings


def _find_pamap2_protocol(path: Path) -> Path:
    for candidate in (path / "Protocol", path, path / "PAMAP2_Dataset" / "Protocol"):
        if candidate.is_dir() and any(candidate.glob("subject*.dat")):
            return candidate
    raise DatasetNotFound(f"PAMAP2 Protocol directory not found under {path}")


def _parse_pamap2_file(path: Path) -> tuple[dict[int, np.ndarray], int]:
    per_activity: dict[int, list[np.ndarray]] = {}
    skipped = 0
    with path.open() as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != _PAMAP2_N_COLS:
                if parts:
                    skipped += 1
                continue
            try:
                act_id = int(float(parts[1]))
                t = float(parts[0])
                row = [float(parts[c]) for c in (*_PAMAP2_ACC_COLS, *_PAMAP2_GYRO_COLS)]
            except ValueError:
                skipped += 1
                continue
            if act_id not in PAMAP2_ACTIVITIES:
                skipped += 1
                continue
            if not (np.isfinite(t) and all(np.isfinite(v) for v in row)):
                skipped += 1
                continue
            per_activity.setdefault(act_id, []).append(np.asarray([t, *row]))

    return {k: np.vstack(v) for k, v in per_activity.items()}, skipped
