"""IMU signal pipeline: recordings -> resampled streams -> fixed 60x6 windows.

Every model input in this project is a 3-second window at 20 Hz: 60 time
steps by 6 channels (ax, ay, az, gx, gy, gz). Recordings from any source
are linearly resampled onto a uniform 20 Hz grid, sliced with 50 % overlap,
and z-scored per channel with statistics fitted on the generalized training
split only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BadTimestamps,
    EmptyDataset,
    EmptyRecording,
    TooFewSubjects,
)

TARGET_HZ = 20.0
WINDOW_LEN = 60           # 3 s at 20 Hz
WINDOW_STRIDE = 30        # 50 % overlap
N_CHANNELS = 6
EPSILON_STD = 1e-6        # floor applied to per-channel std
HELD_OUT_SUBJECTS = 4     # personalized section size


@dataclass(frozen=True)
class Recording:
    """One continuous single-activity capture from one subject.

    ``samples`` is a float64 array of shape (n, 7): column 0 is the
    timestamp in seconds, columns 1..6 the accel/gyro channels. Rows are
    ordered by timestamp; NaN rows are rejected at ingestion.
    """

    subject_id: str
    class_label: str
    rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 2 or s.shape[1] != 7:
            raise ValueError(f"samples must be (n, 7), got {s.shape}")
        if self.rate_hz <= 0:
            raise ValueError("rate_hz must be > 0")
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def channels(self) -> np.ndarray:
        return self.samples[:, 1:]

    def __len__(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class Window:
    """One model input: 60 time steps x 6 channels, plus provenance."""

    data: np.ndarray
    subject_id: str
    label: str | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.shape != (WINDOW_LEN, N_CHANNELS):
            raise ValueError(f"window must be {WINDOW_LEN}x{N_CHANNELS}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("window contains non-finite values")
        object.__setattr__(self, "data", d)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel mean/std in post-resample units; std floored at EPSILON_STD."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=np.float64).reshape(N_CHANNELS)
        s = np.asarray(self.std, dtype=np.float64).reshape(N_CHANNELS)
        if np.any(s < EPSILON_STD):
            raise ValueError("std below floor")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)

    def to_list(self) -> list[float]:
        return [*map(float, self.mean), *map(float, self.std)]

    @classmethod
    def from_list(cls, values) -> "ChannelStats":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (2 * N_CHANNELS,):
            raise ValueError(f"expected {2 * N_CHANNELS} values, got {v.shape}")
        return cls(mean=v[:N_CHANNELS], std=v[N_CHANNELS:])


@dataclass
class DatasetSplit:
    """Subject-level partition: N-4 generalized subjects, 4 personalized."""

    generalized: list[Window] = field(default_factory=list)
    personalized: dict[str, list[Window]] = field(default_factory=dict)

    @property
    def generalized_subjects(self) -> set[str]:
        return {w.subject_id for w in self.generalized}

    @property
    def personalized_subjects(self) -> set[str]:
        return set(self.personalized)


def resample(rec: Recording, target_hz: float = TARGET_HZ) -> Recording:
    """Linearly interpolate a recording onto a uniform grid at target_hz.

    The grid spans [t_first, t_last] with spacing 1/target_hz; each channel
    is interpolated independently between its two nearest source samples,
    so constant channels are preserved exactly.
    """
    if target_hz <= 0:
        raise ValueError("target_hz must be > 0")
    if len(rec) < 2:
        raise EmptyRecording(f"need >= 2 samples to resample, got {len(rec)}")
    t = rec.times
    if np.any(np.diff(t) < 0):
        raise BadTimestamps("timestamps must be monotonically non-decreasing")

    step = 1.0 / target_hz
    span = t[-1] - t[0]
    n_out = int(np.floor(span * target_hz + 1e-9)) + 1
    grid = t[0] + step * np.arange(n_out)

    out = np.empty((n_out, 7), dtype=np.float64)
    out[:, 0] = grid
    for c in range(1, 7):
        out[:, c] = np.interp(grid, t, rec.samples[:, c])
    return replace(rec, rate_hz=float(target_hz), samples=out)


def make_windows(rec: Recording) -> list[Window]:
    """Slice a 20 Hz recording into 60-sample windows with stride 30.

    Count follows floor((L - 60) / 30) + 1 for L >= 60, else zero; the
    trailing remainder shorter than one stride is discarded.
    """
    if abs(rec.rate_hz - TARGET_HZ) > 1e-9:
        raise ValueError(f"windows are defined at {TARGET_HZ} Hz, got {rec.rate_hz}")
    n = len(rec)
    if n < WINDOW_LEN:
        return []
    chans = rec.channels
    out = []
    for start in range(0, n - WINDOW_LEN + 1, WINDOW_STRIDE):
        out.append(
            Window(
                data=chans[start : start + WINDOW_LEN].copy(),
                subject_id=rec.subject_id,
                label=rec.class_label,
            )
        )
    return out


def window_count(n_samples: int) -> int:
    """Windows produced from an n-sample 20 Hz stream (0 when too short)."""
    if n_samples < WINDOW_LEN:
        return 0
    return (n_samples - WINDOW_LEN) // WINDOW_STRIDE + 1


def fit_channel_stats(windows: list[Window]) -> ChannelStats:
    """Population mean/std per channel over all rows of all windows."""
    if not windows:
        raise EmptyDataset("cannot fit stats on zero windows")
    stacked = np.concatenate([w.data for w in windows], axis=0)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), EPSILON_STD)
    return ChannelStats(mean=mean, std=std)


def normalize(w: Window, stats: ChannelStats) -> Window:
    """Per-channel z-score; label and subject are preserved."""
    return Window(
        data=(w.data - stats.mean) / stats.std,
        subject_id=w.subject_id,
        label=w.label,
    )


def normalize_all(windows: list[Window], stats: ChannelStats) -> list[Window]:
    return [normalize(w, stats) for w in windows]


def slice_dataset(windows: list[Window], seed: int) -> DatasetSplit:
    """Split windows by subject: a seeded draw of 4 subjects is held out.

    The draw depends only on the sorted subject set and the seed, so the
    same dataset and seed always produce the same partition.
    """
    subjects = sorted({w.subject_id for w in windows})
    if len(subjects) < HELD_OUT_SUBJECTS + 1:
        raise TooFewSubjects(
            f"need >= {HELD_OUT_SUBJECTS + 1} subjects, got {len(subjects)}"
        )
    rng = np.random.default_rng(seed)
    held = set(rng.choice(subjects, size=HELD_OUT_SUBJECTS, replace=False).tolist())

    split = DatasetSplit(personalized={s: [] for s in sorted(held)})
    for w in windows:
        if w.subject_id in held:
            split.personalized[w.subject_id].append(w)
        else:
            split.generalized.append(w)
    return split
