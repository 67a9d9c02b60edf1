"""Write synthetic corpora in the published WISDM / PAMAP2 raw layouts.

The real datasets are not redistributable inside this repo, so tests
exercise the loaders against generated files that follow the published
formats exactly: WISDM's per-sensor comma lines with nanosecond timestamps
and trailing semicolons, PAMAP2's 54-column space-separated .dat files
with transient activity-0 blocks and NaN dropouts.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from tinyfit.datasets import PAMAP2_ACTIVITIES, WISDM_ACTIVITIES
from tinyfit.synthetic import SyntheticProfile, synth_samples

WISDM_SUBJECTS = [str(s) for s in range(1600, 1651)]  # 51 subjects
PAMAP2_SUBJECTS = [f"10{i}" for i in range(1, 10)]    # 9 subjects


def wisdm_profile(seed: int = 1) -> SyntheticProfile:
    return SyntheticProfile(
        n_classes=len(WISDM_ACTIVITIES),
        seed=seed,
        freq_step=0.42,
        gain_spread=0.5,
        freq_jitter=0.05,
        rotation_deg=180.0,
        noise_std=0.45,
        freq_wobble=0.35,
        amp_wobble=0.4,
    )


def pamap2_profile(seed: int = 2) -> SyntheticProfile:
    return SyntheticProfile(
        n_classes=len(PAMAP2_ACTIVITIES),
        seed=seed,
        gain_spread=0.5,
        freq_jitter=0.05,
        rotation_deg=180.0,
        noise_std=0.45,
        freq_wobble=0.4,
        amp_wobble=0.45,
    )


def write_wisdm(
    root: Path,
    windows_per_pair: int = 30,
    seed: int = 1,
    malformed_rows: int = 3,
) -> Path:
    """Create <root>/wisdm-dataset/raw/watch/{accel,gyro}/data_*.txt."""
    profile = wisdm_profile(seed)
    accel_dir = root / "wisdm-dataset" / "raw" / "watch" / "accel"
    gyro_dir = root / "wisdm-dataset" / "raw" / "watch" / "gyro"
    accel_dir.mkdir(parents=True, exist_ok=True)
    gyro_dir.mkdir(parents=True, exist_ok=True)

    n_samples = windows_per_pair * 30 + 30
    codes = sorted(WISDM_ACTIVITIES)
    for subject in WISDM_SUBJECTS:
        accel_lines: list[str] = []
        gyro_lines: list[str] = []
        t_ns = 10_000_000_000_000  # arbitrary epoch offset
        for class_idx, code in enumerate(codes):
            rows = synth_samples(profile, subject, class_idx, n_samples, rate_hz=20.0)
            for i in range(n_samples):
                ts = t_ns + i * 50_000_000  # 20 Hz in nanoseconds
                a = rows[i, 1:4]
                g = rows[i, 4:7]
                accel_lines.append(
                    f"{subject},{code},{ts},{a[0]:.6f},{a[1]:.6f},{a[2]:.6f};"
                )
                gyro_lines.append(
                    f"{subject},{code},{ts},{g[0]:.6f},{g[1]:.6f},{g[2]:.6f};"
                )
            t_ns += n_samples * 50_000_000 + 3_600_000_000_000  # 1 h between pairs
        if subject == WISDM_SUBJECTS[0]:
            for _ in range(malformed_rows):
                accel_lines.append("garbage,row,without,enough")
                gyro_lines.append(f"{subject},Z,123,nan,0.0,0.0;")
        (accel_dir / f"data_{subject}_accel_watch.txt").write_text(
            "\n".join(accel_lines) + "\n"
        )
        (gyro_dir / f"data_{subject}_gyro_watch.txt").write_text(
            "\n".join(gyro_lines) + "\n"
        )
    return root


def write_pamap2(
    root: Path,
    seed: int = 2,
    min_windows: int = 26,
    extra_windows: int = 10,
    dropout_rate: float = 0.002,
) -> Path:
    """Create <root>/Protocol/subject10*.dat with non-uniform pair sizes."""
    profile = pamap2_profile(seed)
    proto = root / "Protocol"
    proto.mkdir(parents=True, exist_ok=True)

    # columns 0..12 written explicitly, 13..53 are NaN padding
    tail = " " + " ".join(["NaN"] * 41)
    act_ids = sorted(PAMAP2_ACTIVITIES)
    for s_idx, subject in enumerate(PAMAP2_SUBJECTS):
        rng = np.random.default_rng(seed * 1000 + s_idx)
        lines: list[str] = []
        t = 10.0
        for class_idx, act_id in enumerate(act_ids):
            wpp = min_windows + int(rng.integers(0, extra_windows))
            n20 = wpp * 30 + 30
            n100 = n20 * 5  # written at the native 100 Hz
            rows = synth_samples(
                profile, subject, class_idx, n100, rate_hz=100.0
            )
            drop = rng.random(n100) < dropout_rate
            rows[drop, 1:4] = np.nan
            for i in range(n100):
                a0, a1, a2, g0, g1, g2 = rows[i, 1:7]
                lines.append(
                    f"{t + i * 0.01:.2f} {act_id} NaN NaN "
                    f"{a0:.5f} {a1:.5f} {a2:.5f} NaN NaN NaN "
                    f"{g0:.5f} {g1:.5f} {g2:.5f}{tail}"
                )
            t += n100 * 0.01
            # transient block between activities (activity id 0)
            for i in range(200):
                lines.append(
                    f"{t + i * 0.01:.2f} 0 NaN NaN 0.1 0.1 0.1 NaN NaN NaN "
                    f"0.0 0.0 0.0{tail}"
                )
            t += 2.0
        (proto / f"subject{subject}.dat").write_text("\n".join(lines) + "\n")
    return root
