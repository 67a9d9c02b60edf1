"""Synthetic IMU signals with per-class signatures and per-subject traits.

Each activity class occupies its own frequency band with a fixed random
per-channel amplitude pattern; each subject carries stable traits (channel
gains, a frequency multiplier, an orientation rotation of the accel and
gyro triplets, a noise level). Class signatures are what the classifier
must learn; subject traits are what personalization must absorb.

Profiles tune how strong the subject shift is, which lets the same
generator mimic an easy crowd-sourced corpus or a messy one.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .signal import Recording

BANDX_CLASSES = [
    "walking",
    "jogging",
    "cycling",
    "typing",
    "writing",
    "stairs_up",
    "stairs_down",
]


@dataclass(frozen=True)
class SyntheticProfile:
    """Knobs controlling class separability and subject-to-subject shift."""

    n_classes: int
    seed: int = 0
    base_freq: float = 0.6
    freq_step: float = 0.45
    harmonic: float = 2.6
    gain_spread: float = 0.25     # per-subject channel gain in U(1-s, 1+s)
    freq_jitter: float = 0.04     # per-subject frequency multiplier in U(1-j, 1+j)
    rotation_deg: float = 0.0     # per-subject wrist-orientation rotation
    noise_std: float = 0.3
    bias_spread: float = 0.2      # per-subject static channel offset
    freq_wobble: float = 0.0      # per-(subject, class) band deviation, < 0.5 steps
    amp_wobble: float = 0.0       # per-(subject, class, channel) amplitude jitter


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def class_signature(profile: SyntheticProfile, class_idx: int):
    """Fixed per-class frequency, harmonic mix, and channel amplitudes."""
    if not 0 <= class_idx < profile.n_classes:
        raise ValueError(f"class index {class_idx} out of range")
    rng = np.random.default_rng(np.random.SeedSequence([profile.seed, 101, class_idx]))
    freq = profile.base_freq + profile.freq_step * class_idx
    amps = rng.uniform(0.35, 1.6, size=6)
    harm_amps = rng.uniform(0.1, 0.6, size=6)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=6)
    return freq, amps, harm_amps, phases


def subject_traits(profile: SyntheticProfile, subject_id: str):
    """Stable per-subject gains, frequency multiplier, rotation, noise, bias."""
    rng = np.random.default_rng(
        np.random.SeedSequence([profile.seed, 202, _stable_hash(subject_id)])
    )
    gains = rng.uniform(1.0 - profile.gain_spread, 1.0 + profile.gain_spread, size=6)
    freq_mult = rng.uniform(1.0 - profile.freq_jitter, 1.0 + profile.freq_jitter)
    bias = rng.uniform(-profile.bias_spread, profile.bias_spread, size=6)
    noise = profile.noise_std * rng.uniform(0.7, 1.3)

    rots = []
    for _ in range(2):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(rng.uniform(-profile.rotation_deg, profile.rotation_deg))
        rots.append(_rodrigues(axis, angle))
    return gains, freq_mult, rots, noise, bias


def _rodrigues(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation by ``angle`` around ``axis``: how a band sits on the wrist."""
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def pair_traits(profile: SyntheticProfile, subject_id: str, class_idx: int):
    """How this subject performs this class: stable across sessions.

    The frequency deviation stays under half a class step so a user's
    activities remain mutually separable even when they stray into a
    neighboring band.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [profile.seed, 404, _stable_hash(subject_id), class_idx]
        )
    )
    freq_dev = rng.uniform(-profile.freq_wobble, profile.freq_wobble)
    amp_mults = rng.uniform(1.0 - profile.amp_wobble, 1.0 + profile.amp_wobble, size=6)
    return freq_dev, amp_mults


def synth_samples(
    profile: SyntheticProfile,
    subject_id: str,
    class_idx: int,
    n_samples: int,
    rate_hz: float = 20.0,
    t0: float = 0.0,
    session: int = 0,
) -> np.ndarray:
    """Generate (n, 7) rows of [t, ax..gz] for one subject doing one class.

    ``session`` decorrelates the noise between repeated captures of the
    same (subject, class) pair.
    """
    freq, amps, harm_amps, phases = class_signature(profile, class_idx)
    gains, freq_mult, rots, noise, bias = subject_traits(profile, subject_id)
    freq_dev, amp_mults = pair_traits(profile, subject_id, class_idx)
    rng = np.random.default_rng(
        np.random.SeedSequence(
            [profile.seed, 303, _stable_hash(subject_id), class_idx, session]
        )
    )

    t = t0 + np.arange(n_samples) / rate_hz
    f = (freq + profile.freq_step * freq_dev) * freq_mult
    w = 2.0 * np.pi * f
    amps = amps * amp_mults
    harm_amps = harm_amps * amp_mults
    chans = np.empty((n_samples, 6), dtype=np.float64)
    for ch in range(6):
        chans[:, ch] = amps[ch] * np.sin(w * t + phases[ch]) + harm_amps[ch] * np.sin(
            profile.harmonic * w * t + 1.7 * phases[ch]
        )
    chans = chans @ _block_rotation(rots)
    chans *= gains
    chans += bias
    chans += rng.normal(0.0, noise, size=chans.shape)

    out = np.empty((n_samples, 7), dtype=np.float64)
    out[:, 0] = t
    out[:, 1:] = chans
    return out


def _block_rotation(rots) -> np.ndarray:
    block = np.zeros((6, 6))
    block[:3, :3] = rots[0]
    block[3:, 3:] = rots[1]
    # applied on the right of an (n, 6) row matrix
    return block.T


def synth_recording(
    profile: SyntheticProfile,
    subject_id: str,
    class_idx: int,
    class_name: str,
    duration_s: float,
    rate_hz: float = 20.0,
    session: int = 0,
) -> Recording:
    n = int(round(duration_s * rate_hz))
    samples = synth_samples(
        profile, subject_id, class_idx, n, rate_hz=rate_hz, session=session
    )
    return Recording(
        subject_id=subject_id,
        class_label=class_name,
        rate_hz=rate_hz,
        samples=samples,
    )


def bandx_profile(seed: int = 0) -> SyntheticProfile:
    """Moderate subject shift: generalization suffers, fine-tuning recovers
    most of it, landing between the two generalized measurements."""
    return SyntheticProfile(
        n_classes=len(BANDX_CLASSES),
        seed=seed,
        gain_spread=0.5,
        freq_jitter=0.05,
        rotation_deg=120.0,
        noise_std=0.4,
        freq_wobble=0.35,
        amp_wobble=0.4,
    )


def bandx_like_recordings(
    n_subjects: int = 16,
    seconds_per_class: float = 90.0,
    seed: int = 0,
) -> list[Recording]:
    """A 16-subject, 7-class corpus shaped like the wristband study."""
    profile = bandx_profile(seed)
    recs = []
    for s in range(n_subjects):
        subject = f"band{s:02d}"
        for ci, cname in enumerate(BANDX_CLASSES):
            recs.append(
                synth_recording(profile, subject, ci, cname, seconds_per_class)
            )
    return recs
