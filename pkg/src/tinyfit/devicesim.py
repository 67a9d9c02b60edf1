"""Software wristband: streams IMU samples, infers locally, polls for OTA.

The simulator keeps a 60-sample ring buffer fed at 20 Hz of device time;
every 30 fresh samples it assembles a window, runs the integer runtime,
and posts the resulting event. A firmware poll runs on its own cadence and
hot-swaps the model only after the bundle passes CRC verification. All
scheduling happens on one deterministic timeline; a virtual clock replays
minutes of wear in milliseconds, a wall clock paces it by the configured
time scale. Inference never leaves the device: in steady state the only
traffic is inference events out and firmware polls in.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import CrcMismatch, ServerUnreachable, TinyFitError, TooShort, Truncated
from .runtime import MicroEngine
from .signal import N_CHANNELS, TARGET_HZ, WINDOW_LEN, WINDOW_STRIDE
from .synthetic import SyntheticProfile, bandx_profile, synth_samples, BANDX_CLASSES
from .twin import read_twin

logger = logging.getLogger(__name__)

EVENT_BUFFER_LIMIT = 10_000
MIN_RECORD_SECONDS = 3.0


@dataclass(frozen=True)
class DeviceConfig:
    device_id: str
    token: str
    server_url: str
    poll_interval_s: float = 5.0
    time_scale: float = 1.0
    stream: dict = field(default_factory=dict)
    initial_bundle_path: str | None = None
    event_log_path: str | None = None
    arena_bytes: int = 65536

    def __post_init__(self):
        if self.poll_interval_s <= 0:
            raise ValueError("poll_interval_s must be > 0")
        if self.time_scale <= 0:
            raise ValueError("time_scale must be > 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "DeviceConfig":
        with open(path) as fh:
            return cls(**json.load(fh))


class VirtualClock:
    """Device time advances instantly; runs are reproducible."""

    def __init__(self, start: float = 0.0):
        self._now = start

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        self._now += max(0.0, seconds)


class WallClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


# --- stream sources ---

class SyntheticStream:
    """Endless signature stream cycling through classes on a fixed schedule."""

    def __init__(
        self,
        seed: int = 0,
        seconds_per_class: float = 12.0,
        subject_id: str = "wearer",
        profile: SyntheticProfile | None = None,
    ):
        self.profile = profile or bandx_profile(seed)
        self.subject_id = subject_id
        self.block = max(1, int(seconds_per_class * TARGET_HZ))
        self.i = 0

    def next_sample(self) -> np.ndarray | None:
        block_idx, offset = divmod(self.i, self.block)
        class_idx = block_idx % self.profile.n_classes
        row = synth_samples(
            self.profile,
            self.subject_id,
            class_idx,
            n_samples=1,
            t0=offset / TARGET_HZ,
            session=block_idx,
        )[0]
        self.i += 1
        return row[1:]


class TwinStream:
    """Replay a TWIN dataset as a sample stream.

    Consecutive dataset windows overlap by half, so after the first full
    window only the second half of each subsequent one is fresh signal.
    """

    def __init__(self, path: str, subject_filter: str | None = None, loop: bool = False):
        windows, _ = read_twin(path)
        if subject_filter is not None:
            windows = [w for w in windows if w.subject_id == subject_filter]
        if not windows:
            raise TinyFitError(f"no windows in {path} for subject {subject_filter!r}")
        rows = [windows[0].data]
        rows += [w.data[WINDOW_STRIDE:] for w in windows[1:]]
        self.rows = np.concatenate(rows, axis=0)
        self.loop = loop
        self.i = 0

    def next_sample(self) -> np.ndarray | None:
        if self.i >= len(self.rows):
            if not self.loop:
                return None
            self.i = 0
        row = self.rows[self.i]
        self.i += 1
        return row


class CsvStream:
    """Raw CSV: one `t, ax, ay, az, gx, gy, gz` line per sample."""

    def __init__(self, path: str):
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = [float(p) for p in line.split(",")]
                if len(parts) != 1 + N_CHANNELS:
                    raise TinyFitError(f"expected 7 values per line, got {len(parts)}")
                rows.append(parts[1:])
        self.rows = np.asarray(rows, dtype=np.float64)
        self.i = 0

    def next_sample(self) -> np.ndarray | None:
        if self.i >= len(self.rows):
            return None
        row = self.rows[self.i]
        self.i += 1
        return row


def make_stream(spec: dict):
    kind = spec.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticStream(
            seed=spec.get("seed", 0),
            seconds_per_class=spec.get("seconds_per_class", 12.0),
            subject_id=spec.get("subject_id", "wearer"),
        )
    if kind == "twin":
        return TwinStream(
            spec["path"], spec.get("subject_filter"), spec.get("loop", False)
        )
    if kind == "csv":
        return CsvStream(spec["path"])
    raise TinyFitError(f"unknown stream kind {kind!r}")


# --- server client ---

class ServerClient:
    def __init__(self, base_url: str, device_id: str, token: str, timeout: float = 5.0):
        self.base = base_url.rstrip("/")
        self.device_id = device_id
        self.timeout = timeout
        self.session = requests.Session()
        self.session.headers["Authorization"] = f"Bearer {token}"

    def check_reachable(self) -> None:
        try:
            r = self.session.get(
                f"{self.base}/api/devices/{self.device_id}", timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise ServerUnreachable(f"cannot reach {self.base}: {exc}") from exc
        if r.status_code != 200:
            raise ServerUnreachable(
                f"server rejected device {self.device_id}: {r.status_code} {r.text}"
            )

    def poll_firmware(self, have_version: int) -> tuple[int, bytes] | None:
        r = self.session.get(
            f"{self.base}/api/devices/{self.device_id}/firmware",
            params={"have_version": have_version},
            timeout=self.timeout,
        )
        if r.status_code == 204:
            return None
        r.raise_for_status()
        return int(r.headers["X-Bundle-Version"]), r.content

    def post_event(self, event: dict) -> None:
        r = self.session.post(
            f"{self.base}/api/devices/{self.device_id}/inferences",
            json=event,
            timeout=self.timeout,
        )
        r.raise_for_status()

    def upload_recording(
        self, class_name: str, rate_hz: float, samples: np.ndarray, key: str
    ) -> dict:
        r = self.session.post(
            f"{self.base}/api/devices/{self.device_id}/recordings",
            json={
                "class_name": class_name,
                "rate_hz": rate_hz,
                "samples": samples.tolist(),
                "idempotency_key": key,
            },
            timeout=max(self.timeout, 30.0),
        )
        r.raise_for_status()
        return r.json()


# --- the simulator ---

class DeviceSimulator:
    def __init__(self, config: DeviceConfig, clock=None, client: ServerClient | None = None):
        self.config = config
        self.clock = clock if clock is not None else WallClock()
        self.client = client or ServerClient(
            config.server_url, config.device_id, config.token
        )
        self.engine = MicroEngine(config.arena_bytes)
        self.stream = make_stream(config.stream)
        self.ring = np.zeros((WINDOW_LEN, N_CHANNELS), dtype=np.float64)
        self.filled = 0
        self.fresh = 0
        self.pending: deque[dict] = deque(maxlen=EVENT_BUFFER_LIMIT)
        self.events: list[dict] = []
        self._log_fh = None

    @property
    def model_version(self) -> int:
        return self.engine.model.version if self.engine.model is not None else 0

    def run(
        self,
        max_device_seconds: float | None = None,
        max_events: int | None = None,
        stop=None,
    ) -> list[dict]:
        """Stream, infer, report, and poll until a stop condition fires."""
        self.client.check_reachable()
        if self.config.initial_bundle_path:
            self.engine.load(Path(self.config.initial_bundle_path).read_bytes())
        if self.config.event_log_path:
            self._log_fh = open(self.config.event_log_path, "a")

        try:
            self._poll_once()
            start = self.clock.now()
            device_t = 0.0
            next_poll = self.config.poll_interval_s
            sample_dt = 1.0 / TARGET_HZ
            while True:
                if stop is not None and stop.is_set():
                    break
                if max_device_seconds is not None and device_t >= max_device_seconds:
                    break
                if max_events is not None and len(self.events) >= max_events:
                    break

                device_t += sample_dt
                self._pace(start, device_t)
                sample = self.stream.next_sample()
                if sample is None:
                    break
                self._push_sample(sample, device_t)

                if device_t + 1e-9 >= next_poll:
                    self._poll_once()
                    next_poll += self.config.poll_interval_s
            return list(self.events)
        finally:
            if self._log_fh is not None:
                self._log_fh.close()
                self._log_fh = None

    def _pace(self, start: float, device_t: float) -> None:
        target = start + device_t / self.config.time_scale
        self.clock.sleep(target - self.clock.now())

    def _push_sample(self, sample: np.ndarray, device_t: float) -> None:
        self.ring = np.roll(self.ring, -1, axis=0)
        self.ring[-1] = sample
        self.filled = min(self.filled + 1, WINDOW_LEN)
        self.fresh += 1
        if self.filled < WINDOW_LEN or self.fresh < WINDOW_STRIDE:
            return
        self.fresh = 0
        if self.engine.model is None:
            return
        result = self.engine.infer(self.ring)
        event = {
            "timestamp": device_t,
            "class_name": result.class_name,
            "confidence": result.confidence,
            "model_version": result.model_version,
        }
        record = {**event, "class_id": result.class_id, "latency_us": result.latency_us}
        self.events.append(record)
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(record) + "\n")
            self._log_fh.flush()
        self._send_events(event)

    def _send_events(self, new_event: dict | None = None) -> None:
        if new_event is not None:
            self.pending.append(new_event)
        while self.pending:
            head = self.pending[0]
            try:
                self.client.post_event(head)
            except (requests.RequestException, OSError):
                logger.debug("event upload failed; %d buffered", len(self.pending))
                return
            self.pending.popleft()

    def _poll_once(self) -> None:
        self._send_events()
        try:
            update = self.client.poll_firmware(self.model_version)
        except (requests.RequestException, OSError):
            logger.debug("firmware poll failed; keeping version %d", self.model_version)
            return
        if update is None:
            return
        version, data = update
        try:
            self.engine.load(data)
            logger.info("hot-swapped to bundle version %d", self.engine.model.version)
        except (CrcMismatch, Truncated, TinyFitError) as exc:
            logger.warning("rejected bundle version %d: %s", version, exc)

    # --- labeled capture ---

    def record_mode(self, class_name: str, duration_s: float, retries: int = 3) -> dict:
        """Capture ``duration_s`` of the stream and upload it labeled."""
        if duration_s < MIN_RECORD_SECONDS:
            raise TooShort(int(MIN_RECORD_SECONDS * TARGET_HZ), int(duration_s * TARGET_HZ))
        self.client.check_reachable()
        n = int(round(duration_s * TARGET_HZ))
        rows = np.empty((n, 1 + N_CHANNELS), dtype=np.float64)
        for i in range(n):
            sample = self.stream.next_sample()
            if sample is None:
                raise TooShort(n, i)
            rows[i, 0] = i / TARGET_HZ
            rows[i, 1:] = sample

        key = uuid.uuid4().hex
        delay = 0.2
        for attempt in range(retries):
            try:
                return self.client.upload_recording(class_name, TARGET_HZ, rows, key)
            except (requests.RequestException, OSError):
                if attempt == retries - 1:
                    raise
                self.clock.sleep(delay)
                delay *= 2
        raise AssertionError("unreachable")
