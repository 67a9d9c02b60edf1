"""Single-file sqlite persistence with write-ahead journaling.

All mutations run inside transactions; bundle publication updates the
bundle blob, the device's current version, and the job row in one commit,
so a poller can never observe a partial publish.
"""

from __future__ import annotations

import secrets
import sqlite3
import threading
import uuid
from pathlib import Path

import numpy as np

from ..errors import JobAlreadyActive
from ..signal import N_CHANNELS, WINDOW_LEN, Window

_SCHEMA = """
CREATE TABLE IF NOT EXISTS users (
    user_id TEXT PRIMARY KEY,
    name    TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS devices (
    device_id       TEXT PRIMARY KEY,
    owner_user_id   TEXT NOT NULL REFERENCES users(user_id),
    token           TEXT NOT NULL,
    linked          INTEGER NOT NULL DEFAULT 0,
    bundle_version  INTEGER NOT NULL DEFAULT 0,
    idempotency_key TEXT UNIQUE
);
CREATE TABLE IF NOT EXISTS device_classes (
    device_id  TEXT NOT NULL REFERENCES devices(device_id),
    class_name TEXT NOT NULL,
    PRIMARY KEY (device_id, class_name)
);
CREATE TABLE IF NOT EXISTS recordings (
    recording_id    TEXT PRIMARY KEY,
    device_id       TEXT NOT NULL REFERENCES devices(device_id),
    class_name      TEXT NOT NULL,
    window_count    INTEGER NOT NULL,
    idempotency_key TEXT,
    UNIQUE (device_id, idempotency_key)
);
CREATE TABLE IF NOT EXISTS windows (
    id           INTEGER PRIMARY KEY AUTOINCREMENT,
    device_id    TEXT NOT NULL REFERENCES devices(device_id),
    recording_id TEXT NOT NULL REFERENCES recordings(recording_id),
    class_name   TEXT NOT NULL,
    data         BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS jobs (
    job_id            TEXT PRIMARY KEY,
    device_id         TEXT NOT NULL REFERENCES devices(device_id),
    status            TEXT NOT NULL CHECK (status IN
                        ('queued', 'running', 'succeeded', 'failed')),
    examples_per_class INTEGER NOT NULL,
    accuracy          REAL,
    bundle_size       INTEGER,
    bundle_version    INTEGER,
    failure_reason    TEXT
);
CREATE TABLE IF NOT EXISTS bundles (
    device_id TEXT NOT NULL REFERENCES devices(device_id),
    version   INTEGER NOT NULL,
    data      BLOB NOT NULL,
    PRIMARY KEY (device_id, version)
);
CREATE TABLE IF NOT EXISTS events (
    id            INTEGER PRIMARY KEY AUTOINCREMENT,
    device_id     TEXT NOT NULL REFERENCES devices(device_id),
    ts            REAL NOT NULL,
    class_name    TEXT NOT NULL,
    confidence    REAL NOT NULL,
    model_version INTEGER NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_events_device_ts ON events(device_id, ts);
CREATE INDEX IF NOT EXISTS idx_windows_device ON windows(device_id, class_name);
"""


class Store:
    def __init__(self, db_path: str | Path):
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(db_path), check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA foreign_keys=ON")
        with self._tx():
            self._conn.executescript(_SCHEMA)

    def close(self) -> None:
        self._conn.close()

    def _tx(self):
        return _Tx(self._conn, self._lock)

    # --- users / devices ---

    def create_user(self, name: str) -> str:
        user_id = uuid.uuid4().hex
        with self._tx():
            self._conn.execute(
                "INSERT INTO users (user_id, name) VALUES (?, ?)", (user_id, name)
            )
        return user_id

    def get_user(self, user_id: str):
        row = self._conn.execute(
            "SELECT user_id, name FROM users WHERE user_id = ?", (user_id,)
        ).fetchone()
        return None if row is None else {"user_id": row[0], "name": row[1]}

    def create_device(self, owner_user_id: str, idempotency_key: str | None):
        with self._tx():
            if idempotency_key is not None:
                row = self._conn.execute(
                    "SELECT device_id, token FROM devices WHERE idempotency_key = ?",
                    (idempotency_key,),
                ).fetchone()
                if row is not None:
                    return {"device_id": row[0], "token": row[1], "created": False}
            device_id = uuid.uuid4().hex
            token = secrets.token_hex(16)
            self._conn.execute(
                "INSERT INTO devices (device_id, owner_user_id, token, idempotency_key)"
                " VALUES (?, ?, ?, ?)",
                (device_id, owner_user_id, token, idempotency_key),
            )
        return {"device_id": device_id, "token": token, "created": True}

    def get_device(self, device_id: str):
        row = self._conn.execute(
            "SELECT device_id, owner_user_id, token, linked, bundle_version"
            " FROM devices WHERE device_id = ?",
            (device_id,),
        ).fetchone()
        if row is None:
            return None
        return {
            "device_id": row[0],
            "owner_user_id": row[1],
            "token": row[2],
            "linked": bool(row[3]),
            "bundle_version": row[4],
        }

    def list_devices(self, owner_user_id: str):
        rows = self._conn.execute(
            "SELECT device_id FROM devices WHERE owner_user_id = ? ORDER BY device_id",
            (owner_user_id,),
        ).fetchall()
        return [self.get_device(r[0]) for r in rows]

    def link_device(self, device_id: str) -> None:
        with self._tx():
            self._conn.execute(
                "UPDATE devices SET linked = 1 WHERE device_id = ?", (device_id,)
            )

    # --- classes / recordings / windows ---

    def add_class(self, device_id: str, class_name: str) -> None:
        with self._tx():
            self._conn.execute(
                "INSERT OR IGNORE INTO device_classes (device_id, class_name)"
                " VALUES (?, ?)",
                (device_id, class_name),
            )

    def device_classes(self, device_id: str) -> list[str]:
        rows = self._conn.execute(
            "SELECT class_name FROM device_classes WHERE device_id = ?"
            " ORDER BY class_name",
            (device_id,),
        ).fetchall()
        return [r[0] for r in rows]

    def find_recording(self, device_id: str, idempotency_key: str):
        row = self._conn.execute(
            "SELECT recording_id, window_count FROM recordings"
            " WHERE device_id = ? AND idempotency_key = ?",
            (device_id, idempotency_key),
        ).fetchone()
        return None if row is None else {"recording_id": row[0], "window_count": row[1]}

    def add_recording(
        self,
        device_id: str,
        class_name: str,
        windows: list[Window],
        idempotency_key: str | None,
    ) -> str:
        recording_id = uuid.uuid4().hex
        with self._tx():
            self._conn.execute(
                "INSERT OR IGNORE INTO device_classes (device_id, class_name)"
                " VALUES (?, ?)",
                (device_id, class_name),
            )
            self._conn.execute(
                "INSERT INTO recordings"
                " (recording_id, device_id, class_name, window_count, idempotency_key)"
                " VALUES (?, ?, ?, ?, ?)",
                (recording_id, device_id, class_name, len(windows), idempotency_key),
            )
            self._conn.executemany(
                "INSERT INTO windows (device_id, recording_id, class_name, data)"
                " VALUES (?, ?, ?, ?)",
                [
                    (device_id, recording_id, class_name,
                     w.data.astype("<f4").tobytes())
                    for w in windows
                ],
            )
        return recording_id

    def window_counts(self, device_id: str) -> dict[str, int]:
        counts = {c: 0 for c in self.device_classes(device_id)}
        rows = self._conn.execute(
            "SELECT class_name, COUNT(*) FROM windows WHERE device_id = ?"
            " GROUP BY class_name",
            (device_id,),
        ).fetchall()
        counts.update({r[0]: r[1] for r in rows})
        return counts

    def device_windows(self, device_id: str) -> list[Window]:
        rows = self._conn.execute(
            "SELECT class_name, data FROM windows WHERE device_id = ? ORDER BY id",
            (device_id,),
        ).fetchall()
        out = []
        for class_name, blob in rows:
            data = np.frombuffer(blob, dtype="<f4").astype(np.float64)
            out.append(
                Window(
                    data=data.reshape(WINDOW_LEN, N_CHANNELS),
                    subject_id=device_id,
                    label=class_name,
                )
            )
        return out

    # --- jobs / bundles ---

    def create_job(self, device_id: str, examples_per_class: int) -> str:
        job_id = uuid.uuid4().hex
        with self._tx():
            active = self._conn.execute(
                "SELECT job_id FROM jobs WHERE device_id = ?"
                " AND status IN ('queued', 'running')",
                (device_id,),
            ).fetchone()
            if active is not None:
                raise JobAlreadyActive(f"job {active[0]} is still active")
            self._conn.execute(
                "INSERT INTO jobs (job_id, device_id, status, examples_per_class)"
                " VALUES (?, ?, 'queued', ?)",
                (job_id, device_id, examples_per_class),
            )
        return job_id

    def get_job(self, job_id: str):
        row = self._conn.execute(
            "SELECT job_id, device_id, status, examples_per_class, accuracy,"
            " bundle_size, bundle_version, failure_reason FROM jobs WHERE job_id = ?",
            (job_id,),
        ).fetchone()
        if row is None:
            return None
        return {
            "job_id": row[0],
            "device_id": row[1],
            "status": row[2],
            "examples_per_class": row[3],
            "accuracy": row[4],
            "bundle_size": row[5],
            "bundle_version": row[6],
            "failure_reason": row[7],
        }

    def latest_job(self, device_id: str):
        row = self._conn.execute(
            "SELECT job_id FROM jobs WHERE device_id = ? ORDER BY rowid DESC LIMIT 1",
            (device_id,),
        ).fetchone()
        return None if row is None else self.get_job(row[0])

    def mark_job_running(self, job_id: str) -> None:
        with self._tx():
            self._conn.execute(
                "UPDATE jobs SET status = 'running' WHERE job_id = ?"
                " AND status = 'queued'",
                (job_id,),
            )

    def mark_job_failed(self, job_id: str, reason: str) -> None:
        with self._tx():
            self._conn.execute(
                "UPDATE jobs SET status = 'failed', failure_reason = ?"
                " WHERE job_id = ? AND status IN ('queued', 'running')",
                (reason, job_id),
            )

    def publish_bundle(
        self, job_id: str, device_id: str, data: bytes, accuracy: float, version: int
    ) -> int:
        """Atomically install the new bundle and finish the job."""
        with self._tx():
            (current,) = self._conn.execute(
                "SELECT bundle_version FROM devices WHERE device_id = ?", (device_id,)
            ).fetchone()
            if version != current + 1:
                raise ValueError(
                    f"version {version} does not follow current {current}"
                )
            self._conn.execute(
                "INSERT INTO bundles (device_id, version, data) VALUES (?, ?, ?)",
                (device_id, version, data),
            )
            self._conn.execute(
                "UPDATE devices SET bundle_version = ? WHERE device_id = ?",
                (version, device_id),
            )
            self._conn.execute(
                "UPDATE jobs SET status = 'succeeded', accuracy = ?, bundle_size = ?,"
                " bundle_version = ? WHERE job_id = ?",
                (accuracy, len(data), version, job_id),
            )
        return version

    def latest_bundle(self, device_id: str):
        row = self._conn.execute(
            "SELECT version, data FROM bundles WHERE device_id = ?"
            " ORDER BY version DESC LIMIT 1",
            (device_id,),
        ).fetchone()
        return None if row is None else {"version": row[0], "data": row[1]}

    # --- events ---

    def append_event(
        self,
        device_id: str,
        ts: float,
        class_name: str,
        confidence: float,
        model_version: int,
    ) -> None:
        with self._tx():
            self._conn.execute(
                "INSERT INTO events (device_id, ts, class_name, confidence,"
                " model_version) VALUES (?, ?, ?, ?, ?)",
                (device_id, ts, class_name, confidence, model_version),
            )

    def get_history(
        self,
        device_id: str,
        ts_from: float | None = None,
        ts_to: float | None = None,
    ):
        query = (
            "SELECT ts, class_name, confidence, model_version FROM events"
            " WHERE device_id = ?"
        )
        args: list = [device_id]
        if ts_from is not None:
            query += " AND ts >= ?"
            args.append(ts_from)
        if ts_to is not None:
            query += " AND ts <= ?"
            args.append(ts_to)
        query += " ORDER BY ts, id"
        rows = self._conn.execute(query, args).fetchall()
        return [
            {"timestamp": r[0], "class_name": r[1], "confidence": r[2],
             "model_version": r[3]}
            for r in rows
        ]


class _Tx:
    """Serialize writers; commit on success, roll back on error."""

    def __init__(self, conn: sqlite3.Connection, lock: threading.RLock):
        self.conn = conn
        self.lock = lock

    def __enter__(self):
        self.lock.acquire()
        return self.conn

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.conn.commit()
            else:
                self.conn.rollback()
        finally:
            self.lock.release()
        return False
