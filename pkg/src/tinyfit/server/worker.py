"""Fine-tune job execution: personalize, compress, publish.

Jobs run on daemon threads, one active job per device (enforced at
creation). A failure of any stage marks the job failed and leaves the
device's published bundle untouched.
"""

from __future__ import annotations

import json
import logging
import threading

from .. import quant, twin
from ..bundle import serialize
from ..nn import TrainConfig, evaluate, load_checkpoint, personalize
from ..signal import ChannelStats, normalize_all
from .config import ServerConfig
from .store import Store

logger = logging.getLogger(__name__)


def load_stats(path: str) -> ChannelStats:
    with open(path) as fh:
        data = json.load(fh)
    return ChannelStats(mean=data["mean"], std=data["std"])


def save_stats(path: str, stats: ChannelStats) -> None:
    with open(path, "w") as fh:
        json.dump({"mean": stats.mean.tolist(), "std": stats.std.tolist()}, fh)


def execute_job(store: Store, config: ServerConfig, job_id: str, device_id: str) -> None:
    store.mark_job_running(job_id)
    try:
        raw_windows = store.device_windows(device_id)
        stats = load_stats(config.stats_path)
        pretrained = load_checkpoint(config.checkpoint_path)
        user_windows = normalize_all(raw_windows, stats)

        tune_cfg = TrainConfig(
            learning_rate=config.finetune_learning_rate,
            epochs=config.finetune_epochs,
            seed=config.seed,
        )
        tuned = personalize(
            pretrained,
            user_windows,
            examples_per_class=config.examples_per_class,
            config=tune_cfg,
        )
        accuracy, _ = evaluate(tuned, user_windows)

        calib = list(user_windows)
        if config.calibration_twin_path:
            pool, _ = twin.read_twin(config.calibration_twin_path)
            calib += normalize_all(
                quant.sample_calibration(pool, seed=config.seed), stats
            )

        device = store.get_device(device_id)
        next_version = device["bundle_version"] + 1
        bundle = quant.make_bundle(
            tuned,
            stats,
            calib,
            version=next_version,
            sparsity=config.sparsity,
        )
        data = serialize(bundle)
        version = store.publish_bundle(job_id, device_id, data, accuracy, next_version)
        logger.info(
            "job %s: device %s -> version %d (%d bytes, accuracy %.3f)",
            job_id, device_id, version, len(data), accuracy,
        )
    except Exception as exc:  # any stage failure must land in the job row
        logger.exception("job %s failed", job_id)
        store.mark_job_failed(job_id, f"{type(exc).__name__}: {exc}")


def start_job_thread(
    store: Store, config: ServerConfig, job_id: str, device_id: str
) -> threading.Thread:
    thread = threading.Thread(
        target=execute_job,
        args=(store, config, job_id, device_id),
        name=f"finetune-{job_id[:8]}",
        daemon=True,
    )
    thread.start()
    return thread
