"""Shared corpora and artifacts. Heavy fixtures are session-scoped and
lazy: they only build when a test actually asks for them."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

import rawgen
from tinyfit import datasets, quant, signal, synthetic
from tinyfit.bundle import serialize
from tinyfit.experiments import ExperimentConfig, run_experiment
from tinyfit.nn import save_checkpoint
from tinyfit.signal import Window, make_windows, normalize_all, resample
from tinyfit.twin import write_twin


def windows_from_recordings(recs) -> list[Window]:
    out = []
    for rec in recs:
        out.extend(make_windows(resample(rec)))
    return out


@pytest.fixture(scope="session")
def bandx_windows() -> list[Window]:
    return windows_from_recordings(synthetic.bandx_like_recordings(seed=0))


@pytest.fixture(scope="session")
def bandx_experiment(bandx_windows):
    """(report, model, stats, split) for the 16-subject synthetic corpus."""
    return run_experiment(bandx_windows, "bandx-sim", ExperimentConfig())


@pytest.fixture(scope="session")
def bandx_artifacts(tmp_path_factory, bandx_experiment) -> dict:
    """Checkpoint + stats + calibration TWIN + a v1 bundle, on disk."""
    report, model, stats, split = bandx_experiment
    root = tmp_path_factory.mktemp("bandx-artifacts")
    save_checkpoint(root / "model.tflt", model)
    (root / "stats.json").write_text(
        json.dumps({"mean": stats.mean.tolist(), "std": stats.std.tolist()})
    )
    write_twin(root / "generalized.twin", split.generalized)
    calib = normalize_all(
        quant.sample_calibration(split.generalized, seed=0), stats
    )
    bundle_bytes = serialize(quant.make_bundle(model, stats, calib, version=1))
    (root / "model.tbnd").write_bytes(bundle_bytes)
    return {
        "dir": root,
        "checkpoint": root / "model.tflt",
        "stats": root / "stats.json",
        "twin": root / "generalized.twin",
        "bundle": root / "model.tbnd",
        "bundle_bytes": bundle_bytes,
        "model": model,
        "stats_obj": stats,
        "split": split,
        "report": report,
    }


@pytest.fixture(scope="session")
def wisdm_raw_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("wisdm-raw")
    rawgen.write_wisdm(root)
    return root


@pytest.fixture(scope="session")
def pamap2_raw_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("pamap2-raw")
    rawgen.write_pamap2(root)
    return root


@pytest.fixture(scope="session")
def wisdm_windows(wisdm_raw_root) -> list[Window]:
    return windows_from_recordings(datasets.load_wisdm(wisdm_raw_root))


@pytest.fixture(scope="session")
def pamap2_windows(pamap2_raw_root) -> list[Window]:
    return windows_from_recordings(datasets.load_pamap2(pamap2_raw_root))


@pytest.fixture(scope="session")
def wisdm_experiment(wisdm_windows):
    return run_experiment(wisdm_windows, "wisdm", ExperimentConfig())


@pytest.fixture(scope="session")
def pamap2_experiment(pamap2_windows):
    return run_experiment(pamap2_windows, "pamap2", ExperimentConfig())


def make_window(
    value: float | np.ndarray = 0.0,
    subject: str = "s0",
    label: str | None = "walking",
) -> Window:
    data = np.broadcast_to(np.asarray(value, dtype=np.float64), (60, 6)).copy()
    return Window(data=data, subject_id=subject, label=label)


def make_recording(
    n: int,
    rate_hz: float = 20.0,
    subject: str = "s0",
    label: str = "walking",
    fill=None,
    seed: int = 0,
):
    t = np.arange(n) / rate_hz
    if fill is None:
        chans = np.random.default_rng(seed).normal(size=(n, 6))
    else:
        chans = np.full((n, 6), float(fill))
    samples = np.column_stack([t, chans])
    return signal.Recording(
        subject_id=subject, class_label=label, rate_hz=rate_hz, samples=samples
    )
