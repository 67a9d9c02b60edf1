"""Command-line harness: ingest, train, evaluate, package, serve, simulate.

Every command is seeded and writes byte-deterministic artifacts; reports
come out both human-readable and as JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets, quant, synthetic, twin
from .bundle import MAX_BUNDLE_BYTES, serialize
from .errors import TinyFitError
from .experiments import (
    DEFAULT_SLICE_SEED,
    DEFAULT_TRAIN_SEED,
    ExperimentConfig,
    evaluate_personalized,
    train_generalized,
)
from .nn import load_checkpoint, save_checkpoint
from .runtime import MicroEngine
from .signal import Recording, make_windows, normalize_all, resample, slice_dataset
from .twin import read_twin, write_twin


def _ingest_recordings(dataset: str, path: str | None, seed: int) -> list[Recording]:
    if dataset == "wisdm":
        return datasets.load_wisdm(path)
    if dataset == "pamap2":
        return datasets.load_pamap2(path)
    if dataset == "synthetic":
        return synthetic.bandx_like_recordings(seed=seed)
    raise TinyFitError(f"unknown dataset {dataset!r}")


def cmd_ingest(args) -> int:
    recs = _ingest_recordings(args.dataset, args.path, args.seed)
    windows = []
    for rec in recs:
        windows.extend(make_windows(resample(rec)))
    subjects = sorted({w.subject_id for w in windows})
    classes = sorted({w.label for w in windows})
    write_twin(args.out, windows)
    print(f"ingested {args.dataset}: {len(subjects)} subjects, "
          f"{len(classes)} classes, {len(windows)} windows -> {args.out}")
    return 0


def cmd_train_generalized(args) -> int:
    windows, _ = read_twin(args.twin)
    cfg = ExperimentConfig(
        slice_seed=args.slice_seed, train_seed=args.seed, epochs=args.epochs
    )
    model, stats, gs_accuracy, _split = train_generalized(windows, cfg)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.tflt", model)
    (out / "stats.json").write_text(
        json.dumps({"mean": stats.mean.tolist(), "std": stats.std.tolist()}, indent=2)
    )
    (out / "train_report.json").write_text(
        json.dumps(
            {
                "twin": str(args.twin),
                "gs_accuracy": gs_accuracy,
                "classes": list(model.class_map),
                "slice_seed": cfg.slice_seed,
                "train_seed": cfg.train_seed,
                "epochs": cfg.epochs,
            },
            indent=2,
            sort_keys=True,
        )
    )
    print(f"GS accuracy: {gs_accuracy:.4f}  (checkpoint -> {out / 'model.tflt'})")
    return 0


def _load_stats(path: str | Path):
    from .signal import ChannelStats

    data = json.loads(Path(path).read_text())
    return ChannelStats(mean=data["mean"], std=data["std"])


def cmd_eval_personalized(args) -> int:
    model = load_checkpoint(args.checkpoint)
    stats_path = args.stats or Path(args.checkpoint).parent / "stats.json"
    stats = _load_stats(stats_path)
    windows, _ = read_twin(args.twin)
    cfg = ExperimentConfig(
        slice_seed=args.slice_seed,
        train_seed=args.seed,
        finetune_epochs=args.finetune_epochs,
    )
    split = slice_dataset(windows, cfg.slice_seed)

    gs_accuracy = json.loads(
        Path(args.train_report).read_text()
    )["gs_accuracy"] if args.train_report else float("nan")

    report = evaluate_personalized(
        model, stats, split, gs_accuracy, dataset=args.dataset, cfg=cfg
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.txt").write_text(report.table() + "\n")
    print(report.table())
    return 0


def cmd_package(args) -> int:
    model = load_checkpoint(args.checkpoint)
    stats_path = args.stats or Path(args.checkpoint).parent / "stats.json"
    stats = _load_stats(stats_path)
    windows, _ = read_twin(args.twin)
    generalized = slice_dataset(windows, args.slice_seed).generalized
    calib = normalize_all(
        quant.sample_calibration(generalized, seed=args.seed), stats
    )

    bundle = quant.make_bundle(
        model, stats, calib, version=args.version, sparsity=args.sparsity
    )
    data = serialize(bundle)
    if len(data) >= MAX_BUNDLE_BYTES:
        print(
            f"error: bundle is {len(data)} bytes, budget is {MAX_BUNDLE_BYTES}",
            file=sys.stderr,
        )
        return 1
    Path(args.out).write_bytes(data)

    engine = MicroEngine()
    engine.load(data)
    model_bytes, scratch_bytes, high_water = engine.arena_report()

    rng = np.random.default_rng(args.seed)
    probe = [w for w in windows[:: max(1, len(windows) // 64)]][:64]
    timings = []
    for i in range(args.latency_runs):
        w = probe[int(rng.integers(len(probe)))]
        t0 = time.perf_counter_ns()
        engine.infer(w.data)
        timings.append(time.perf_counter_ns() - t0)
    mean_ms = float(np.mean(timings)) / 1e6

    print(f"bundle: {len(data)} bytes (budget {MAX_BUNDLE_BYTES}) -> {args.out}")
    print(f"arena: model {model_bytes} B, scratch {scratch_bytes} B, "
          f"high water {high_water} B")
    print(f"latency: {mean_ms:.3f} ms mean over {args.latency_runs} runs, "
          f"{engine.mac_count} MACs per inference")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .server import ServerConfig, create_app

    config = ServerConfig.from_file(args.config)
    uvicorn.run(create_app(config), host=config.host, port=config.port)
    return 0


def cmd_simulate(args) -> int:
    from .devicesim import DeviceConfig, DeviceSimulator

    config = DeviceConfig.from_file(args.config)
    sim = DeviceSimulator(config)
    events = sim.run(max_device_seconds=args.duration)
    print(f"emitted {len(events)} inference events "
          f"(model version {sim.model_version})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinyfit",
        description="personalized activity recognition: data, training, "
        "compression, deployment",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw dataset -> TWIN windowed file")
    p.add_argument("--dataset", required=True, choices=["wisdm", "pamap2", "synthetic"])
    p.add_argument("--path", help="raw dataset root (unused for synthetic)")
    p.add_argument("--seed", type=int, default=0, help="synthetic generator seed")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train-generalized", help="train the pooled-user model")
    p.add_argument("--twin", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_TRAIN_SEED)
    p.add_argument("--slice-seed", type=int, default=DEFAULT_SLICE_SEED)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_train_generalized)

    p = sub.add_parser("eval-personalized", help="per-user fine-tuning study")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", help="defaults to stats.json next to the checkpoint")
    p.add_argument("--train-report", help="train_report.json for the GS accuracy")
    p.add_argument("--twin", required=True)
    p.add_argument("--dataset", default="dataset", help="tag for the report")
    p.add_argument("--seed", type=int, default=DEFAULT_TRAIN_SEED)
    p.add_argument("--slice-seed", type=int, default=DEFAULT_SLICE_SEED)
    p.add_argument("--finetune-epochs", type=int, default=50)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_eval_personalized)

    p = sub.add_parser("package", help="checkpoint -> deployable TBND bundle")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", help="defaults to stats.json next to the checkpoint")
    p.add_argument("--twin", required=True, help="calibration window source")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slice-seed", type=int, default=DEFAULT_SLICE_SEED)
    p.add_argument("--sparsity", type=float, default=quant.DEFAULT_SPARSITY)
    p.add_argument("--version", type=int, default=1)
    p.add_argument("--latency-runs", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_package)

    p = sub.add_parser("serve", help="run the cloud server")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("simulate", help="run the device simulator")
    p.add_argument("--config", required=True)
    p.add_argument("--duration", type=float, help="device seconds to run")
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except json.JSONDecodeError as exc:
        print(f"config error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return 2
    except TinyFitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
