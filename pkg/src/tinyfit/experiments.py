"""The evaluation protocol: generalized training, per-user personalization.

Reproduces the study design end to end: hold out 4 subjects, train on the
rest, measure the generalized model in the generalized setting (GS) and on
each held-out user (PS-GM), then fine-tune per user on 15 windows per
class and measure again on that user's remaining windows (PS-PM).
Averages run over exactly the 4 held-out users.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .nn import CnnModel, TrainConfig, evaluate, init_model, personalize, train
from .nn.training import sample_per_class
from .signal import (
    ChannelStats,
    DatasetSplit,
    Window,
    fit_channel_stats,
    normalize_all,
    slice_dataset,
)

DEFAULT_SLICE_SEED = 42
DEFAULT_TRAIN_SEED = 7


@dataclass(frozen=True)
class ExperimentConfig:
    slice_seed: int = DEFAULT_SLICE_SEED
    train_seed: int = DEFAULT_TRAIN_SEED
    epochs: int = 30
    finetune_epochs: int = 50
    examples_per_class: int = 15
    test_fraction: float = 0.2
    batch_size: int = 32
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-3


@dataclass
class UserResult:
    subject_id: str
    n_windows: int
    ps_gm_accuracy: float
    ps_pm_accuracy: float
    excluded_classes: list[str] = field(default_factory=list)


@dataclass
class ExperimentReport:
    dataset: str
    n_subjects: int
    n_classes: int
    gs_accuracy: float
    ps_gm_accuracy: float
    ps_pm_accuracy: float
    gs_to_ps_gm_relative: float
    ps_gm_to_ps_pm_relative: float
    users: list[UserResult]
    config: ExperimentConfig

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [
            f"dataset: {self.dataset}  ({self.n_subjects} subjects, "
            f"{self.n_classes} classes)",
            "",
            f"{'setting':<34}{'accuracy':>10}",
            f"{'GS  (generalized model, GS data)':<34}{self.gs_accuracy:>10.4f}",
            f"{'PS-GM (generalized model, 4 users)':<34}{self.ps_gm_accuracy:>10.4f}",
            f"{'PS-PM (personalized models)':<34}{self.ps_pm_accuracy:>10.4f}",
            "",
            f"GS -> PS-GM change: {100 * self.gs_to_ps_gm_relative:+.2f}%",
            f"PS-GM -> PS-PM change: {100 * self.ps_gm_to_ps_pm_relative:+.2f}%",
        ]
        for user in self.users:
            note = ""
            if user.excluded_classes:
                note = f"  (excluded: {', '.join(user.excluded_classes)})"
            lines.append(
                f"  user {user.subject_id}: GM {user.ps_gm_accuracy:.4f} -> "
                f"PM {user.ps_pm_accuracy:.4f} on {user.n_windows} windows{note}"
            )
        return "\n".join(lines)


def relative_delta(after: float, before: float) -> float:
    """(a - b) / b: the study's relative-change arithmetic."""
    return (after - before) / before


def split_generalized(
    windows: list[Window], test_fraction: float
) -> tuple[list[Window], list[Window]]:
    """Tail-holdout train/test split within each (subject, class) stream.

    The last test_fraction of each stream's windows is held out, with one
    boundary window dropped so no raw samples are shared across the split
    (consecutive windows overlap by half).
    """
    groups: dict[tuple[str, str], list[Window]] = {}
    for w in windows:
        groups.setdefault((w.subject_id, w.label), []).append(w)
    train_set: list[Window] = []
    test_set: list[Window] = []
    for key in sorted(groups):
        ws = groups[key]
        n_test = int(round(len(ws) * test_fraction))
        if n_test == 0:
            train_set.extend(ws)
            continue
        cut = len(ws) - n_test
        train_set.extend(ws[: max(0, cut - 1)])  # gap window dropped
        test_set.extend(ws[cut:])
    return train_set, test_set


def train_generalized(
    windows: list[Window], cfg: ExperimentConfig = ExperimentConfig()
) -> tuple[CnnModel, ChannelStats, float, DatasetSplit]:
    """Slice, fit stats, train on N-4 subjects, report GS accuracy."""
    split = slice_dataset(windows, cfg.slice_seed)
    train_windows, test_windows = split_generalized(
        split.generalized, cfg.test_fraction
    )
    stats = fit_channel_stats(train_windows)
    classes = sorted({w.label for w in split.generalized})

    model = init_model(classes, seed=cfg.train_seed)
    model, _ = train(
        model,
        normalize_all(train_windows, stats),
        TrainConfig(
            learning_rate=cfg.learning_rate,
            batch_size=cfg.batch_size,
            epochs=cfg.epochs,
            seed=cfg.train_seed,
        ),
    )
    gs_accuracy, _ = evaluate(model, normalize_all(test_windows, stats))
    return model, stats, gs_accuracy, split


def evaluate_user(
    model: CnnModel,
    stats: ChannelStats,
    user_windows: list[Window],
    subject_id: str,
    cfg: ExperimentConfig,
) -> UserResult:
    """PS-GM and PS-PM for one held-out user.

    Classes with fewer than examples_per_class windows are excluded from
    this user's protocol (both measurements) and reported.
    """
    by_class: dict[str, int] = {}
    for w in user_windows:
        by_class[w.label] = by_class.get(w.label, 0) + 1
    excluded = sorted(
        c for c, n in by_class.items() if n < cfg.examples_per_class
    )
    retained = [w for w in user_windows if w.label not in excluded]
    if len({w.label for w in retained}) < 2:
        raise ValueError(
            f"user {subject_id}: fewer than 2 classes with "
            f">= {cfg.examples_per_class} windows"
        )
    norm = normalize_all(retained, stats)

    ps_gm, _ = evaluate(model, norm)

    tune_cfg = TrainConfig(
        learning_rate=cfg.finetune_learning_rate,
        batch_size=cfg.batch_size,
        epochs=cfg.finetune_epochs,
        seed=cfg.train_seed,
    )
    sample, rest = sample_per_class(norm, cfg.examples_per_class, tune_cfg.seed)
    personal = personalize(
        model, sample, examples_per_class=cfg.examples_per_class, config=tune_cfg
    )
    ps_pm, _ = evaluate(personal, rest)

    return UserResult(
        subject_id=subject_id,
        n_windows=len(retained),
        ps_gm_accuracy=ps_gm,
        ps_pm_accuracy=ps_pm,
        excluded_classes=excluded,
    )


def evaluate_personalized(
    model: CnnModel,
    stats: ChannelStats,
    split: DatasetSplit,
    gs_accuracy: float,
    dataset: str,
    cfg: ExperimentConfig = ExperimentConfig(),
) -> ExperimentReport:
    users = [
        evaluate_user(model, stats, split.personalized[s], s, cfg)
        for s in sorted(split.personalized)
    ]
    ps_gm = float(np.mean([u.ps_gm_accuracy for u in users]))
    ps_pm = float(np.mean([u.ps_pm_accuracy for u in users]))
    all_subjects = split.generalized_subjects | split.personalized_subjects
    return ExperimentReport(
        dataset=dataset,
        n_subjects=len(all_subjects),
        n_classes=model.n_classes,
        gs_accuracy=gs_accuracy,
        ps_gm_accuracy=ps_gm,
        ps_pm_accuracy=ps_pm,
        gs_to_ps_gm_relative=relative_delta(ps_gm, gs_accuracy),
        ps_gm_to_ps_pm_relative=relative_delta(ps_pm, ps_gm),
        users=users,
        config=cfg,
    )


def run_experiment(
    windows: list[Window], dataset: str, cfg: ExperimentConfig = ExperimentConfig()
) -> tuple[ExperimentReport, CnnModel, ChannelStats, DatasetSplit]:
    model, stats, gs_accuracy, split = train_generalized(windows, cfg)
    report = evaluate_personalized(model, stats, split, gs_accuracy, dataset, cfg)
    return report, model, stats, split
