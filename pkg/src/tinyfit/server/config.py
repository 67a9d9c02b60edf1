"""Server configuration: persistence path plus the personalization recipe."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ServerConfig:
    db_path: str
    checkpoint_path: str
    stats_path: str
    calibration_twin_path: str | None = None
    examples_per_class: int = 15
    finetune_epochs: int = 50
    finetune_learning_rate: float = 1e-3
    seed: int = 7
    sparsity: float = 0.3
    host: str = "127.0.0.1"
    port: int = 8321

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        with open(path) as fh:
            data = json.load(fh)
        return cls(**data)
