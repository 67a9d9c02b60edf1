"""Trainable 1D CNN for activity windows, written directly on numpy.

The production network is two valid-padded conv blocks (kernel 5, channel
widths 8 and 16, each followed by ReLU and max-pool 2), a 192-unit flatten,
a 32-unit ReLU dense layer, and a softmax head. Personalization freezes
everything except the head and fine-tunes it on 15 windows per class.
"""

from .model import (
    PARAM_KEYS,
    HEAD_KEYS,
    ArchSpec,
    CnnModel,
    forward,
    forward_batch,
    init_model,
    param_count,
    windows_to_array,
)
from .training import (
    TrainConfig,
    TrainHistory,
    evaluate,
    flatten_grads,
    loss_and_grads,
    personalize,
    train,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "PARAM_KEYS",
    "HEAD_KEYS",
    "ArchSpec",
    "CnnModel",
    "TrainConfig",
    "TrainHistory",
    "evaluate",
    "flatten_grads",
    "forward",
    "forward_batch",
    "init_model",
    "load_checkpoint",
    "loss_and_grads",
    "param_count",
    "personalize",
    "save_checkpoint",
    "train",
    "windows_to_array",
]
